#include "streamtal/error.hpp"
#include "streamtal/rng.hpp"
#include "streamtal/stream_core.hpp"

#include <doctest.h>

#include <filesystem>
#include <cstring>
#include <fstream>
#include <limits>

using namespace streamtal;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "streamtal_unit";
    fs::create_directories(dir);
    return dir / name;
}

FeatureStream random_stream(int n, int d, std::uint64_t seed) {
    Rng rng(seed);
    FeatureStream s;
    s.features.resize(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) s.features(i, j) = rng.normal();
    quantize_to_storage(s.features);
    return s;
}

SegmentPartition with_lengths(std::initializer_list<int> lengths, bool labeled = true) {
    SegmentPartition p;
    int start = 0, j = 0;
    for (int len : lengths) {
        Segment s{start, start + len, std::nullopt, {j++}};
        if (labeled) s.label = 0;
        p.segments.push_back(s);
        start += len;
    }
    return p;
}

}  // namespace

TEST_CASE("feature stream file round trip keeps the stored rows") {
    FeatureStream s;
    s.features.resize(3, 2);
    s.features << 1, 2, 3, 4, 5, 6;
    const auto path = scratch("small.fstr");
    write_feature_stream(path, s);
    const FeatureStream back = load_feature_stream(path);
    CHECK(back.features == s.features);
    CHECK(back.clip_frames == 16);
    CHECK(back.fps == doctest::Approx(25.0));
    CHECK(back.source_tag == "small.fstr");
}

TEST_CASE("seeded random streams round trip bit-exactly") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const FeatureStream s = random_stream(17, 5, seed);
        const auto path = scratch("rand.fstr");
        write_feature_stream(path, s);
        CHECK(load_feature_stream(path).features == s.features);
    }
}

TEST_CASE("malformed feature files are rejected with the matching error") {
    const FeatureStream s = random_stream(4, 3, 1);
    const auto path = scratch("bad.fstr");
    write_feature_stream(path, s);
    std::string bytes;
    {
        std::ifstream in(path, std::ios::binary);
        bytes.assign(std::istreambuf_iterator<char>(in), {});
    }
    auto write_bytes = [&](const std::string& b) {
        std::ofstream out(path, std::ios::binary);
        out << b;
    };

    SUBCASE("truncated payload") {
        write_bytes(bytes.substr(0, bytes.size() - 4));
        CHECK_THROWS_AS(load_feature_stream(path), IoError);
    }
    SUBCASE("bad magic") {
        std::string b = bytes;
        b[0] = 'X';
        write_bytes(b);
        CHECK_THROWS_AS(load_feature_stream(path), FormatError);
    }
    SUBCASE("bad version") {
        std::string b = bytes;
        b[4] = 9;
        write_bytes(b);
        CHECK_THROWS_AS(load_feature_stream(path), FormatError);
    }
    SUBCASE("non-finite value") {
        std::string b = bytes;
        const float nan = std::numeric_limits<float>::quiet_NaN();
        std::memcpy(&b[b.size() - 4], &nan, 4);
        write_bytes(b);
        CHECK_THROWS_AS(load_feature_stream(path), ValidationError);
    }
    SUBCASE("missing file") { CHECK_THROWS_AS(load_feature_stream(scratch("nope.fstr")), IoError); }
}

TEST_CASE("resample index map follows floor(t * Ti / T)") {
    CHECK(resample_index_map(4, 4) == std::vector<int>{0, 1, 2, 3});
    CHECK(resample_index_map(4, 2) == std::vector<int>{0, 2});
    CHECK(resample_index_map(2, 4) == std::vector<int>{0, 0, 1, 1});
    CHECK_THROWS_AS(resample_index_map(4, 0), ValidationError);
}

TEST_CASE("resampled rows are the mapped source rows") {
    const FeatureStream s = random_stream(13, 4, 3);
    for (int target : {1, 5, 13, 29}) {
        const ResampledInput r = resample_to_length(s.features, target);
        REQUIRE(r.input.rows() == target);
        for (int t = 0; t < target; ++t) {
            CHECK(r.index_map[t] >= 0);
            CHECK(r.index_map[t] < 13);
            if (t > 0) CHECK(r.index_map[t] >= r.index_map[t - 1]);
            CHECK(r.input.row(t) == s.features.row(r.index_map[t]));
        }
        CHECK(resample_to_length(s.features, target).input == r.input);
    }
}

TEST_CASE("median segment length uses the lower median") {
    CHECK(median_segment_length(with_lengths({50, 50, 50}), true) == 50);
    CHECK(median_segment_length(with_lengths({10, 20, 30, 100}), true) == 20);
    CHECK(median_segment_length(with_lengths({25}), true) == 25);
    CHECK(median_segment_length(with_lengths({30, 10, 100, 20}), true) == 20);
    CHECK_THROWS_AS(median_segment_length(with_lengths({5, 5}, false), true), ValidationError);
    CHECK(median_segment_length(with_lengths({5, 7}, false), false) == 5);
}

TEST_CASE("partition validation catches gaps, overlaps and bad origins") {
    SegmentPartition p = with_lengths({3, 4, 2});
    CHECK_NOTHROW(p.validate_covers(9));
    CHECK_THROWS_AS(p.validate_covers(10), ValidationError);

    SegmentPartition gap = p;
    gap.segments[1].start_clip = 4;
    CHECK_THROWS_AS(gap.validate(), ValidationError);

    SegmentPartition empty_origin = p;
    empty_origin.segments[0].origin.clear();
    CHECK_THROWS_AS(empty_origin.validate(), ValidationError);

    SegmentPartition skipped = p;
    skipped.segments[0].origin = {0, 2};
    CHECK_THROWS_AS(skipped.validate(), ValidationError);

    SegmentPartition zero_length = p;
    zero_length.segments[2].start_clip = zero_length.segments[2].end_clip;
    zero_length.segments[1].end_clip = zero_length.segments[2].end_clip;
    CHECK_THROWS(zero_length.validate());
}

TEST_CASE("ground truth and weak label csv round trip") {
    const std::vector<GtInterval> gt{{0, 5, 1}, {9, 12, 0}};
    write_ground_truth(scratch("gt.csv"), gt);
    CHECK(load_ground_truth(scratch("gt.csv")) == gt);

    const std::vector<WeakLabel> labels{{0, 2}, {4, 1}};
    write_weak_labels(scratch("wl.csv"), labels);
    CHECK(load_weak_labels(scratch("wl.csv")) == labels);

    {
        std::ofstream out(scratch("bad_gt.csv"));
        out << "start,end,class\n0,1,0\n";
    }
    CHECK_THROWS_AS(load_ground_truth(scratch("bad_gt.csv")), FormatError);
    {
        std::ofstream out(scratch("bad_gt2.csv"));
        out << "start_clip,end_clip,class\n0,x,0\n";
    }
    CHECK_THROWS_AS(load_ground_truth(scratch("bad_gt2.csv")), FormatError);
}

TEST_CASE("stream validation rejects empty and non-finite features") {
    FeatureStream s;
    CHECK_THROWS_AS(s.validate(), ValidationError);
    s.features = Matrix::Ones(2, 2);
    CHECK_NOTHROW(s.validate());
    s.features(1, 1) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(s.validate(), ValidationError);
}
