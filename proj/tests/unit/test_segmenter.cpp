#include "streamtal/error.hpp"
#include "streamtal/segmenter.hpp"

#include <doctest.h>

#include <cmath>
#include <map>

using namespace streamtal;

namespace {

FeatureStream stream_of(const Matrix& rows) {
    FeatureStream s;
    s.features = rows;
    return s;
}

FeatureStream random_stream(int n, int d, std::uint64_t seed) {
    Rng rng(seed);
    Matrix x(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) x(i, j) = rng.normal();
    return stream_of(x);
}

SegmentPartition labeled(const FeatureStream& s, int to, std::vector<int> labels) {
    SegmentPartition p = divide_uniform(s, to);
    REQUIRE(p.size() == labels.size());
    for (std::size_t j = 0; j < p.size(); ++j) p[j].label = labels[j];
    return p;
}

// Two-channel model: E = relu(x), actionness = sigmoid(E[:,0]).
TalModel channel_model() {
    TalModel m = zero_model({2, 2, 2, 2, 3});
    m.params.embed_w = Matrix::Identity(2, 2);
    m.params.conv1_w[1] = Matrix::Identity(2, 2);
    m.params.conv2_w[1] = Matrix::Zero(2, 2);
    m.params.conv2_w[1](0, 0) = 1.0;
    return m;
}

Matrix blocks(std::initializer_list<std::pair<RowVector, int>> parts) {
    int n = 0;
    for (const auto& [row, len] : parts) n += len;
    Matrix x(n, parts.begin()->first.size());
    int t = 0;
    for (const auto& [row, len] : parts)
        for (int k = 0; k < len; ++k) x.row(t++) = row;
    return x;
}

RowVector row2(double a, double b) {
    RowVector r(2);
    r << a, b;
    return r;
}

// Seeded model whose embeddings stay off zero, so contrast scores are defined.
TalModel biased_model(const ModelDims& d, std::uint64_t seed) {
    TalModel m = init_model(d, seed);
    m.params.embed_b.array() += 3.0;
    return m;
}

// Sweep written from the rule with every score recomputed from scratch.
SegmentPartition naive_sweep(const SegmentPartition& p, const SegmentScorer& score) {
    std::vector<Segment> segs = p.segments;
    SegmentPartition out;
    std::size_t i = 0;
    while (i < segs.size()) {
        Segment prev = segs[i];
        std::size_t j = i + 1;
        while (j < segs.size() && segs[j].label == prev.label) {
            const double a = score(prev.start_clip, prev.end_clip);
            const double b = score(segs[j].start_clip, segs[j].end_clip);
            const double m = score(prev.start_clip, segs[j].end_clip);
            if (!((a + b) / 2.0 > m)) break;
            prev.end_clip = segs[j].end_clip;
            prev.origin.insert(prev.origin.end(), segs[j].origin.begin(), segs[j].origin.end());
            ++j;
        }
        out.segments.push_back(prev);
        i = j;
    }
    return out;
}

bool same_partition(const SegmentPartition& a, const SegmentPartition& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t j = 0; j < a.size(); ++j) {
        if (a[j].start_clip != b[j].start_clip || a[j].end_clip != b[j].end_clip || a[j].label != b[j].label ||
            a[j].origin != b[j].origin) {
            return false;
        }
    }
    return true;
}

// Every output segment is a union of consecutive inputs with one label.
void check_coarsening(const SegmentPartition& in, const SegmentPartition& out) {
    out.validate();
    CHECK(out.begin_clip() == in.begin_clip());
    CHECK(out.end_clip() == in.end_clip());
    for (const auto& s : out.segments) {
        for (int o : s.origin) {
            CHECK(in[o].label == s.label);
            CHECK(in[o].start_clip >= s.start_clip);
            CHECK(in[o].end_clip <= s.end_clip);
        }
        CHECK(in[s.origin.front()].start_clip == s.start_clip);
        CHECK(in[s.origin.back()].end_clip == s.end_clip);
    }
}

std::vector<int> random_labels(std::size_t n, int classes, Rng& rng) {
    std::vector<int> l(n);
    // Runs of repeated labels so merges have something to do.
    int cur = 0;
    for (auto& x : l) {
        if (rng.coin(0.35)) cur = static_cast<int>(rng.uniform_int(0, classes - 1));
        x = cur;
    }
    return l;
}

}  // namespace

TEST_CASE("uniform division with remainder") {
    const auto p = divide_uniform(random_stream(120, 2, 0), 50);
    REQUIRE(p.size() == 3);
    CHECK(p[0].start_clip == 0);
    CHECK(p[1].start_clip == 50);
    CHECK(p[2].end_clip == 120);
    CHECK(p[2].origin == std::vector<int>{2});
    CHECK(divide_uniform(random_stream(50, 2, 0), 50).size() == 1);
    const auto short_p = divide_uniform(random_stream(49, 2, 0), 50);
    REQUIRE(short_p.size() == 1);
    CHECK(short_p[0].length() == 49);
    CHECK_THROWS_AS(divide_uniform(random_stream(10, 2, 0), 0), ValidationError);
}

TEST_CASE("representative clip is the actionness argmax") {
    const ModelDims d{2, 2, 2, 2, 3};
    CHECK(representative_clip(random_stream(5, 2, 0).features, zero_model(d)) == 0);
    CHECK(representative_clip(random_stream(1, 2, 0).features, init_model(d, 1)) == 0);

    // actionness = sigmoid(x0 - 5), so x0 = 5 + logit(a) reproduces a.
    TalModel m = channel_model();
    m.params.conv2_b[0] = -5.0;
    auto logit = [](double a) { return std::log(a / (1 - a)); };
    Matrix x(3, 2);
    x << 5 + logit(0.1), 0, 5 + logit(0.9), 0, 5 + logit(0.3), 0;
    const ModelOutput out = forward(m, x);
    CHECK(out.actionness[0] == doctest::Approx(0.1));
    CHECK(out.actionness[1] == doctest::Approx(0.9));
    CHECK(representative_clip(x, m) == 1);
}

TEST_CASE("contrast score special values") {
    const TalModel m = channel_model();
    SUBCASE("mean anchors equal") {
        const Matrix x = blocks({{row2(1.0, 1.0), 7}});
        CHECK(contrast_score(x, m, 5) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("orthogonal anchors") {
        // k = max(1, 7 / 5) = 1: the action clip against a background clip.
        const Matrix x = blocks({{row2(0.0, 1.0), 3}, {row2(1.0, 0.0), 1}, {row2(0.0, 1.0), 3}});
        CHECK(contrast_score(x, m, 5) == doctest::Approx(0.0));
    }
    SUBCASE("zero embedding") {
        const Matrix x = blocks({{row2(-1.0, -1.0), 4}});
        CHECK_THROWS_AS(contrast_score(x, m, 5), ValidationError);
    }
}

TEST_CASE("contrast score is bounded and depends on the input only through E") {
    const ModelDims d{4, 4, 4, 3, 3};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        TalModel m = biased_model(d, seed);
        const FeatureStream s = random_stream(9, 4, seed + 1);
        const double c = contrast_score(s.features, m, 5);
        CHECK(c >= -1.0);
        CHECK(c <= 1.0);

        // With an identity embedding, moving negative entries further down leaves relu(x) unchanged.
        m.params.embed_w = Matrix::Identity(4, 4);
        m.params.embed_b.setZero();
        Matrix x = s.features.cwiseAbs();
        x.col(1) = -x.col(1);
        Matrix y = x;
        y.col(1) *= 7.0;
        CHECK(contrast_score(x, m, 5) == contrast_score(y, m, 5));
    }
}

TEST_CASE("contrast merge with constructed scores") {
    const FeatureStream s = random_stream(30, 2, 0);
    SUBCASE("distinct neighbor labels never merge") {
        const auto p = labeled(s, 10, {0, 1, 0});
        const auto out = csm_pass(p, [](int, int) { return 0.0; });
        CHECK(same_partition(out, p));
    }
    SUBCASE("mean above merged score merges") {
        const auto p = labeled(s, 15, {2, 2});
        auto score = [](int a, int b) { return (a == 0 && b == 15) ? 0.9 : (a == 15 ? 0.8 : 0.7); };
        const auto out = csm_pass(p, score);
        REQUIRE(out.size() == 1);
        CHECK(out[0].origin == std::vector<int>{0, 1});
        CHECK(out[0].label == 2);
    }
    SUBCASE("ties do not merge") {
        const auto p = labeled(s, 15, {2, 2});
        CHECK(csm_pass(p, [](int, int) { return 0.5; }).size() == 2);
    }
    SUBCASE("unlabeled input is rejected") {
        auto p = labeled(s, 10, {0, 0, 0});
        p[1].label.reset();
        CHECK_THROWS_AS(csm_pass(p, [](int, int) { return 0.0; }), ValidationError);
        CHECK_THROWS_AS(merge_all(p), ValidationError);
    }
}

TEST_CASE("contrast merge chains three same-label segments in one pass") {
    // action | background | action: every merge creates explicit anchors and lowers the score.
    const FeatureStream s = stream_of(blocks({{row2(1, 0), 5}, {row2(0, 1), 5}, {row2(1, 0), 5}}));
    const TalModel m = channel_model();
    const auto p = labeled(s, 5, {1, 1, 1});
    MergeConfig cfg;
    const auto scorer = model_scorer(s, m, cfg.s);
    CHECK(scorer(0, 5) == doctest::Approx(1.0));
    CHECK(scorer(5, 10) == doctest::Approx(1.0));
    CHECK(scorer(0, 10) == doctest::Approx(0.0));
    CHECK(scorer(0, 15) == doctest::Approx(0.0));
    const auto out = csm_pass(p, s, m, cfg);
    CHECK(out.size() == 1);
    CHECK(same_partition(out, naive_sweep(p, scorer)));
}

TEST_CASE("contrast merge matches the naive sweep on random models") {
    Rng rng(5);
    const ModelDims d{3, 4, 4, 3, 3};
    int merges = 0;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const FeatureStream s = random_stream(60, 3, seed);
        const TalModel m = biased_model(d, seed);
        const int to = static_cast<int>(rng.uniform_int(2, 6));
        SegmentPartition p = divide_uniform(s, to);
        const auto labels = random_labels(p.size(), 3, rng);
        for (std::size_t j = 0; j < p.size(); ++j) p[j].label = labels[j];
        const auto scorer = model_scorer(s, m, 5);
        const auto out = csm_pass(p, scorer);
        CHECK(same_partition(out, naive_sweep(p, scorer)));
        check_coarsening(p, out);
        CHECK(out.size() <= p.size());
        merges += static_cast<int>(p.size() - out.size());

        // Each contrast-merge segment sits inside one merge-all segment.
        const auto all = merge_all(p);
        for (const auto& seg : out.segments) {
            int owners = 0;
            for (const auto& a : all.segments) owners += (a.start_clip <= seg.start_clip && seg.end_clip <= a.end_clip);
            CHECK(owners == 1);
        }
    }
    CHECK(merges > 0);
}

TEST_CASE("merge all coalesces label runs and is idempotent") {
    const FeatureStream s = random_stream(30, 2, 0);
    const auto two = merge_all(labeled(s, 10, {0, 0, 1}));
    REQUIRE(two.size() == 2);
    CHECK(two[0].origin == std::vector<int>{0, 1});
    CHECK(merge_all(labeled(s, 10, {3, 3, 3})).size() == 1);

    Rng rng(1);
    for (int trial = 0; trial < 30; ++trial) {
        SegmentPartition p = divide_uniform(random_stream(50, 2, trial), 3);
        const auto labels = random_labels(p.size(), 3, rng);
        for (std::size_t j = 0; j < p.size(); ++j) p[j].label = labels[j];
        const auto once = merge_all(p);
        check_coarsening(p, once);
        CHECK(same_partition(merge_all(once), once));
        for (std::size_t j = 1; j < once.size(); ++j) CHECK(once[j].label != once[j - 1].label);
    }
}

TEST_CASE("random merge groups within label runs") {
    const FeatureStream s = random_stream(200, 2, 0);
    SegmentPartition single = labeled(random_stream(10, 2, 0), 5, {0, 1});
    Rng r0(0);
    CHECK(same_partition(random_merge(single, r0), single));

    Rng rng(2);
    SegmentPartition p = divide_uniform(s, 2);
    const auto labels = random_labels(p.size(), 2, rng);
    for (std::size_t j = 0; j < p.size(); ++j) p[j].label = labels[j];
    Rng a(7), b(7);
    const auto out_a = random_merge(p, a);
    CHECK(same_partition(out_a, random_merge(p, b)));
    check_coarsening(p, out_a);

    // Internal boundaries survive with probability one half.
    int internal = 0, kept = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng r(seed);
        const auto out = random_merge(p, r);
        std::vector<bool> starts(static_cast<std::size_t>(s.num_clips()), false);
        for (const auto& seg : out.segments) starts[seg.start_clip] = true;
        for (std::size_t j = 1; j < p.size(); ++j) {
            if (p[j].label != p[j - 1].label) continue;
            ++internal;
            kept += starts[p[j].start_clip];
        }
    }
    const double rate = static_cast<double>(kept) / internal;
    CHECK(rate > 0.45);
    CHECK(rate < 0.55);
}

TEST_CASE("split point is the least similar consecutive pair") {
    const TalModel m = channel_model();
    const Matrix x = blocks({{row2(1, 0.05), 6}, {row2(0.05, 1), 6}});
    CHECK(split_point(x, m) == 6);

    const ModelDims d{3, 4, 4, 3, 3};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const TalModel r = biased_model(d, seed);
        const FeatureStream s = random_stream(10, 3, seed + 7);
        const ModelOutput out = forward(r, s.features);
        int best = -1;
        double best_sim = 0.0;
        for (int j = 1; j < 10; ++j) {
            const double na = out.embed.row(j - 1).norm(), nb = out.embed.row(j).norm();
            const double sim = (na > 0 && nb > 0) ? out.embed.row(j - 1).dot(out.embed.row(j)) / (na * nb) : 0.0;
            if (best < 0 || sim < best_sim) {
                best = j;
                best_sim = sim;
            }
        }
        CHECK(split_point(s.features, r) == best);
    }
    CHECK_THROWS_AS(split_point(x.topRows(1), m), ValidationError);
}

TEST_CASE("split pass follows the split rule and preserves coverage") {
    MergeConfig cfg;
    cfg.strategy = MergeStrategy::ContrastMergeSplit;
    cfg.original_length = 4;

    SUBCASE("single clips and homogeneous segments stay whole") {
        const TalModel m = channel_model();
        const FeatureStream s = stream_of(blocks({{row2(1, 1), 1}, {row2(0.5, 1), 8}}));
        SegmentPartition p;
        p.segments = {{0, 1, 0, {0}}, {1, 9, 0, {0, 1, 2}}};
        const auto out = csms_split_pass(p, s, m, cfg);
        CHECK(same_partition(out, p));
    }
    SUBCASE("random models against the rule") {
        const ModelDims d{3, 4, 4, 3, 3};
        int splits = 0;
        for (std::uint64_t seed = 0; seed < 40; ++seed) {
            const TalModel m = biased_model(d, seed);
            const FeatureStream s = random_stream(48, 3, seed + 3);
            const SegmentPartition p{{{0, 16, 1, {0, 1, 2, 3}}, {16, 19, 1, {4}}, {19, 48, 1, {4, 5, 6, 7, 8, 9, 10, 11}}}};
            const auto out = csms_split_pass(p, s, m, cfg);
            out.validate_covers(48);
            std::size_t k = 0;
            for (const auto& seg : p.segments) {
                const auto rows = segment_rows(s, seg);
                const int at = split_point(rows, m);
                const double whole = contrast_score(rows, m, cfg.s);
                const double mean = (contrast_score(rows.topRows(at), m, cfg.s) +
                                     contrast_score(rows.bottomRows(seg.length() - at), m, cfg.s)) / 2.0;
                if (mean < whole) {
                    ++splits;
                    REQUIRE(k + 1 < out.size());
                    CHECK(out[k].start_clip == seg.start_clip);
                    CHECK(out[k].end_clip == seg.start_clip + at);
                    CHECK(out[k + 1].end_clip == seg.end_clip);
                    CHECK(out[k].origin.front() == out[k].start_clip / 4);
                    CHECK(out[k].origin.back() == (out[k].end_clip - 1) / 4);
                    CHECK(out[k + 1].origin.front() == out[k + 1].start_clip / 4);
                    CHECK(out[k].label == seg.label);
                    k += 2;
                } else {
                    CHECK(out[k].start_clip == seg.start_clip);
                    CHECK(out[k].end_clip == seg.end_clip);
                    k += 1;
                }
            }
            CHECK(k == out.size());
        }
        CHECK(splits > 0);
    }
}

TEST_CASE("labeled runs are processed independently of unlabeled segments") {
    const FeatureStream s = random_stream(40, 2, 0);
    SegmentPartition p = labeled(s, 5, {0, 0, 0, 0, 1, 1, 0, 0});
    p[2].label.reset();
    const auto out = for_each_labeled_run(p, merge_all);
    out.validate_covers(40);
    REQUIRE(out.size() == 5);
    CHECK(out[0].origin == std::vector<int>{0, 1});
    CHECK(!out[1].label.has_value());
    CHECK(out[1].origin == std::vector<int>{2});
    CHECK(out[2].origin == std::vector<int>{3});
    CHECK(out[3].origin == std::vector<int>{4, 5});
    CHECK(out[4].origin == std::vector<int>{6, 7});
}

TEST_CASE("merge config validation and strategy names") {
    for (const char* name : {"wm", "rm", "ma", "csm", "csms"}) CHECK(to_string(parse_merge_strategy(name)) == name);
    CHECK_THROWS_AS(parse_merge_strategy("all"), ConfigError);
    MergeConfig cfg;
    cfg.s = 0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg.s = 5;
    cfg.strategy = MergeStrategy::ContrastMergeSplit;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
}
