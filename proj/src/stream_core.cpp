#include "streamtal/stream_core.hpp"

#include "binary_io.hpp"
#include "csv.hpp"
#include "streamtal/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace streamtal {

namespace {
constexpr char kStreamMagic[5] = "FSTR";
constexpr std::uint32_t kStreamVersion = 1;
}  // namespace

void FeatureStream::validate() const {
    if (features.rows() < 1 || features.cols() < 1) {
        throw ValidationError("feature stream must have N >= 1 and D1 >= 1");
    }
    if (!features.allFinite()) throw ValidationError("feature stream contains non-finite values");
    if (clip_frames == 0) throw ValidationError("clip_frames must be positive");
    if (!(fps > 0.0) || !std::isfinite(fps)) throw ValidationError("fps must be positive");
}

void SegmentPartition::validate() const {
    for (std::size_t j = 0; j < segments.size(); ++j) {
        const Segment& s = segments[j];
        if (s.start_clip >= s.end_clip) {
            throw ValidationError("segment " + std::to_string(j) + " is empty or inverted");
        }
        if (s.origin.empty()) throw ValidationError("segment " + std::to_string(j) + " has no origin");
        for (std::size_t k = 1; k < s.origin.size(); ++k) {
            if (s.origin[k] != s.origin[k - 1] + 1) {
                throw ValidationError("segment " + std::to_string(j) + " origin is not consecutive");
            }
        }
        if (j + 1 < segments.size() && s.end_clip != segments[j + 1].start_clip) {
            throw ValidationError("gap or overlap after segment " + std::to_string(j));
        }
    }
}

void SegmentPartition::validate_covers(int num_clips) const {
    validate();
    if (segments.empty() || begin_clip() != 0 || end_clip() != num_clips) {
        throw ValidationError("partition does not cover [0, " + std::to_string(num_clips) + ")");
    }
}

void quantize_to_storage(Matrix& features) {
    features = features.unaryExpr([](double v) { return static_cast<double>(static_cast<float>(v)); });
}

FeatureStream load_feature_stream(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    detail::expect_magic(in, kStreamMagic);
    const auto version = detail::get_uint<std::uint32_t>(in, "version");
    if (version != kStreamVersion) {
        throw FormatError("unsupported feature stream version " + std::to_string(version));
    }
    const auto n = detail::get_uint<std::uint64_t>(in, "N");
    const auto d1 = detail::get_uint<std::uint32_t>(in, "D1");
    FeatureStream stream;
    stream.clip_frames = detail::get_uint<std::uint32_t>(in, "clip_frames");
    stream.fps = detail::get_f32(in, "fps");
    if (n == 0 || d1 == 0) throw ValidationError("feature stream must have N >= 1 and D1 >= 1");

    // Check the payload size before allocating so a corrupt N cannot trigger a huge allocation.
    const auto header_end = in.tellg();
    in.seekg(0, std::ios::end);
    const auto payload = static_cast<std::uint64_t>(in.tellg() - header_end);
    in.seekg(header_end);
    if (payload / 4 / d1 < n) {
        throw IoError(path.string() + ": payload holds fewer than the declared " + std::to_string(n) + " rows");
    }

    stream.features.resize(static_cast<Eigen::Index>(n), d1);
    for (Eigen::Index r = 0; r < stream.features.rows(); ++r) {
        for (Eigen::Index c = 0; c < stream.features.cols(); ++c) {
            stream.features(r, c) = detail::get_f32(in, "feature payload");
        }
    }
    stream.source_tag = path.filename().string();
    stream.validate();
    return stream;
}

void write_feature_stream(const std::filesystem::path& path, const FeatureStream& stream) {
    stream.validate();
    auto out = detail::open_for_write(path);
    out.write(kStreamMagic, 4);
    detail::put_uint<std::uint32_t>(out, kStreamVersion);
    detail::put_uint<std::uint64_t>(out, static_cast<std::uint64_t>(stream.features.rows()));
    detail::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(stream.features.cols()));
    detail::put_uint<std::uint32_t>(out, stream.clip_frames);
    detail::put_f32(out, static_cast<float>(stream.fps));
    for (Eigen::Index r = 0; r < stream.features.rows(); ++r) {
        for (Eigen::Index c = 0; c < stream.features.cols(); ++c) {
            detail::put_f32(out, static_cast<float>(stream.features(r, c)));
        }
    }
    if (!out) throw IoError("failed writing " + path.string());
}

std::vector<GtInterval> load_ground_truth(const std::filesystem::path& path) {
    detail::CsvReader reader(path, "start_clip,end_clip,class");
    std::vector<GtInterval> gt;
    std::vector<std::string> f;
    while (reader.next(f)) {
        reader.expect_fields(f, 3);
        GtInterval g{reader.to_int(f[0]), reader.to_int(f[1]), reader.to_int(f[2])};
        if (g.start_clip >= g.end_clip || g.start_clip < 0 || g.label < 0) {
            throw ValidationError(path.string() + ": invalid ground-truth interval");
        }
        gt.push_back(g);
    }
    return gt;
}

void write_ground_truth(const std::filesystem::path& path, const std::vector<GtInterval>& gt) {
    auto out = detail::open_for_write(path);
    out << "start_clip,end_clip,class\n";
    for (const auto& g : gt) out << g.start_clip << ',' << g.end_clip << ',' << g.label << '\n';
}

std::vector<WeakLabel> load_weak_labels(const std::filesystem::path& path) {
    detail::CsvReader reader(path, "segment_index,class");
    std::vector<WeakLabel> labels;
    std::vector<std::string> f;
    while (reader.next(f)) {
        reader.expect_fields(f, 2);
        labels.push_back({reader.to_int(f[0]), reader.to_int(f[1])});
    }
    return labels;
}

void write_weak_labels(const std::filesystem::path& path, const std::vector<WeakLabel>& labels) {
    auto out = detail::open_for_write(path);
    out << "segment_index,class\n";
    for (const auto& l : labels) out << l.segment_index << ',' << l.label << '\n';
}

std::vector<int> resample_index_map(int source_length, int target_length) {
    if (target_length < 1) throw ValidationError("resample target length must be >= 1");
    if (source_length < 1) throw ValidationError("cannot resample an empty segment");
    std::vector<int> map(static_cast<std::size_t>(target_length));
    for (int t = 0; t < target_length; ++t) {
        map[t] = static_cast<int>((static_cast<std::int64_t>(t) * source_length) / target_length);
    }
    return map;
}

ResampledInput resample_to_length(const MatrixRef& segment_features, int target_length) {
    ResampledInput out;
    out.index_map = resample_index_map(static_cast<int>(segment_features.rows()), target_length);
    out.input.resize(target_length, segment_features.cols());
    for (int t = 0; t < target_length; ++t) out.input.row(t) = segment_features.row(out.index_map[t]);
    return out;
}

int median_segment_length(const SegmentPartition& partition, bool labeled_only) {
    std::vector<int> lengths;
    for (const auto& s : partition.segments) {
        if (!labeled_only || s.label.has_value()) lengths.push_back(s.length());
    }
    if (lengths.empty()) throw ValidationError("median_segment_length: no segments selected");
    std::sort(lengths.begin(), lengths.end());
    return lengths[(lengths.size() - 1) / 2];
}

}  // namespace streamtal
