#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace streamtal {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using MatrixRef = Eigen::Ref<const Matrix>;

/// A long stream of clip-level feature vectors (one row per clip).
struct FeatureStream {
    Matrix features;
    std::uint32_t clip_frames = 16;
    double fps = 25.0;
    std::string source_tag;

    int num_clips() const { return static_cast<int>(features.rows()); }
    int dim() const { return static_cast<int>(features.cols()); }

    // Throws ValidationError on empty shape or non-finite entries.
    void validate() const;
};

/// Half-open clip range [start_clip, end_clip) with an optional weak label.
///
/// `origin` lists the uniformly divided segments this segment was built
/// from. It is always nonempty and holds consecutive increasing indices.
/// Segments produced by splitting keep the indices of every original
/// segment their clip range overlaps, so two split children may share one.
struct Segment {
    int start_clip = 0;
    int end_clip = 0;
    std::optional<int> label;
    std::vector<int> origin;

    int length() const { return end_clip - start_clip; }
    bool contains(int clip) const { return clip >= start_clip && clip < end_clip; }
};

/// Ordered, gapless run of segments.
///
/// A partition of the whole stream covers [0, N); the merge routines also
/// accept sub-partitions covering a contiguous [begin, end).
struct SegmentPartition {
    std::vector<Segment> segments;

    std::size_t size() const { return segments.size(); }
    bool empty() const { return segments.empty(); }
    int begin_clip() const { return segments.empty() ? 0 : segments.front().start_clip; }
    int end_clip() const { return segments.empty() ? 0 : segments.back().end_clip; }
    int total_clips() const { return end_clip() - begin_clip(); }

    const Segment& operator[](std::size_t i) const { return segments[i]; }
    Segment& operator[](std::size_t i) { return segments[i]; }

    // Ordering, gaplessness, and per-segment invariants.
    void validate() const;
    // validate() plus coverage of exactly [0, num_clips).
    void validate_covers(int num_clips) const;
};

/// Fixed-length model input built from a variable-length segment.
struct ResampledInput {
    Matrix input;
    std::vector<int> index_map;
};

/// Ground-truth action instance, clip units, end exclusive.
struct GtInterval {
    int start_clip = 0;
    int end_clip = 0;
    int label = 0;

    bool operator==(const GtInterval&) const = default;
};

/// Weak label attached to one original segment.
struct WeakLabel {
    int segment_index = 0;
    int label = 0;

    bool operator==(const WeakLabel&) const = default;
};

FeatureStream load_feature_stream(const std::filesystem::path& path);
void write_feature_stream(const std::filesystem::path& path, const FeatureStream& stream);

// Rounds every entry through float32, the on-disk precision.
void quantize_to_storage(Matrix& features);

std::vector<GtInterval> load_ground_truth(const std::filesystem::path& path);
void write_ground_truth(const std::filesystem::path& path, const std::vector<GtInterval>& gt);

std::vector<WeakLabel> load_weak_labels(const std::filesystem::path& path);
void write_weak_labels(const std::filesystem::path& path, const std::vector<WeakLabel>& labels);

/// Index map floor(t * T_i / target) for t in [0, target).
std::vector<int> resample_index_map(int source_length, int target_length);

ResampledInput resample_to_length(const MatrixRef& segment_features, int target_length);

/// Lower median of segment lengths, optionally restricted to labeled segments.
int median_segment_length(const SegmentPartition& partition, bool labeled_only);

/// Row block of the stream covered by `segment`.
inline auto segment_rows(const FeatureStream& stream, const Segment& segment) {
    return stream.features.middleRows(segment.start_clip, segment.length());
}

}  // namespace streamtal
