#pragma once

#include "streamtal/stream_core.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace streamtal {

struct IntRange {
    int lo = 1;
    int hi = 1;  // inclusive

    bool operator==(const IntRange&) const = default;
};

/// Gaussian-prototype stand-in for untrimmed single-class videos.
struct SyntheticSpec {
    int classes = 5;
    int dim = 32;
    int videos_per_class = 8;
    IntRange instances_per_video{1, 3};
    IntRange action_length{8, 20};
    IntRange background_length{10, 30};
    double noise_sigma = 0.25;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SyntheticVideo {
    int index = 0;
    int label = 0;
    Matrix features;
    std::vector<GtInterval> gt;  // video-local clip coordinates, sorted, disjoint

    int length() const { return static_cast<int>(features.rows()); }
};

struct SyntheticDataset {
    Matrix prototypes;  // (classes + 1) x dim, last row is background
    std::vector<SyntheticVideo> videos;
};

/// Fully determined by `spec` and `split`. Prototypes depend on `spec.seed`
/// only, so different splits share classes but not videos.
SyntheticDataset generate_dataset(const SyntheticSpec& spec, std::uint64_t split = 0);

struct CombinationOrder {
    enum class Kind { Random, PairedSameClass, Sequential };
    Kind kind = Kind::Random;
    std::uint64_t seed = 0;

    static CombinationOrder random(std::uint64_t seed) { return {Kind::Random, seed}; }
    static CombinationOrder paired(std::uint64_t seed) { return {Kind::PairedSameClass, seed}; }
    static CombinationOrder sequential() { return {Kind::Sequential, 0}; }

    std::string name() const;
};

CombinationOrder parse_order(const std::string& text);  // random:<seed>, paired:<seed>, sequential

struct VideoSpan {
    int video_index = 0;
    int start_clip = 0;
    int end_clip = 0;
    int label = 0;
};

struct CombinedStream {
    FeatureStream stream;
    std::vector<GtInterval> gt;      // stream coordinates
    std::vector<VideoSpan> videos;   // in stream order
};

/// Video order of `order` as indices into `videos`.
std::vector<int> combination_sequence(std::span<const SyntheticVideo> videos, const CombinationOrder& order);

CombinedStream combine_stream(std::span<const SyntheticVideo> videos, const CombinationOrder& order);

bool has_adjacent_same_class(std::span<const VideoSpan> videos);

/// Class of the interval containing `clip`, else of the interval nearest to
/// it (distance to start or past end); earlier interval on ties.
int oracle_label(int clip, std::span<const GtInterval> gt);

/// Ground truth of the video containing `clip`.
std::span<const GtInterval> video_ground_truth(const CombinedStream& combined, int clip);

void write_boundaries(const std::filesystem::path& path, std::span<const VideoSpan> videos);
std::vector<VideoSpan> load_boundaries(const std::filesystem::path& path);

}  // namespace streamtal
