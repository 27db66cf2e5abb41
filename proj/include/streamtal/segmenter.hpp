#pragma once

#include "streamtal/rng.hpp"
#include "streamtal/stream_core.hpp"
#include "streamtal/tal_model.hpp"

#include <cstdint>
#include <functional>
#include <string>

namespace streamtal {

enum class MergeStrategy { WithoutMerging, RandomMerge, MergeAll, ContrastMerge, ContrastMergeSplit };

std::string to_string(MergeStrategy s);
MergeStrategy parse_merge_strategy(const std::string& name);  // wm, rm, ma, csm, csms

struct MergeConfig {
    MergeStrategy strategy = MergeStrategy::ContrastMerge;
    int iterations = 1;                 // contrast-merge passes per epoch
    int s = 5;                          // contrast top-k divisor: k = max(1, floor(T_i / s))
    std::uint64_t rng_seed = 0;
    int original_length = 0;            // To; used to keep split origins aligned to the original grid

    void validate() const;
};

/// Segments [0,To), [To,2To), ...; the last one keeps the remainder.
SegmentPartition divide_uniform(const FeatureStream& stream, int to);

/// Argmax of actionness over the raw (unresampled) segment; lower index on ties.
int representative_clip(const MatrixRef& segment_features, const TalModel& model);

/// Cosine of the mean EA and mean EB embeddings with k = max(1, floor(T_i / s)).
double contrast_score(const MatrixRef& segment_features, const TalModel& model, int s);

/// Score function used by the merge sweeps. Tests substitute crafted scores.
using SegmentScorer = std::function<double(int start_clip, int end_clip)>;

SegmentScorer model_scorer(const FeatureStream& stream, const TalModel& model, int s);

/// One left-to-right contrast-score merge sweep over a fully labeled partition.
SegmentPartition csm_pass(const SegmentPartition& partition, const SegmentScorer& score);
SegmentPartition csm_pass(const SegmentPartition& partition, const FeatureStream& stream, const TalModel& model,
                          const MergeConfig& cfg);

/// Candidate split position p (child ranges [start, start+p) and [start+p, end)):
/// the most dissimilar consecutive pair of embedded clips.
int split_point(const MatrixRef& segment_features, const TalModel& model);

/// Splits each segment at split_point when the children's mean score is below the parent's.
SegmentPartition csms_split_pass(const SegmentPartition& partition, const FeatureStream& stream,
                                 const TalModel& model, const MergeConfig& cfg);

/// Coalesces maximal runs of equal-label neighbors.
SegmentPartition merge_all(const SegmentPartition& partition);

/// Within each equal-label run, keeps each internal boundary with probability 1/2.
SegmentPartition random_merge(const SegmentPartition& partition, Rng& rng);

/// Applies `fn` to every maximal run of labeled segments, leaving unlabeled
/// segments untouched. Used when only a sampled subset carries labels.
SegmentPartition for_each_labeled_run(const SegmentPartition& partition,
                                      const std::function<SegmentPartition(const SegmentPartition&)>& fn);

}  // namespace streamtal
