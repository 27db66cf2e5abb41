#pragma once

#include "streamtal/detector.hpp"
#include "streamtal/rng.hpp"
#include "streamtal/stream_core.hpp"
#include "streamtal/tal_model.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace streamtal {

enum class SamplerKind { Random, Uncertainty, Interests, All };

std::string to_string(SamplerKind k);
SamplerKind parse_sampler(const std::string& name);  // rs, us, is, all

/// Labeling budget of n segments per class.
struct Budget {
    int n = 1;
    int classes = 1;

    int total() const { return n * classes; }
};

struct InterestScore {
    int segment_index = 0;
    std::vector<Proposal> area1;    // segment alone
    std::vector<Proposal> area2;    // neighborhood prediction, clipped to the segment
    int interests_length = 0;       // clips covered by both areas
    double score = 0.0;             // interests_length / T_i
};

/// Selected original-segment indices (ascending) with the score that ranked each.
struct Selection {
    std::vector<int> indices;
    std::vector<double> scores;  // parallel to indices
    SamplerKind strategy = SamplerKind::All;
};

/// Mean binary entropy of per-clip actionness (natural log, 0 log 0 = 0).
double segment_entropy(const Vector& a_act);

Selection sample_random(const SegmentPartition& partition, const Budget& budget, Rng& rng);

Selection sample_uncertainty(const SegmentPartition& partition, const FeatureStream& stream, const TalModel& model,
                             const Budget& budget);

/// Interest score of one segment; `cfg.nms_iou` is ignored (zero-IoU suppression is used).
InterestScore interest_score(const SegmentPartition& partition, std::size_t index, const FeatureStream& stream,
                             const TalModel& model, const DetectConfig& cfg);

Selection sample_interests(const SegmentPartition& partition, const FeatureStream& stream, const TalModel& model,
                           const Budget& budget, const DetectConfig& cfg, std::vector<InterestScore>* details = nullptr);

Selection select_all(const SegmentPartition& partition);

/// Indices of the `count` largest scores, lower index first on ties, returned ascending.
std::vector<int> top_scores(const std::vector<double>& scores, int count);

/// CSV `segment_index,score,strategy`.
void write_selection_manifest(const std::filesystem::path& path, const Selection& selection);

}  // namespace streamtal
