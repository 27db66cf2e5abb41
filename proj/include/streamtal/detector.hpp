#pragma once

#include "streamtal/stream_core.hpp"
#include "streamtal/tal_model.hpp"

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace streamtal {

struct Interval {
    int start = 0;  // inclusive
    int end = 0;    // exclusive

    int length() const { return end - start; }
};

/// Detected temporal interval in stream clip coordinates.
struct Proposal {
    int start_clip = 0;
    int end_clip = 0;
    int label = 0;
    double confidence = 0.0;

    Interval interval() const { return {start_clip, end_clip}; }
    bool operator==(const Proposal&) const = default;
};

struct DetectConfig {
    // Thresholds on min-max normalized actionness; a clip joins a run when strictly above.
    std::vector<double> thresholds = default_thresholds();
    double class_gate = 0.1;
    double nms_iou = 0.5;

    static std::vector<double> default_thresholds();
};

inline constexpr std::array<double, 7> kEvalIous = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};

struct EvalReport {
    std::vector<double> ious;
    std::vector<double> map_at;  // one entry per iou
    double average = 0.0;        // mean of map_at
    Matrix per_class_ap;         // C x ious.size()

    // {"map": {"0.1": x, ...}, "avg": x} with fixed 6-decimal values.
    std::string to_json() const;
};

double tiou(Interval a, Interval b);

/// Runs of clips whose normalized actionness exceeds each threshold become
/// proposals for every class whose video-level probability reaches the gate.
/// Run endpoints are mapped through `index_map` and shifted by `offset`.
/// Pooled proposals are filtered with nms at `cfg.nms_iou`.
std::vector<Proposal> generate_proposals(const ModelOutput& out, const Vector& video_pred, const DetectConfig& cfg,
                                         std::span<const int> index_map, int offset = 0);

/// Per-class greedy suppression: keep the most confident remaining proposal,
/// drop others of its class with tIoU strictly above the threshold.
/// Equal confidences keep input order. Output is grouped by class, each
/// group in kept order.
std::vector<Proposal> nms(std::vector<Proposal> proposals, double iou_threshold);

/// Proposals for one unsplit video or segment starting at stream clip `offset`.
std::vector<Proposal> detect(const TalModel& model, const MatrixRef& features, const DetectConfig& cfg, int offset);

/// Per class and tIoU threshold: greedy confidence-ordered matching to the
/// best unmatched ground truth, AP as the sum of precision at each true
/// positive over the number of ground-truth instances. mAP averages over
/// classes that have ground truth.
EvalReport evaluate_map(std::span<const Proposal> proposals, std::span<const GtInterval> ground_truth,
                        int num_classes, std::span<const double> iou_thresholds = kEvalIous);

std::vector<Proposal> load_proposals(const std::filesystem::path& path);
void write_proposals(const std::filesystem::path& path, std::span<const Proposal> proposals);

}  // namespace streamtal
