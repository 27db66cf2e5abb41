#pragma once

#include "streamtal/detector.hpp"
#include "streamtal/sampler.hpp"
#include "streamtal/segmenter.hpp"
#include "streamtal/synthgen.hpp"
#include "streamtal/tal_model.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace streamtal {

struct TrainingConfig {
    int embed_dim = 32;
    int hidden_dim = 32;
    int kernel_width = 3;
    double learning_rate = 1e-4;
    int batch_size = 16;
    int epochs = 200;
    double tau = 0.07;
    VideoPooling pooling = VideoPooling::PerClass;
    MiningConfig mining;
};

struct SamplerConfig {
    SamplerKind kind = SamplerKind::All;
    int budget_n = 1;  // segments per class
};

struct SeedConfig {
    std::uint64_t model = 0;
    std::uint64_t sampler = 0;
    std::uint64_t merge = 0;
    std::uint64_t data = 0;
};

/// Every knob of one streaming run. Serialized field-for-field as JSON.
struct ExperimentConfig {
    int to = 5;
    MergeConfig merge;
    SamplerConfig sampler;
    TrainingConfig train;
    DetectConfig detector;
    SeedConfig seeds;
    SyntheticSpec data;                              // seed is taken from seeds.data
    CombinationOrder order = CombinationOrder::random(0);
    int warmup_epochs = 20;
    bool init_from_pretrained = false;
    int eval_every = 10;
    std::string t_policy = "per_epoch";              // T = median labeled length, recomputed every epoch

    void validate() const;
    ModelDims model_dims() const;
    ModelHyper model_hyper() const;
};

/// Streams a run consumes: the training stream, the held-out evaluation
/// videos, and the model used for clip selection and sampling.
struct ExperimentInputs {
    CombinedStream train;
    CombinedStream eval;
    TalModel pretrained;
};

/// Held-out warm-up stream trained for `warmup_epochs` without merging.
TalModel warmup_model(const ExperimentConfig& config);

/// Train/eval/warm-up splits generated from the config's synthetic spec.
ExperimentInputs prepare_inputs(const ExperimentConfig& config);

/// Steps 1-2: uniform division, sampling with the pretrained model, and oracle
/// labels for the selected segments only.
struct LabeledDivision {
    SegmentPartition partition;
    Selection selection;
    std::vector<WeakLabel> labels;
};

LabeledDivision label_segments(const ExperimentConfig& config, const ExperimentInputs& inputs);

struct EpochMetrics {
    int epoch = 0;
    double loss_a = 0.0;
    double loss_s = 0.0;
    int n_segments = 0;   // labeled training segments after the merge phase
    int median_t = 0;
    std::optional<double> avg_map;
};

struct CheckpointReport {
    int epoch = 0;
    EvalReport report;
};

struct ExperimentResult {
    std::vector<CheckpointReport> reports;  // epoch 0, every eval_every epochs, final
    EvalReport final_report;
    std::vector<EpochMetrics> metrics;
    Selection selection;
    std::vector<WeakLabel> labels;
    SegmentPartition final_partition;
    int invariant_checks = 0;
    int invariant_violations = 0;
    std::vector<std::string> violation_messages;  // first few only
    double mean_labeled_length = 0.0;
    TalModel model;
};

/// Gapless/ordered/coverage/label-purity check of a merged partition against the
/// original labeled division. Returns an empty string when every invariant holds.
std::string partition_violation(const SegmentPartition& merged, const SegmentPartition& original, int num_clips);

/// Per-video detection over the evaluation stream.
EvalReport evaluate_model(const TalModel& model, const CombinedStream& eval, const DetectConfig& cfg,
                          int num_classes);

using EpochCallback = std::function<void(const EpochMetrics&, const SegmentPartition&)>;

ExperimentResult run_experiment(const ExperimentConfig& config, const ExperimentInputs& inputs,
                                const EpochCallback& on_epoch = {});

/// Writes config echo, selection manifest, weak labels, metrics CSV, report JSON, checkpoint.
void write_run_directory(const std::filesystem::path& dir, const ExperimentConfig& config,
                         const ExperimentResult& result);

std::string metrics_csv(const std::vector<EpochMetrics>& metrics);

struct GridColumn {
    std::string label;
    MergeStrategy merge = MergeStrategy::ContrastMerge;
    int iterations = 1;
    SamplerKind sampler = SamplerKind::All;
};

/// Rows sweep `to` or the sampler budget; each cell averages the final
/// average mAP over the combination orders.
struct GridSpec {
    ExperimentConfig base;
    std::string row_key = "to";  // "to" or "budget_n"
    std::vector<int> row_values;
    std::vector<GridColumn> columns;
    std::vector<CombinationOrder> orders;
};

struct GridResult {
    std::string row_key;
    std::vector<int> row_values;
    std::vector<std::string> column_labels;
    Matrix cells;  // rows x columns
    Matrix mean_lengths;

    std::string to_csv() const;
};

ExperimentConfig grid_cell_config(const GridSpec& grid, int row_value, const GridColumn& column,
                                  const CombinationOrder& order);

GridResult run_grid(const GridSpec& grid, const std::function<void(const std::string&)>& progress = {});

// JSON (de)serialization. Unknown keys are rejected; missing keys keep defaults.
std::string config_to_json(const ExperimentConfig& config);
ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string synthetic_spec_to_json(const SyntheticSpec& spec);
GridSpec grid_from_json(const std::string& text);

}  // namespace streamtal
