#include "streamtal/pipeline.hpp"

#include "csv.hpp"
#include "streamtal/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace streamtal {

namespace {

// Split indices passed to generate_dataset.
constexpr std::uint64_t kTrainSplit = 0;
constexpr std::uint64_t kEvalSplit = 1;
constexpr std::uint64_t kWarmupSplit = 2;

constexpr std::size_t kMaxViolationMessages = 8;

SyntheticSpec data_spec(const ExperimentConfig& c) {
    SyntheticSpec spec = c.data;
    spec.seed = c.seeds.data;
    return spec;
}

std::vector<TrainingSample> build_samples(const SegmentPartition& partition, const FeatureStream& stream, int t) {
    std::vector<TrainingSample> samples;
    for (std::size_t j = 0; j < partition.size(); ++j) {
        const Segment& seg = partition[j];
        if (!seg.label) continue;
        samples.push_back({resample_to_length(segment_rows(stream, seg), t), *seg.label, static_cast<int>(j)});
    }
    return samples;
}

double mean_labeled_length(const SegmentPartition& p) {
    double total = 0.0;
    int count = 0;
    for (const auto& s : p.segments) {
        if (s.label) {
            total += s.length();
            ++count;
        }
    }
    return count ? total / count : 0.0;
}

int labeled_count(const SegmentPartition& p) {
    return static_cast<int>(std::count_if(p.segments.begin(), p.segments.end(),
                                          [](const Segment& s) { return s.label.has_value(); }));
}

}  // namespace

void ExperimentConfig::validate() const {
    if (to < 1) throw ConfigError("to must be >= 1");
    MergeConfig m = merge;
    m.original_length = to;
    try {
        m.validate();
        model_dims().validate();
    } catch (const ValidationError& e) {
        throw ConfigError(e.what());
    }
    if (sampler.budget_n < 1) throw ConfigError("sampler budget_n must be >= 1");
    if (train.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (train.epochs < 0) throw ConfigError("epochs must be >= 0");
    if (!(train.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(train.tau > 0.0)) throw ConfigError("tau must be positive");
    if (train.mining.inner_margin < 1 || train.mining.outer_margin < train.mining.inner_margin) {
        throw ConfigError("mining margins must satisfy 1 <= inner_margin <= outer_margin");
    }
    if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
    if (warmup_epochs < 0) throw ConfigError("warmup_epochs must be >= 0");
    if (t_policy != "per_epoch") throw ConfigError("t_policy must be 'per_epoch'");
    if (detector.thresholds.empty()) throw ConfigError("detector needs at least one threshold");
    data_spec(*this).validate();
}

ModelDims ExperimentConfig::model_dims() const {
    return {data.dim, train.embed_dim, train.hidden_dim, data.classes, train.kernel_width};
}

ModelHyper ExperimentConfig::model_hyper() const {
    ModelHyper h;
    h.tau = train.tau;
    h.pooling = train.pooling;
    h.learning_rate = train.learning_rate;
    return h;
}

std::string partition_violation(const SegmentPartition& merged, const SegmentPartition& original, int num_clips) {
    try {
        merged.validate_covers(num_clips);
    } catch (const ValidationError& e) {
        return e.what();
    }
    for (std::size_t j = 0; j < merged.size(); ++j) {
        const Segment& seg = merged[j];
        const int lo = seg.origin.front();
        const int hi = seg.origin.back();
        if (lo < 0 || hi >= static_cast<int>(original.size())) return "segment " + std::to_string(j) + ": origin out of range";
        if (seg.start_clip < original[lo].start_clip || seg.end_clip > original[hi].end_clip) {
            return "segment " + std::to_string(j) + ": clip range escapes its origin";
        }
        for (int o = lo; o <= hi; ++o) {
            if (original[o].label != seg.label) {
                return "segment " + std::to_string(j) + ": mixes labels of original segment " + std::to_string(o);
            }
        }
        if (!seg.label && (lo != hi || seg.start_clip != original[lo].start_clip || seg.end_clip != original[lo].end_clip)) {
            return "segment " + std::to_string(j) + ": unlabeled segment was modified";
        }
    }
    return {};
}

EvalReport evaluate_model(const TalModel& model, const CombinedStream& eval, const DetectConfig& cfg,
                          int num_classes) {
    std::vector<Proposal> all;
    for (const auto& v : eval.videos) {
        auto props = detect(model, eval.stream.features.middleRows(v.start_clip, v.end_clip - v.start_clip), cfg,
                            v.start_clip);
        all.insert(all.end(), props.begin(), props.end());
    }
    return evaluate_map(all, eval.gt, num_classes);
}

TalModel warmup_model(const ExperimentConfig& config) {
    const SyntheticSpec spec = data_spec(config);
    const auto ds = generate_dataset(spec, kWarmupSplit);
    const CombinedStream warm = combine_stream(ds.videos, CombinationOrder::random(derive_seed(config.seeds.data, 7)));
    TalModel model = init_model(config.model_dims(), derive_seed(config.seeds.model, 101), config.model_hyper());

    SegmentPartition partition = divide_uniform(warm.stream, config.to);
    for (auto& seg : partition.segments) {
        const int clip = seg.start_clip + representative_clip(segment_rows(warm.stream, seg), model);
        seg.label = oracle_label(clip, video_ground_truth(warm, clip));
    }
    Rng batch_rng(derive_seed(config.seeds.model, 102));
    Rng mining_rng(derive_seed(config.seeds.model, 103));
    const int t = median_segment_length(partition, true);
    const auto samples = build_samples(partition, warm.stream, t);
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<TrainingSample> batch;
    for (int epoch = 0; epoch < config.warmup_epochs; ++epoch) {
        batch_rng.shuffle(order);
        for (std::size_t b = 0; b < order.size(); b += config.train.batch_size) {
            batch.clear();
            for (std::size_t k = b; k < std::min(order.size(), b + config.train.batch_size); ++k) {
                batch.push_back(samples[order[k]]);
            }
            train_step(model, batch, config.train.mining, mining_rng);
        }
    }
    model.adam = {TalParameters::zeros(model.dims), TalParameters::zeros(model.dims), 0};
    return model;
}

ExperimentInputs prepare_inputs(const ExperimentConfig& config) {
    config.validate();
    const SyntheticSpec spec = data_spec(config);
    const auto train_ds = generate_dataset(spec, kTrainSplit);
    const auto eval_ds = generate_dataset(spec, kEvalSplit);
    return {combine_stream(train_ds.videos, config.order),
            combine_stream(eval_ds.videos, CombinationOrder::sequential()), warmup_model(config)};
}

LabeledDivision label_segments(const ExperimentConfig& config, const ExperimentInputs& inputs) {
    const FeatureStream& stream = inputs.train.stream;
    LabeledDivision d;
    d.partition = divide_uniform(stream, config.to);
    const Budget budget{config.sampler.budget_n, config.data.classes};
    Rng sampler_rng(config.seeds.sampler);
    switch (config.sampler.kind) {
        case SamplerKind::All: d.selection = select_all(d.partition); break;
        case SamplerKind::Random: d.selection = sample_random(d.partition, budget, sampler_rng); break;
        case SamplerKind::Uncertainty:
            d.selection = sample_uncertainty(d.partition, stream, inputs.pretrained, budget);
            break;
        case SamplerKind::Interests:
            d.selection = sample_interests(d.partition, stream, inputs.pretrained, budget, config.detector);
            break;
    }
    for (int i : d.selection.indices) {
        Segment& seg = d.partition[static_cast<std::size_t>(i)];
        const int clip = seg.start_clip + representative_clip(segment_rows(stream, seg), inputs.pretrained);
        seg.label = oracle_label(clip, video_ground_truth(inputs.train, clip));
        d.labels.push_back({i, *seg.label});
    }
    return d;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const ExperimentInputs& inputs,
                                const EpochCallback& on_epoch) {
    config.validate();
    const FeatureStream& stream = inputs.train.stream;
    stream.validate();
    const int num_clips = stream.num_clips();
    const int classes = config.data.classes;
    if (stream.dim() != config.data.dim) throw ConfigError("stream feature dimension differs from config data.dim");
    MergeConfig merge_cfg = config.merge;
    merge_cfg.original_length = config.to;

    ExperimentResult result;
    LabeledDivision division = label_segments(config, inputs);
    const SegmentPartition original = std::move(division.partition);
    result.selection = std::move(division.selection);
    result.labels = std::move(division.labels);
    if (result.labels.empty()) throw ConfigError("no labeled segments to train on");

    // Step 3: per-epoch merge + train.
    TalModel model;
    if (config.init_from_pretrained) {
        model = inputs.pretrained;
        model.hyper = config.model_hyper();
        model.adam = {TalParameters::zeros(model.dims), TalParameters::zeros(model.dims), 0};
    } else {
        model = init_model(config.model_dims(), config.seeds.model, config.model_hyper());
    }
    if (!(model.dims == config.model_dims())) throw ConfigError("pretrained model dimensions differ from config");

    Rng merge_rng(config.seeds.merge);
    Rng batch_rng(derive_seed(config.seeds.merge, 1));
    Rng mining_rng(derive_seed(config.seeds.model, 1));

    SegmentPartition partition = original;
    auto evaluate = [&](int epoch) {
        EvalReport r = evaluate_model(model, inputs.eval, config.detector, classes);
        result.reports.push_back({epoch, r});
        return r.average;
    };

    EpochMetrics m0;
    m0.n_segments = labeled_count(partition);
    m0.median_t = median_segment_length(partition, true);
    m0.avg_map = evaluate(0);
    result.metrics.push_back(m0);
    if (on_epoch) on_epoch(m0, partition);

    auto check = [&] {
        ++result.invariant_checks;
        std::string v = partition_violation(partition, original, num_clips);
        if (!v.empty()) {
            ++result.invariant_violations;
            if (result.violation_messages.size() < kMaxViolationMessages) result.violation_messages.push_back(v);
        }
    };

    std::vector<TrainingSample> batch;
    for (int epoch = 1; epoch <= config.train.epochs; ++epoch) {
        switch (merge_cfg.strategy) {
            case MergeStrategy::WithoutMerging: break;
            case MergeStrategy::RandomMerge:
                // Grouping is drawn once; later epochs keep it.
                if (epoch == 1) {
                    partition = for_each_labeled_run(partition, [&](const SegmentPartition& run) {
                        return random_merge(run, merge_rng);
                    });
                    check();
                }
                break;
            case MergeStrategy::MergeAll:
                if (epoch == 1) {
                    partition = for_each_labeled_run(partition, merge_all);
                    check();
                }
                break;
            case MergeStrategy::ContrastMerge:
            case MergeStrategy::ContrastMergeSplit:
                for (int it = 0; it < merge_cfg.iterations; ++it) {
                    partition = for_each_labeled_run(partition, [&](const SegmentPartition& run) {
                        return csm_pass(run, stream, model, merge_cfg);
                    });
                    check();
                    if (merge_cfg.strategy == MergeStrategy::ContrastMergeSplit) {
                        partition = for_each_labeled_run(partition, [&](const SegmentPartition& run) {
                            return csms_split_pass(run, stream, model, merge_cfg);
                        });
                        check();
                    }
                }
                break;
        }

        EpochMetrics em;
        em.epoch = epoch;
        em.n_segments = labeled_count(partition);
        em.median_t = median_segment_length(partition, true);
        const auto samples = build_samples(partition, stream, em.median_t);
        std::vector<std::size_t> order(samples.size());
        std::iota(order.begin(), order.end(), 0);
        batch_rng.shuffle(order);
        int batches = 0;
        for (std::size_t b = 0; b < order.size(); b += config.train.batch_size) {
            batch.clear();
            for (std::size_t k = b; k < std::min(order.size(), b + config.train.batch_size); ++k) {
                batch.push_back(samples[order[k]]);
            }
            const StepLosses l = train_step(model, batch, config.train.mining, mining_rng);
            em.loss_a += l.loss_a;
            em.loss_s += l.loss_s;
            ++batches;
        }
        em.loss_a /= batches;
        em.loss_s /= batches;
        if (epoch % config.eval_every == 0 || epoch == config.train.epochs) em.avg_map = evaluate(epoch);
        result.metrics.push_back(em);
        if (on_epoch) on_epoch(em, partition);
    }

    result.final_report = result.reports.back().report;
    result.mean_labeled_length = mean_labeled_length(partition);
    result.final_partition = std::move(partition);
    result.model = std::move(model);
    return result;
}

std::string metrics_csv(const std::vector<EpochMetrics>& metrics) {
    std::ostringstream out;
    out << "epoch,loss_a,loss_s,n_segments,median_T,avg_map\n";
    char buf[128];
    for (const auto& m : metrics) {
        std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%d,%d,", m.epoch, m.loss_a, m.loss_s, m.n_segments, m.median_t);
        out << buf;
        if (m.avg_map) {
            std::snprintf(buf, sizeof buf, "%.6f", *m.avg_map);
            out << buf;
        }
        out << '\n';
    }
    return out.str();
}

void write_run_directory(const std::filesystem::path& dir, const ExperimentConfig& config,
                         const ExperimentResult& result) {
    std::filesystem::create_directories(dir);
    detail::open_for_write(dir / "config.json") << config_to_json(config);
    write_selection_manifest(dir / "selection.csv", result.selection);
    write_weak_labels(dir / "weak_labels.csv", result.labels);
    detail::open_for_write(dir / "metrics.csv") << metrics_csv(result.metrics);
    detail::open_for_write(dir / "report.json") << result.final_report.to_json();
    {
        auto out = detail::open_for_write(dir / "checkpoints.csv");
        out << "epoch,avg_map\n";
        char buf[32];
        for (const auto& r : result.reports) {
            std::snprintf(buf, sizeof buf, "%.6f", r.report.average);
            out << r.epoch << ',' << buf << '\n';
        }
    }
    {
        auto out = detail::open_for_write(dir / "partition.csv");
        out << "start_clip,end_clip,label,origin_first,origin_last\n";
        for (const auto& s : result.final_partition.segments) {
            out << s.start_clip << ',' << s.end_clip << ',' << (s.label ? std::to_string(*s.label) : "") << ','
                << s.origin.front() << ',' << s.origin.back() << '\n';
        }
    }
    save_checkpoint(dir / "model.talm", result.model);
}

ExperimentConfig grid_cell_config(const GridSpec& grid, int row_value, const GridColumn& column,
                                  const CombinationOrder& order) {
    ExperimentConfig c = grid.base;
    if (grid.row_key == "to") {
        c.to = row_value;
    } else if (grid.row_key == "budget_n") {
        c.sampler.budget_n = row_value;
    } else {
        throw ConfigError("grid row key must be 'to' or 'budget_n'");
    }
    c.merge.strategy = column.merge;
    c.merge.iterations = column.iterations;
    c.sampler.kind = column.sampler;
    c.order = order;
    return c;
}

GridResult run_grid(const GridSpec& grid, const std::function<void(const std::string&)>& progress) {
    if (grid.row_values.empty() || grid.columns.empty() || grid.orders.empty()) {
        throw ConfigError("grid needs at least one row value, column, and order");
    }
    GridResult g;
    g.row_key = grid.row_key;
    g.row_values = grid.row_values;
    for (const auto& c : grid.columns) g.column_labels.push_back(c.label);
    const auto rows = static_cast<Eigen::Index>(grid.row_values.size());
    const auto cols = static_cast<Eigen::Index>(grid.columns.size());
    g.cells = Matrix::Zero(rows, cols);
    g.mean_lengths = Matrix::Zero(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (const auto& order : grid.orders) {
            // Inputs depend on the row value (To changes the warm-up division) and the order, not the column.
            const ExperimentConfig probe = grid_cell_config(grid, grid.row_values[r], grid.columns[0], order);
            const ExperimentInputs inputs = prepare_inputs(probe);
            for (Eigen::Index c = 0; c < cols; ++c) {
                const ExperimentConfig cfg = grid_cell_config(grid, grid.row_values[r], grid.columns[c], order);
                const ExperimentResult res = run_experiment(cfg, inputs);
                g.cells(r, c) += res.final_report.average / static_cast<double>(grid.orders.size());
                g.mean_lengths(r, c) += res.mean_labeled_length / static_cast<double>(grid.orders.size());
                if (progress) {
                    char buf[160];
                    std::snprintf(buf, sizeof buf, "%s=%d %s %s avg_map=%.6f", grid.row_key.c_str(),
                                  grid.row_values[r], grid.columns[c].label.c_str(), order.name().c_str(),
                                  res.final_report.average);
                    progress(buf);
                }
            }
        }
    }
    return g;
}

std::string GridResult::to_csv() const {
    std::ostringstream out;
    out << row_key;
    for (const auto& l : column_labels) out << ',' << l;
    out << '\n';
    char buf[32];
    for (Eigen::Index r = 0; r < cells.rows(); ++r) {
        out << row_values[r];
        for (Eigen::Index c = 0; c < cells.cols(); ++c) {
            std::snprintf(buf, sizeof buf, ",%.6f", cells(r, c));
            out << buf;
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace streamtal
