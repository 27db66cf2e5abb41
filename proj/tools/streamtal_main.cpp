// streamtal: generate synthetic streams, train, sample, evaluate, and run grids.

#include "streamtal/error.hpp"
#include "streamtal/pipeline.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace streamtal;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_split(const fs::path& dir, const std::string& stem, const CombinedStream& cs) {
    write_feature_stream(dir / (stem + ".fstr"), cs.stream);
    write_ground_truth(dir / (stem + "_gt.csv"), cs.gt);
    write_boundaries(dir / (stem + "_boundaries.csv"), cs.videos);
}

int cmd_gen(const ExperimentConfig& config, const fs::path& out) {
    SyntheticSpec spec = config.data;
    spec.seed = config.seeds.data;
    const auto train = generate_dataset(spec, 0);
    const auto eval = generate_dataset(spec, 1);
    const CombinedStream train_stream = combine_stream(train.videos, config.order);
    write_split(out, "train", train_stream);
    write_split(out, "eval", combine_stream(eval.videos, CombinationOrder::sequential()));
    auto manifest = nlohmann::ordered_json::parse(synthetic_spec_to_json(spec));
    manifest["order"] = config.order.name();
    manifest["train_clips"] = train_stream.stream.num_clips();
    manifest["train_videos"] = train_stream.videos.size();
    write_text(out / "manifest.json", manifest.dump(2) + "\n");
    std::printf("wrote %d training clips, %zu videos to %s\n", train_stream.stream.num_clips(),
                train_stream.videos.size(), out.string().c_str());
    return 0;
}

int cmd_train(const ExperimentConfig& config, const fs::path& out, bool quiet) {
    const ExperimentInputs inputs = prepare_inputs(config);
    const ExperimentResult result = run_experiment(config, inputs, [&](const EpochMetrics& m, const SegmentPartition&) {
        if (quiet || !m.avg_map) return;
        std::printf("epoch %4d  loss_a %.4f  loss_s %.4f  segments %d  T %d  avg_map %.4f\n", m.epoch, m.loss_a,
                    m.loss_s, m.n_segments, m.median_t, *m.avg_map);
        std::fflush(stdout);
    });
    write_run_directory(out, config, result);
    if (result.invariant_violations > 0) {
        std::fprintf(stderr, "partition invariant violated %d times; first: %s\n", result.invariant_violations,
                     result.violation_messages.front().c_str());
        return 3;
    }
    std::fputs(result.final_report.to_json().c_str(), stdout);
    return 0;
}

int cmd_sample(const ExperimentConfig& config, const fs::path& out) {
    const ExperimentInputs inputs = prepare_inputs(config);
    const LabeledDivision d = label_segments(config, inputs);
    write_text(out / "config.json", config_to_json(config));
    write_selection_manifest(out / "selection.csv", d.selection);
    write_weak_labels(out / "weak_labels.csv", d.labels);
    save_checkpoint(out / "pretrained.talm", inputs.pretrained);
    std::printf("selected %zu of %zu segments (%s)\n", d.selection.indices.size(), d.partition.size(),
                to_string(config.sampler.kind).c_str());
    return 0;
}

int cmd_eval(const ExperimentConfig& config, const fs::path& out, const fs::path& model_path) {
    const TalModel model = load_checkpoint(model_path.empty() ? out / "model.talm" : model_path);
    SyntheticSpec spec = config.data;
    spec.seed = config.seeds.data;
    const auto eval = combine_stream(generate_dataset(spec, 1).videos, CombinationOrder::sequential());
    std::vector<Proposal> proposals;
    for (const auto& v : eval.videos) {
        auto p = detect(model, eval.stream.features.middleRows(v.start_clip, v.end_clip - v.start_clip),
                        config.detector, v.start_clip);
        proposals.insert(proposals.end(), p.begin(), p.end());
    }
    const EvalReport report = evaluate_map(proposals, eval.gt, config.data.classes);
    write_proposals(out / "proposals.csv", proposals);
    write_text(out / "eval_report.json", report.to_json());
    std::fputs(report.to_json().c_str(), stdout);
    return 0;
}

int cmd_grid(const fs::path& config_path, const fs::path& out, bool quiet) {
    const GridSpec grid = grid_from_json(read_text(config_path));
    const GridResult result = run_grid(grid, [&](const std::string& line) {
        if (quiet) return;
        std::puts(line.c_str());
        std::fflush(stdout);
    });
    write_text(out / "grid.csv", result.to_csv());
    std::fputs(result.to_csv().c_str(), stdout);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Streaming weakly supervised temporal action localization"};
    app.require_subcommand(1);
    fs::path config_path;
    fs::path out = "run";
    fs::path model_path;
    bool quiet = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON config (ExperimentConfig fields; grid files for 'grid')");
        sub->add_option("--out", out, "Output directory");
        sub->add_flag("--quiet", quiet, "Suppress progress output");
    };
    auto* gen = app.add_subcommand("gen", "Write synthetic train/eval streams, ground truth, and boundaries");
    auto* train = app.add_subcommand("train", "Run one experiment and write its run directory");
    auto* sample = app.add_subcommand("sample", "Divide, sample, and label without training");
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the evaluation split");
    auto* grid = app.add_subcommand("grid", "Run an experiment grid and write grid.csv");
    for (auto* s : {gen, train, sample, eval, grid}) add_common(s);
    eval->add_option("--model", model_path, "Checkpoint to evaluate (default OUT/model.talm)");
    grid->get_option("--config")->required();

    CLI11_PARSE(app, argc, argv);
    try {
        if (grid->parsed()) return cmd_grid(config_path, out, quiet);
        const ExperimentConfig config = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
        if (gen->parsed()) return cmd_gen(config, out);
        if (train->parsed()) return cmd_train(config, out, quiet);
        if (sample->parsed()) return cmd_sample(config, out);
        if (eval->parsed()) return cmd_eval(config, out, model_path);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
