#include "streamtal/error.hpp"
#include "streamtal/pipeline.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace streamtal;

namespace {

py::dict report_dict(const EvalReport& r) {
    py::dict d;
    d["ious"] = r.ious;
    d["map"] = r.map_at;
    d["avg"] = r.average;
    d["per_class_ap"] = r.per_class_ap;
    return d;
}

py::dict combined_dict(const CombinedStream& cs) {
    py::list gt, videos;
    for (const auto& g : cs.gt) gt.append(py::make_tuple(g.start_clip, g.end_clip, g.label));
    for (const auto& v : cs.videos) videos.append(py::make_tuple(v.video_index, v.start_clip, v.end_clip, v.label));
    py::dict d;
    d["features"] = cs.stream.features;
    d["gt"] = gt;
    d["videos"] = videos;
    return d;
}

std::vector<Proposal> to_proposals(const std::vector<std::tuple<int, int, int, double>>& rows) {
    std::vector<Proposal> out;
    for (const auto& [s, e, c, conf] : rows) out.push_back({s, e, c, conf});
    return out;
}

std::vector<std::tuple<int, int, int, double>> from_proposals(const std::vector<Proposal>& ps) {
    std::vector<std::tuple<int, int, int, double>> out;
    for (const auto& p : ps) out.emplace_back(p.start_clip, p.end_clip, p.label, p.confidence);
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Streaming weakly supervised temporal action localization (C++ core)";

    auto base = py::register_exception<Error>(m, "Error");
    py::register_exception<FormatError>(m, "FormatError", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());
    py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
    py::register_exception<NumericError>(m, "NumericError", base.ptr());
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());

    py::class_<ModelOutput>(m, "ModelOutput")
        .def_readonly("embed", &ModelOutput::embed)
        .def_readonly("cas", &ModelOutput::cas)
        .def_readonly("actionness", &ModelOutput::actionness)
        .def_readonly("binary", &ModelOutput::binary);

    py::class_<TalModel>(m, "Model")
        .def(py::init([](int input_dim, int embed_dim, int hidden_dim, int num_classes, int kernel_width,
                         std::uint64_t seed) {
                 return init_model({input_dim, embed_dim, hidden_dim, num_classes, kernel_width}, seed);
             }),
             py::arg("input_dim") = 32, py::arg("embed_dim") = 32, py::arg("hidden_dim") = 32,
             py::arg("num_classes") = 5, py::arg("kernel_width") = 3, py::arg("seed") = 0)
        .def_static("load", [](const std::filesystem::path& p) { return load_checkpoint(p); })
        .def("save", [](const TalModel& self, const std::filesystem::path& p) { save_checkpoint(p, self); })
        .def("forward", [](const TalModel& self, const Matrix& x) { return forward(self, x); })
        .def("parameter_count", [](const TalModel& self) { return self.params.parameter_count(); })
        .def("checkpoint_bytes", [](const TalModel& self) { return py::bytes(checkpoint_bytes(self)); })
        .def(
            "detect",
            [](const TalModel& self, const Matrix& x, int offset) {
                return from_proposals(detect(self, x, DetectConfig{}, offset));
            },
            py::arg("features"), py::arg("offset") = 0)
        .def(
            "contrast_score",
            [](const TalModel& self, const Matrix& x, int s) { return contrast_score(x, self, s); },
            py::arg("features"), py::arg("s") = 5);

    m.def("tiou", [](int s1, int e1, int s2, int e2) { return tiou({s1, e1}, {s2, e2}); });
    m.def(
        "nms", [](const std::vector<std::tuple<int, int, int, double>>& p, double thr) {
            return from_proposals(nms(to_proposals(p), thr));
        },
        py::arg("proposals"), py::arg("iou_threshold"));
    m.def(
        "evaluate_map",
        [](const std::vector<std::tuple<int, int, int, double>>& p, const std::vector<std::tuple<int, int, int>>& gt,
           int classes) {
            std::vector<GtInterval> g;
            for (const auto& [s, e, c] : gt) g.push_back({s, e, c});
            return report_dict(evaluate_map(to_proposals(p), g, classes));
        },
        py::arg("proposals"), py::arg("ground_truth"), py::arg("num_classes"));
    m.def("segment_entropy", &segment_entropy);

    m.def("default_config", [] { return config_to_json(ExperimentConfig{}); });
    m.def(
        "generate",
        [](const std::string& config_json, std::uint64_t split) {
            const ExperimentConfig c = config_from_json(config_json);
            SyntheticSpec spec = c.data;
            spec.seed = c.seeds.data;
            const auto order = split == 0 ? c.order : CombinationOrder::sequential();
            return combined_dict(combine_stream(generate_dataset(spec, split).videos, order));
        },
        py::arg("config_json") = "{}", py::arg("split") = 0);
    m.def(
        "label_segments",
        [](const std::string& config_json) {
            const ExperimentConfig c = config_from_json(config_json);
            const LabeledDivision d = label_segments(c, prepare_inputs(c));
            py::list labels;
            for (const auto& w : d.labels) labels.append(py::make_tuple(w.segment_index, w.label));
            py::dict out;
            out["indices"] = d.selection.indices;
            out["scores"] = d.selection.scores;
            out["labels"] = labels;
            out["num_segments"] = d.partition.size();
            return out;
        },
        py::arg("config_json") = "{}");
    m.def(
        "run_experiment",
        [](const std::string& config_json, const std::optional<std::filesystem::path>& out_dir) {
            const ExperimentConfig c = config_from_json(config_json);
            ExperimentResult r;
            {
                py::gil_scoped_release release;
                r = run_experiment(c, prepare_inputs(c));
            }
            if (out_dir) write_run_directory(*out_dir, c, r);
            py::list epochs;
            for (const auto& e : r.metrics) {
                py::dict d;
                d["epoch"] = e.epoch;
                d["loss_a"] = e.loss_a;
                d["loss_s"] = e.loss_s;
                d["n_segments"] = e.n_segments;
                d["median_T"] = e.median_t;
                d["avg_map"] = e.avg_map ? py::object(py::float_(*e.avg_map)) : py::object(py::none());
                epochs.append(d);
            }
            py::dict out;
            out["report"] = report_dict(r.final_report);
            out["metrics"] = epochs;
            out["invariant_checks"] = r.invariant_checks;
            out["invariant_violations"] = r.invariant_violations;
            out["mean_labeled_length"] = r.mean_labeled_length;
            out["model"] = r.model;
            return out;
        },
        py::arg("config_json") = "{}", py::arg("out_dir") = std::nullopt);
}
