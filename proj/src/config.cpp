#include "streamtal/error.hpp"
#include "streamtal/pipeline.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace streamtal {

using nlohmann::ordered_json;

namespace {

// Rejects keys outside `allowed` so typos do not silently fall back to defaults.
void check_keys(const ordered_json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, value] : j.items()) {
        if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
    }
}

template <class T>
void read(const ordered_json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

ordered_json range_json(const IntRange& r) { return ordered_json::array({r.lo, r.hi}); }

void read_range(const ordered_json& j, const char* key, IntRange& out, const std::string& where) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer()) {
        throw ConfigError(where + "." + key + ": expected [lo, hi]");
    }
    out = {v[0].get<int>(), v[1].get<int>()};
}

ordered_json spec_json(const SyntheticSpec& s) {
    ordered_json j;
    j["classes"] = s.classes;
    j["dim"] = s.dim;
    j["videos_per_class"] = s.videos_per_class;
    j["instances_per_video"] = range_json(s.instances_per_video);
    j["action_length"] = range_json(s.action_length);
    j["background_length"] = range_json(s.background_length);
    j["noise_sigma"] = s.noise_sigma;
    return j;
}

ordered_json to_json_value(const ExperimentConfig& c) {
    ordered_json j;
    j["to"] = c.to;
    j["merge"] = {{"strategy", to_string(c.merge.strategy)},
                  {"iterations", c.merge.iterations},
                  {"s", c.merge.s},
                  {"rng_seed", c.merge.rng_seed}};
    j["sampler"] = {{"kind", to_string(c.sampler.kind)}, {"budget_n", c.sampler.budget_n}};
    j["train"] = {{"embed_dim", c.train.embed_dim},
                  {"hidden_dim", c.train.hidden_dim},
                  {"kernel_width", c.train.kernel_width},
                  {"learning_rate", c.train.learning_rate},
                  {"batch_size", c.train.batch_size},
                  {"epochs", c.train.epochs},
                  {"tau", c.train.tau},
                  {"pooling", to_string(c.train.pooling)},
                  {"mining",
                   {{"inner_margin", c.train.mining.inner_margin},
                    {"outer_margin", c.train.mining.outer_margin},
                    {"lambda", c.train.mining.lambda}}}};
    j["detector"] = {{"thresholds", c.detector.thresholds},
                     {"class_gate", c.detector.class_gate},
                     {"nms_iou", c.detector.nms_iou}};
    j["seeds"] = {{"model", c.seeds.model}, {"sampler", c.seeds.sampler}, {"merge", c.seeds.merge},
                  {"data", c.seeds.data}};
    j["data"] = spec_json(c.data);
    j["order"] = c.order.name();
    j["warmup_epochs"] = c.warmup_epochs;
    j["init_from_pretrained"] = c.init_from_pretrained;
    j["eval_every"] = c.eval_every;
    j["t_policy"] = c.t_policy;
    return j;
}

ExperimentConfig from_json_value(const ordered_json& j) {
    ExperimentConfig c;
    check_keys(j,
               {"to", "merge", "sampler", "train", "detector", "seeds", "data", "order", "warmup_epochs",
                "init_from_pretrained", "eval_every", "t_policy"},
               "config");
    read(j, "to", c.to, "config");
    if (j.contains("merge")) {
        const auto& m = j["merge"];
        check_keys(m, {"strategy", "iterations", "s", "rng_seed"}, "merge");
        std::string name = to_string(c.merge.strategy);
        read(m, "strategy", name, "merge");
        c.merge.strategy = parse_merge_strategy(name);
        read(m, "iterations", c.merge.iterations, "merge");
        read(m, "s", c.merge.s, "merge");
        read(m, "rng_seed", c.merge.rng_seed, "merge");
    }
    if (j.contains("sampler")) {
        const auto& s = j["sampler"];
        check_keys(s, {"kind", "budget_n"}, "sampler");
        std::string name = to_string(c.sampler.kind);
        read(s, "kind", name, "sampler");
        c.sampler.kind = parse_sampler(name);
        read(s, "budget_n", c.sampler.budget_n, "sampler");
    }
    if (j.contains("train")) {
        const auto& t = j["train"];
        check_keys(t,
                   {"embed_dim", "hidden_dim", "kernel_width", "learning_rate", "batch_size", "epochs", "tau",
                    "pooling", "mining"},
                   "train");
        read(t, "embed_dim", c.train.embed_dim, "train");
        read(t, "hidden_dim", c.train.hidden_dim, "train");
        read(t, "kernel_width", c.train.kernel_width, "train");
        read(t, "learning_rate", c.train.learning_rate, "train");
        read(t, "batch_size", c.train.batch_size, "train");
        read(t, "epochs", c.train.epochs, "train");
        read(t, "tau", c.train.tau, "train");
        if (t.contains("pooling")) {
            std::string name;
            read(t, "pooling", name, "train");
            c.train.pooling = parse_pooling(name);
        }
        if (t.contains("mining")) {
            const auto& m = t["mining"];
            check_keys(m, {"inner_margin", "outer_margin", "lambda"}, "train.mining");
            read(m, "inner_margin", c.train.mining.inner_margin, "train.mining");
            read(m, "outer_margin", c.train.mining.outer_margin, "train.mining");
            read(m, "lambda", c.train.mining.lambda, "train.mining");
        }
    }
    if (j.contains("detector")) {
        const auto& d = j["detector"];
        check_keys(d, {"thresholds", "class_gate", "nms_iou"}, "detector");
        read(d, "thresholds", c.detector.thresholds, "detector");
        read(d, "class_gate", c.detector.class_gate, "detector");
        read(d, "nms_iou", c.detector.nms_iou, "detector");
    }
    if (j.contains("seeds")) {
        const auto& s = j["seeds"];
        check_keys(s, {"model", "sampler", "merge", "data"}, "seeds");
        read(s, "model", c.seeds.model, "seeds");
        read(s, "sampler", c.seeds.sampler, "seeds");
        read(s, "merge", c.seeds.merge, "seeds");
        read(s, "data", c.seeds.data, "seeds");
    }
    if (j.contains("data")) {
        const auto& d = j["data"];
        check_keys(d,
                   {"classes", "dim", "videos_per_class", "instances_per_video", "action_length",
                    "background_length", "noise_sigma"},
                   "data");
        read(d, "classes", c.data.classes, "data");
        read(d, "dim", c.data.dim, "data");
        read(d, "videos_per_class", c.data.videos_per_class, "data");
        read_range(d, "instances_per_video", c.data.instances_per_video, "data");
        read_range(d, "action_length", c.data.action_length, "data");
        read_range(d, "background_length", c.data.background_length, "data");
        read(d, "noise_sigma", c.data.noise_sigma, "data");
    }
    if (j.contains("order")) {
        std::string name;
        read(j, "order", name, "config");
        c.order = parse_order(name);
    }
    read(j, "warmup_epochs", c.warmup_epochs, "config");
    read(j, "init_from_pretrained", c.init_from_pretrained, "config");
    read(j, "eval_every", c.eval_every, "config");
    read(j, "t_policy", c.t_policy, "config");
    c.validate();
    return c;
}

ordered_json parse(const std::string& text) {
    try {
        return ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
}

}  // namespace

std::string config_to_json(const ExperimentConfig& config) { return to_json_value(config).dump(2) + "\n"; }

ExperimentConfig config_from_json(const std::string& text) { return from_json_value(parse(text)); }

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    const ordered_json j = parse(ss.str());
    // A grid file is also accepted; its base config is returned.
    if (j.is_object() && j.contains("base")) return from_json_value(j["base"]);
    return from_json_value(j);
}

std::string synthetic_spec_to_json(const SyntheticSpec& spec) {
    ordered_json j = spec_json(spec);
    j["seed"] = spec.seed;
    return j.dump(2) + "\n";
}

GridSpec grid_from_json(const std::string& text) {
    const ordered_json j = parse(text);
    check_keys(j, {"base", "row_key", "row_values", "columns", "orders"}, "grid");
    GridSpec g;
    if (j.contains("base")) g.base = from_json_value(j["base"]);
    read(j, "row_key", g.row_key, "grid");
    if (g.row_key != "to" && g.row_key != "budget_n") throw ConfigError("grid.row_key must be 'to' or 'budget_n'");
    read(j, "row_values", g.row_values, "grid");
    if (j.contains("columns")) {
        for (const auto& col : j["columns"]) {
            check_keys(col, {"label", "merge", "iterations", "sampler"}, "grid.columns");
            GridColumn c;
            std::string merge = to_string(c.merge);
            std::string sampler = to_string(c.sampler);
            read(col, "merge", merge, "grid.columns");
            read(col, "sampler", sampler, "grid.columns");
            read(col, "iterations", c.iterations, "grid.columns");
            c.merge = parse_merge_strategy(merge);
            c.sampler = parse_sampler(sampler);
            c.label = merge + "/" + sampler;
            read(col, "label", c.label, "grid.columns");
            g.columns.push_back(c);
        }
    }
    if (j.contains("orders")) {
        for (const auto& o : j["orders"]) {
            if (!o.is_string()) throw ConfigError("grid.orders: expected strings");
            g.orders.push_back(parse_order(o.get<std::string>()));
        }
    } else {
        g.orders.push_back(g.base.order);
    }
    if (g.row_values.empty()) g.row_values.push_back(g.row_key == "to" ? g.base.to : g.base.sampler.budget_n);
    if (g.columns.empty()) {
        g.columns.push_back({to_string(g.base.merge.strategy), g.base.merge.strategy, g.base.merge.iterations,
                             g.base.sampler.kind});
    }
    return g;
}

}  // namespace streamtal
