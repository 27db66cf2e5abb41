#include "streamtal/detector.hpp"

#include "csv.hpp"
#include "streamtal/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace streamtal {

std::vector<double> DetectConfig::default_thresholds() {
    std::vector<double> t;
    for (int i = 0; i <= 10; ++i) t.push_back(0.025 * i);
    return t;
}

double tiou(Interval a, Interval b) {
    const int inter = std::max(0, std::min(a.end, b.end) - std::max(a.start, b.start));
    const int uni = a.length() + b.length() - inter;
    return uni > 0 ? static_cast<double>(inter) / uni : 0.0;
}

std::vector<Proposal> nms(std::vector<Proposal> proposals, double iou_threshold) {
    if (iou_threshold < 0.0 || iou_threshold > 1.0) throw ValidationError("nms threshold must be in [0, 1]");
    std::vector<std::size_t> order(proposals.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (proposals[a].label != proposals[b].label) return proposals[a].label < proposals[b].label;
        return proposals[a].confidence > proposals[b].confidence;
    });
    std::vector<Proposal> kept;
    std::size_t class_begin = 0;  // first kept proposal of the current class
    for (std::size_t idx : order) {
        const Proposal& p = proposals[idx];
        if (!kept.empty() && kept.back().label != p.label) class_begin = kept.size();
        bool suppressed = false;
        for (std::size_t k = class_begin; k < kept.size() && !suppressed; ++k) {
            suppressed = tiou(kept[k].interval(), p.interval()) > iou_threshold;
        }
        if (!suppressed) kept.push_back(p);
    }
    return kept;
}

std::vector<Proposal> generate_proposals(const ModelOutput& out, const Vector& video_pred, const DetectConfig& cfg,
                                         std::span<const int> index_map, int offset) {
    if (cfg.thresholds.empty()) throw ValidationError("detection needs at least one threshold");
    for (double th : cfg.thresholds) {
        if (th < 0.0 || th >= 1.0) throw ValidationError("detection thresholds must lie in [0, 1)");
    }
    const int length = out.length();
    if (static_cast<int>(index_map.size()) != length) {
        throw ValidationError("index map length differs from model output length");
    }

    const double lo = out.actionness.minCoeff();
    const double hi = out.actionness.maxCoeff();
    Vector norm = Vector::Zero(length);
    if (hi > lo) norm = (out.actionness.array() - lo) / (hi - lo);

    // Per-clip class probabilities.
    Matrix prob(out.cas.rows(), out.cas.cols());
    for (int t = 0; t < length; ++t) prob.row(t) = softmax(out.cas.row(t).transpose()).transpose();

    std::vector<Proposal> pooled;
    for (int c = 0; c < static_cast<int>(video_pred.size()); ++c) {
        if (video_pred[c] < cfg.class_gate) continue;
        for (double th : cfg.thresholds) {
            int t = 0;
            while (t < length) {
                if (!(norm[t] > th)) {
                    ++t;
                    continue;
                }
                const int run_start = t;
                double conf = 0.0;
                while (t < length && norm[t] > th) conf += prob(t++, c);
                pooled.push_back({offset + index_map[run_start], offset + index_map[t - 1] + 1, c,
                                  conf / (t - run_start)});
            }
        }
    }
    return nms(std::move(pooled), cfg.nms_iou);
}

std::vector<Proposal> detect(const TalModel& model, const MatrixRef& features, const DetectConfig& cfg, int offset) {
    const ModelOutput out = forward(model, features);
    const Vector pred = video_level_prediction(out, easy_count(out.length()), model.hyper.pooling);
    std::vector<int> identity(static_cast<std::size_t>(out.length()));
    std::iota(identity.begin(), identity.end(), 0);
    return generate_proposals(out, pred, cfg, identity, offset);
}

EvalReport evaluate_map(std::span<const Proposal> proposals, std::span<const GtInterval> ground_truth,
                        int num_classes, std::span<const double> iou_thresholds) {
    if (ground_truth.empty()) throw ValidationError("evaluate_map: ground truth is empty");
    if (num_classes < 1) throw ValidationError("evaluate_map: num_classes must be >= 1");
    for (const auto& g : ground_truth) {
        if (g.label < 0 || g.label >= num_classes) throw ValidationError("ground-truth class out of range");
    }
    const auto n_iou = static_cast<Eigen::Index>(iou_thresholds.size());
    EvalReport report;
    report.ious.assign(iou_thresholds.begin(), iou_thresholds.end());
    report.per_class_ap = Matrix::Zero(num_classes, n_iou);
    report.map_at.assign(iou_thresholds.size(), 0.0);

    int classes_with_gt = 0;
    for (int c = 0; c < num_classes; ++c) {
        std::vector<Interval> gts;
        for (const auto& g : ground_truth) {
            if (g.label == c) gts.push_back({g.start_clip, g.end_clip});
        }
        if (gts.empty()) continue;
        ++classes_with_gt;

        std::vector<Proposal> preds;
        for (const auto& p : proposals) {
            if (p.label == c) preds.push_back(p);
        }
        std::stable_sort(preds.begin(), preds.end(),
                         [](const Proposal& a, const Proposal& b) { return a.confidence > b.confidence; });

        for (Eigen::Index k = 0; k < n_iou; ++k) {
            const double thr = iou_thresholds[k];
            std::vector<bool> matched(gts.size(), false);
            int tp = 0;
            double ap = 0.0;
            for (std::size_t rank = 0; rank < preds.size(); ++rank) {
                int best = -1;
                double best_iou = -1.0;
                for (std::size_t g = 0; g < gts.size(); ++g) {
                    if (matched[g]) continue;
                    const double iou = tiou(preds[rank].interval(), gts[g]);
                    if (iou >= thr && iou > best_iou) {
                        best = static_cast<int>(g);
                        best_iou = iou;
                    }
                }
                if (best < 0) continue;
                matched[static_cast<std::size_t>(best)] = true;
                ++tp;
                const double precision = static_cast<double>(tp) / static_cast<double>(rank + 1);
                ap += precision / static_cast<double>(gts.size());
            }
            report.per_class_ap(c, k) = ap;
        }
    }
    for (Eigen::Index k = 0; k < n_iou; ++k) {
        double s = 0.0;
        for (int c = 0; c < num_classes; ++c) s += report.per_class_ap(c, k);
        report.map_at[k] = s / classes_with_gt;
    }
    report.average = n_iou > 0 ? std::accumulate(report.map_at.begin(), report.map_at.end(), 0.0) / n_iou : 0.0;
    return report;
}

std::string EvalReport::to_json() const {
    std::ostringstream out;
    char buf[64];
    out << "{\"map\": {";
    for (std::size_t k = 0; k < ious.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%s\"%g\": %.6f", k ? ", " : "", ious[k], map_at[k]);
        out << buf;
    }
    std::snprintf(buf, sizeof buf, "}, \"avg\": %.6f}", average);
    out << buf << '\n';
    return out.str();
}

std::vector<Proposal> load_proposals(const std::filesystem::path& path) {
    detail::CsvReader reader(path, "start_clip,end_clip,class,confidence");
    std::vector<Proposal> out;
    std::vector<std::string> f;
    while (reader.next(f)) {
        reader.expect_fields(f, 4);
        Proposal p{reader.to_int(f[0]), reader.to_int(f[1]), reader.to_int(f[2]), std::stod(f[3])};
        if (p.start_clip >= p.end_clip || !std::isfinite(p.confidence)) {
            throw ValidationError(path.string() + ": invalid proposal row");
        }
        out.push_back(p);
    }
    return out;
}

void write_proposals(const std::filesystem::path& path, std::span<const Proposal> proposals) {
    auto out = detail::open_for_write(path);
    out << "start_clip,end_clip,class,confidence\n";
    char buf[32];
    for (const auto& p : proposals) {
        std::snprintf(buf, sizeof buf, "%.9g", p.confidence);
        out << p.start_clip << ',' << p.end_clip << ',' << p.label << ',' << buf << '\n';
    }
}

}  // namespace streamtal
