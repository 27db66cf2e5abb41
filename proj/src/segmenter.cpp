#include "streamtal/segmenter.hpp"

#include "streamtal/error.hpp"
#include "streamtal/mining.hpp"

#include <algorithm>

namespace streamtal {

std::string to_string(MergeStrategy s) {
    switch (s) {
        case MergeStrategy::WithoutMerging: return "wm";
        case MergeStrategy::RandomMerge: return "rm";
        case MergeStrategy::MergeAll: return "ma";
        case MergeStrategy::ContrastMerge: return "csm";
        case MergeStrategy::ContrastMergeSplit: return "csms";
    }
    return "?";
}

MergeStrategy parse_merge_strategy(const std::string& name) {
    if (name == "wm") return MergeStrategy::WithoutMerging;
    if (name == "rm") return MergeStrategy::RandomMerge;
    if (name == "ma") return MergeStrategy::MergeAll;
    if (name == "csm") return MergeStrategy::ContrastMerge;
    if (name == "csms") return MergeStrategy::ContrastMergeSplit;
    throw ConfigError("unknown merge strategy '" + name + "' (expected wm, rm, ma, csm, csms)");
}

void MergeConfig::validate() const {
    if (s < 1) throw ValidationError("merge: s must be >= 1");
    if (iterations < 1) throw ValidationError("merge: iterations must be >= 1");
    if (strategy == MergeStrategy::ContrastMergeSplit && original_length < 1) {
        throw ValidationError("merge: split tracking needs the original segment length");
    }
}

SegmentPartition divide_uniform(const FeatureStream& stream, int to) {
    if (to < 1) throw ValidationError("divide_uniform: To must be >= 1");
    SegmentPartition p;
    const int n = stream.num_clips();
    for (int start = 0, j = 0; start < n; start += to, ++j) {
        p.segments.push_back({start, std::min(start + to, n), std::nullopt, {j}});
    }
    return p;
}

int representative_clip(const MatrixRef& segment_features, const TalModel& model) {
    const ModelOutput out = forward(model, segment_features);
    return top_k_largest(out.actionness, 1).front();
}

double contrast_score(const MatrixRef& segment_features, const TalModel& model, int s) {
    if (s < 1) throw ValidationError("contrast_score: s must be >= 1");
    const ModelOutput out = forward(model, segment_features);
    const int k = std::max(1, out.length() / s);
    const EasySets easy = mine_easy(out.actionness, k);
    Vector ea = Vector::Zero(out.embed.cols());
    Vector eb = Vector::Zero(out.embed.cols());
    for (int t : easy.ea) ea += out.embed.row(t).transpose();
    for (int t : easy.eb) eb += out.embed.row(t).transpose();
    const double score = l2_normalize(ea, "mean easy-action embedding").dot(l2_normalize(eb, "mean easy-background embedding"));
    return std::clamp(score, -1.0, 1.0);
}

SegmentScorer model_scorer(const FeatureStream& stream, const TalModel& model, int s) {
    return [&stream, &model, s](int start, int end) {
        return contrast_score(stream.features.middleRows(start, end - start), model, s);
    };
}

namespace {

Segment fuse(const Segment& a, const Segment& b) {
    Segment m{a.start_clip, b.end_clip, a.label, a.origin};
    for (int o : b.origin) {
        if (m.origin.back() < o) m.origin.push_back(o);
    }
    return m;
}

void require_labels(const SegmentPartition& p, const char* who) {
    for (const auto& s : p.segments) {
        if (!s.label) throw ValidationError(std::string(who) + ": every segment must carry a label");
    }
}

}  // namespace

SegmentPartition csm_pass(const SegmentPartition& partition, const SegmentScorer& score) {
    require_labels(partition, "csm_pass");
    SegmentPartition out;
    if (partition.empty()) return out;
    Segment prev = partition[0];
    double prev_score = 0.0;
    bool prev_scored = false;
    for (std::size_t j = 1; j < partition.size(); ++j) {
        const Segment& cur = partition[j];
        if (cur.label != prev.label) {
            out.segments.push_back(std::move(prev));
            prev = cur;
            prev_scored = false;
            continue;
        }
        if (!prev_scored) prev_score = score(prev.start_clip, prev.end_clip);
        const double cur_score = score(cur.start_clip, cur.end_clip);
        const double merged_score = score(prev.start_clip, cur.end_clip);
        if ((prev_score + cur_score) / 2.0 > merged_score) {
            prev = fuse(prev, cur);
            prev_score = merged_score;
            prev_scored = true;
        } else {
            out.segments.push_back(std::move(prev));
            prev = cur;
            prev_score = cur_score;
            prev_scored = true;
        }
    }
    out.segments.push_back(std::move(prev));
    return out;
}

SegmentPartition csm_pass(const SegmentPartition& partition, const FeatureStream& stream, const TalModel& model,
                          const MergeConfig& cfg) {
    cfg.validate();
    return csm_pass(partition, model_scorer(stream, model, cfg.s));
}

int split_point(const MatrixRef& segment_features, const TalModel& model) {
    const ModelOutput out = forward(model, segment_features);
    if (out.length() < 2) throw ValidationError("split_point: segment needs at least two clips");
    int best = 1;
    double best_sim = 2.0;
    for (int j = 1; j < out.length(); ++j) {
        const double na = out.embed.row(j - 1).norm();
        const double nb = out.embed.row(j).norm();
        const double sim = (na > 0.0 && nb > 0.0) ? out.embed.row(j - 1).dot(out.embed.row(j)) / (na * nb) : 0.0;
        if (sim < best_sim) {
            best_sim = sim;
            best = j;
        }
    }
    return best;
}

SegmentPartition csms_split_pass(const SegmentPartition& partition, const FeatureStream& stream,
                                 const TalModel& model, const MergeConfig& cfg) {
    cfg.validate();
    require_labels(partition, "csms_split_pass");
    const int to = cfg.original_length;
    SegmentPartition out;
    for (const auto& seg : partition.segments) {
        if (seg.length() < 2) {
            out.segments.push_back(seg);
            continue;
        }
        const auto rows = segment_rows(stream, seg);
        const int p = split_point(rows, model);
        const double whole = contrast_score(rows, model, cfg.s);
        const double left = contrast_score(rows.topRows(p), model, cfg.s);
        const double right = contrast_score(rows.bottomRows(seg.length() - p), model, cfg.s);
        if ((left + right) / 2.0 < whole) {
            auto origin_of = [to](int start, int end) {
                std::vector<int> o;
                for (int k = start / to; k <= (end - 1) / to; ++k) o.push_back(k);
                return o;
            };
            const int mid = seg.start_clip + p;
            out.segments.push_back({seg.start_clip, mid, seg.label, origin_of(seg.start_clip, mid)});
            out.segments.push_back({mid, seg.end_clip, seg.label, origin_of(mid, seg.end_clip)});
        } else {
            out.segments.push_back(seg);
        }
    }
    return out;
}

SegmentPartition merge_all(const SegmentPartition& partition) {
    require_labels(partition, "merge_all");
    SegmentPartition out;
    for (const auto& seg : partition.segments) {
        if (!out.empty() && out.segments.back().label == seg.label) {
            out.segments.back() = fuse(out.segments.back(), seg);
        } else {
            out.segments.push_back(seg);
        }
    }
    return out;
}

SegmentPartition random_merge(const SegmentPartition& partition, Rng& rng) {
    require_labels(partition, "random_merge");
    SegmentPartition out;
    for (std::size_t j = 0; j < partition.size(); ++j) {
        const Segment& seg = partition[j];
        // Internal boundary of a same-label run: drop it (merge) on heads.
        if (j > 0 && partition[j - 1].label == seg.label && rng.coin(0.5)) {
            out.segments.back() = fuse(out.segments.back(), seg);
        } else {
            out.segments.push_back(seg);
        }
    }
    return out;
}

SegmentPartition for_each_labeled_run(const SegmentPartition& partition,
                                      const std::function<SegmentPartition(const SegmentPartition&)>& fn) {
    SegmentPartition out;
    SegmentPartition run;
    auto flush = [&] {
        if (run.empty()) return;
        for (auto& s : fn(run).segments) out.segments.push_back(std::move(s));
        run.segments.clear();
    };
    for (const auto& seg : partition.segments) {
        if (seg.label) {
            run.segments.push_back(seg);
        } else {
            flush();
            out.segments.push_back(seg);
        }
    }
    flush();
    return out;
}

}  // namespace streamtal
