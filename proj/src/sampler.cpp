#include "streamtal/sampler.hpp"

#include "csv.hpp"
#include "streamtal/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace streamtal {

std::string to_string(SamplerKind k) {
    switch (k) {
        case SamplerKind::Random: return "rs";
        case SamplerKind::Uncertainty: return "us";
        case SamplerKind::Interests: return "is";
        case SamplerKind::All: return "all";
    }
    return "?";
}

SamplerKind parse_sampler(const std::string& name) {
    if (name == "rs") return SamplerKind::Random;
    if (name == "us") return SamplerKind::Uncertainty;
    if (name == "is") return SamplerKind::Interests;
    if (name == "all") return SamplerKind::All;
    throw ConfigError("unknown sampler '" + name + "' (expected rs, us, is, all)");
}

double segment_entropy(const Vector& a_act) {
    if (a_act.size() == 0) throw ValidationError("segment_entropy: empty segment");
    auto xlogx = [](double v) { return v > 0.0 ? v * std::log(v) : 0.0; };
    double s = 0.0;
    for (Eigen::Index j = 0; j < a_act.size(); ++j) {
        const double a = a_act[j];
        if (!(a >= 0.0 && a <= 1.0)) throw ValidationError("segment_entropy: actionness outside [0, 1]");
        s += -(xlogx(a) + xlogx(1.0 - a));
    }
    return s / static_cast<double>(a_act.size());
}

std::vector<int> top_scores(const std::vector<double>& scores, int count) {
    std::vector<int> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return scores[a] > scores[b]; });
    idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(std::max(count, 0))));
    std::sort(idx.begin(), idx.end());
    return idx;
}

namespace {

Selection from_scores(const std::vector<double>& scores, int count, SamplerKind kind) {
    Selection sel;
    sel.strategy = kind;
    sel.indices = top_scores(scores, count);
    for (int i : sel.indices) sel.scores.push_back(scores[i]);
    return sel;
}

void check_budget(const Budget& b) {
    if (b.n < 1 || b.classes < 1) throw ValidationError("budget must be at least one segment");
}

}  // namespace

Selection sample_random(const SegmentPartition& partition, const Budget& budget, Rng& rng) {
    check_budget(budget);
    const int n = static_cast<int>(partition.size());
    const int k = std::min(budget.total(), n);
    std::vector<int> pool(static_cast<std::size_t>(n));
    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 0; i < k; ++i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(i, n - 1));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(static_cast<std::size_t>(k));
    std::sort(pool.begin(), pool.end());
    Selection sel;
    sel.strategy = SamplerKind::Random;
    sel.indices = std::move(pool);
    sel.scores.assign(sel.indices.size(), 0.0);
    return sel;
}

Selection sample_uncertainty(const SegmentPartition& partition, const FeatureStream& stream, const TalModel& model,
                             const Budget& budget) {
    check_budget(budget);
    std::vector<double> scores;
    scores.reserve(partition.size());
    for (const auto& seg : partition.segments) {
        scores.push_back(segment_entropy(forward(model, segment_rows(stream, seg)).actionness));
    }
    return from_scores(scores, budget.total(), SamplerKind::Uncertainty);
}

InterestScore interest_score(const SegmentPartition& partition, std::size_t index, const FeatureStream& stream,
                             const TalModel& model, const DetectConfig& cfg) {
    DetectConfig zero_nms = cfg;
    zero_nms.nms_iou = 0.0;
    const Segment& seg = partition[index];
    InterestScore is;
    is.segment_index = static_cast<int>(index);
    is.area1 = detect(model, segment_rows(stream, seg), zero_nms, seg.start_clip);

    const int lo = index > 0 ? partition[index - 1].start_clip : seg.start_clip;
    const int hi = index + 1 < partition.size() ? partition[index + 1].end_clip : seg.end_clip;
    for (Proposal p : detect(model, stream.features.middleRows(lo, hi - lo), zero_nms, lo)) {
        p.start_clip = std::max(p.start_clip, seg.start_clip);
        p.end_clip = std::min(p.end_clip, seg.end_clip);
        if (p.start_clip < p.end_clip) is.area2.push_back(p);
    }

    auto mask_of = [&](const std::vector<Proposal>& props) {
        std::vector<char> m(static_cast<std::size_t>(seg.length()), 0);
        for (const auto& p : props) {
            for (int c = p.start_clip; c < p.end_clip; ++c) m[c - seg.start_clip] = 1;
        }
        return m;
    };
    const auto m1 = mask_of(is.area1);
    const auto m2 = mask_of(is.area2);
    for (std::size_t c = 0; c < m1.size(); ++c) is.interests_length += (m1[c] && m2[c]) ? 1 : 0;
    is.score = static_cast<double>(is.interests_length) / seg.length();
    return is;
}

Selection sample_interests(const SegmentPartition& partition, const FeatureStream& stream, const TalModel& model,
                           const Budget& budget, const DetectConfig& cfg, std::vector<InterestScore>* details) {
    check_budget(budget);
    std::vector<double> scores;
    scores.reserve(partition.size());
    if (details) details->clear();
    for (std::size_t i = 0; i < partition.size(); ++i) {
        InterestScore is = interest_score(partition, i, stream, model, cfg);
        scores.push_back(is.score);
        if (details) details->push_back(std::move(is));
    }
    return from_scores(scores, budget.total(), SamplerKind::Interests);
}

Selection select_all(const SegmentPartition& partition) {
    Selection sel;
    sel.strategy = SamplerKind::All;
    sel.indices.resize(partition.size());
    std::iota(sel.indices.begin(), sel.indices.end(), 0);
    sel.scores.assign(sel.indices.size(), 1.0);
    return sel;
}

void write_selection_manifest(const std::filesystem::path& path, const Selection& selection) {
    auto out = detail::open_for_write(path);
    out << "segment_index,score,strategy\n";
    char buf[32];
    for (std::size_t k = 0; k < selection.indices.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%.6f", selection.scores[k]);
        out << selection.indices[k] << ',' << buf << ',' << to_string(selection.strategy) << '\n';
    }
}

}  // namespace streamtal
