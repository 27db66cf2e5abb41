#include "streamtal/mining.hpp"

#include "streamtal/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace streamtal {

std::vector<int> binarize_actionness(const Vector& a_act) {
    std::vector<int> out(static_cast<std::size_t>(a_act.size()), 0);
    if (a_act.size() == 0) return out;
    const double lo = a_act.minCoeff();
    const double hi = a_act.maxCoeff();
    if (!(hi > lo)) return out;
    for (Eigen::Index t = 0; t < a_act.size(); ++t) {
        out[t] = (a_act[t] - lo) / (hi - lo) >= 0.5 ? 1 : 0;
    }
    return out;
}

namespace {

std::vector<int> ranked_indices(const Vector& values, bool descending) {
    std::vector<int> idx(static_cast<std::size_t>(values.size()));
    std::iota(idx.begin(), idx.end(), 0);
    if (descending) {
        std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return values[a] > values[b]; });
    } else {
        std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return values[a] < values[b]; });
    }
    return idx;
}

void check_k(int k, Eigen::Index length) {
    if (k < 1 || k > length) {
        throw ValidationError("top-k size " + std::to_string(k) + " outside [1, " + std::to_string(length) + "]");
    }
}

std::vector<int> sample_from(const std::vector<int>& pool, int k, Rng& rng) {
    std::vector<int> picked;
    picked.reserve(static_cast<std::size_t>(k));
    if (static_cast<int>(pool.size()) >= k) {
        std::vector<int> work = pool;
        for (int i = 0; i < k; ++i) {
            const auto j = static_cast<std::size_t>(rng.uniform_int(i, static_cast<std::int64_t>(work.size()) - 1));
            std::swap(work[i], work[j]);
            picked.push_back(work[i]);
        }
    } else {
        for (int i = 0; i < k; ++i) {
            const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1));
            picked.push_back(pool[j]);
        }
    }
    std::sort(picked.begin(), picked.end());
    return picked;
}

// Quartile q (0-based) of the descending actionness ranking, never empty.
std::vector<int> quartile_pool(const Vector& a_act, int q) {
    const auto order = ranked_indices(a_act, true);
    const int n = static_cast<int>(order.size());
    int lo = std::min(q * n / 4, n - 1);
    int hi = std::max(lo + 1, (q + 1) * n / 4);
    hi = std::min(hi, n);
    return {order.begin() + lo, order.begin() + hi};
}

}  // namespace

std::vector<int> top_k_largest(const Vector& values, int k) {
    check_k(k, values.size());
    auto idx = ranked_indices(values, true);
    idx.resize(static_cast<std::size_t>(k));
    return idx;
}

std::vector<int> top_k_smallest(const Vector& values, int k) {
    check_k(k, values.size());
    auto idx = ranked_indices(values, false);
    idx.resize(static_cast<std::size_t>(k));
    return idx;
}

EasySets mine_easy(const Vector& a_act, int k_easy) {
    return {top_k_largest(a_act, k_easy), top_k_smallest(a_act, k_easy)};
}

HardBands hard_candidate_bands(std::span<const int> a_bin, int inner_margin, int outer_margin) {
    if (inner_margin < 1 || outer_margin < inner_margin) {
        throw ValidationError("hard mining margins must satisfy 1 <= m <= M");
    }
    const int n = static_cast<int>(a_bin.size());
    HardBands bands;
    for (int t = 0; t < n; ++t) {
        if (a_bin[t]) {
            bool kept = true;
            for (int d = -inner_margin; d <= inner_margin && kept; ++d) {
                const int u = std::clamp(t + d, 0, n - 1);
                kept = a_bin[u] != 0;
            }
            if (!kept) bands.inner.push_back(t);
        } else {
            const int lo = std::max(0, t - outer_margin);
            const int hi = std::min(n - 1, t + outer_margin);
            for (int u = lo; u <= hi; ++u) {
                if (a_bin[u]) {
                    bands.outer.push_back(t);
                    break;
                }
            }
        }
    }
    return bands;
}

HardSets mine_hard(std::span<const int> a_bin, const Vector& a_act, int inner_margin, int outer_margin, int k_hard,
                   Rng& rng) {
    if (k_hard < 1) throw ValidationError("k_hard must be >= 1");
    if (static_cast<Eigen::Index>(a_bin.size()) != a_act.size() || a_bin.empty()) {
        throw ValidationError("mine_hard: mask and actionness lengths differ or are empty");
    }
    const HardBands bands = hard_candidate_bands(a_bin, inner_margin, outer_margin);
    HardSets out;
    out.ha_fallback = bands.inner.empty();
    out.hb_fallback = bands.outer.empty();
    out.ha = sample_from(out.ha_fallback ? quartile_pool(a_act, 1) : bands.inner, k_hard, rng);
    out.hb = sample_from(out.hb_fallback ? quartile_pool(a_act, 2) : bands.outer, k_hard, rng);
    return out;
}

MiningResult mine_snippets(const Vector& a_act, std::span<const int> a_bin, const MiningConfig& cfg, Rng& rng) {
    const int length = static_cast<int>(a_act.size());
    MiningResult m;
    m.k_easy = easy_count(length);
    m.k_hard = hard_count(length);
    auto easy = mine_easy(a_act, m.k_easy);
    m.ea = std::move(easy.ea);
    m.eb = std::move(easy.eb);
    auto hard = mine_hard(a_bin, a_act, cfg.inner_margin, cfg.outer_margin, m.k_hard, rng);
    m.ha = std::move(hard.ha);
    m.hb = std::move(hard.hb);
    return m;
}

Vector softmax(const Vector& logits) {
    const double mx = logits.maxCoeff();
    Vector e = (logits.array() - mx).exp().matrix();
    return e / e.sum();
}

double action_loss(const Vector& pred, int label) {
    if (label < 0 || label >= pred.size()) throw ValidationError("action_loss: label out of range");
    return -std::log(pred[label]);
}

Vector l2_normalize(const Vector& v, const char* what) {
    const double n = v.norm();
    if (!(n > 0.0)) throw ValidationError(std::string("zero-norm vector: ") + what);
    return v / n;
}

namespace {

// log-sum-exp over the positive logit followed by the negatives.
struct NceLogits {
    std::vector<double> logits;  // [0] positive
    double lse = 0.0;
};

NceLogits nce_logits(const Vector& x, const Vector& positive, const std::vector<Vector>& negatives, double tau) {
    if (!(tau > 0.0)) throw ValidationError("nce: tau must be positive");
    NceLogits r;
    r.logits.reserve(negatives.size() + 1);
    r.logits.push_back(x.dot(positive) / tau);
    for (const auto& n : negatives) r.logits.push_back(x.dot(n) / tau);
    const double mx = *std::max_element(r.logits.begin(), r.logits.end());
    double s = 0.0;
    for (double l : r.logits) s += std::exp(l - mx);
    r.lse = mx + std::log(s);
    return r;
}

}  // namespace

double nce(const Vector& x, const Vector& positive, const std::vector<Vector>& negatives, double tau) {
    const auto r = nce_logits(x, positive, negatives, tau);
    return r.lse - r.logits[0];
}

NceGradient nce_with_gradient(const Vector& x, const Vector& positive, const std::vector<Vector>& negatives,
                              double tau) {
    const auto r = nce_logits(x, positive, negatives, tau);
    NceGradient g;
    g.value = r.lse - r.logits[0];
    const double w_pos = std::exp(r.logits[0] - r.lse);
    g.d_x = (w_pos - 1.0) / tau * positive;
    g.d_positive = (w_pos - 1.0) / tau * x;
    g.d_negatives.reserve(negatives.size());
    for (std::size_t s = 0; s < negatives.size(); ++s) {
        const double w = std::exp(r.logits[s + 1] - r.lse);
        g.d_x += w / tau * negatives[s];
        g.d_negatives.push_back(w / tau * x);
    }
    return g;
}

namespace {

Vector mean_rows(const Matrix& embed, const std::vector<int>& rows) {
    Vector m = Vector::Zero(embed.cols());
    for (int r : rows) m += embed.row(r).transpose();
    return m / static_cast<double>(rows.size());
}

// Gradient of v/|v| pulled back from d(unit) to d(v).
Vector normalize_backward(const Vector& v, const Vector& unit, const Vector& d_unit) {
    return (d_unit - d_unit.dot(unit) * unit) / v.norm();
}

void check_indices(const std::vector<int>& idx, Eigen::Index rows, const char* what) {
    if (idx.empty()) throw ValidationError(std::string("empty mining set: ") + what);
    for (int i : idx) {
        if (i < 0 || i >= rows) throw ValidationError(std::string("mining index out of range: ") + what);
    }
}

// One anchor term: query = mean(E[query_rows]), positive = mean(E[pos_rows]),
// negatives = each row of E[neg_rows].
double contrast_term(const Matrix& embed, const std::vector<int>& query_rows, const std::vector<int>& pos_rows,
                     const std::vector<int>& neg_rows, double tau, double scale, Matrix* d_embed) {
    const Vector q_raw = mean_rows(embed, query_rows);
    const Vector p_raw = mean_rows(embed, pos_rows);
    const Vector q = l2_normalize(q_raw, "hard-snippet mean embedding");
    const Vector p = l2_normalize(p_raw, "easy-snippet mean embedding");
    std::vector<Vector> negs_raw;
    std::vector<Vector> negs;
    negs_raw.reserve(neg_rows.size());
    negs.reserve(neg_rows.size());
    for (int r : neg_rows) {
        negs_raw.push_back(embed.row(r).transpose());
        negs.push_back(l2_normalize(negs_raw.back(), "negative snippet embedding"));
    }
    if (d_embed == nullptr) return nce(q, p, negs, tau);

    const NceGradient g = nce_with_gradient(q, p, negs, tau);
    const Vector dq = normalize_backward(q_raw, q, g.d_x) * (scale / static_cast<double>(query_rows.size()));
    const Vector dp = normalize_backward(p_raw, p, g.d_positive) * (scale / static_cast<double>(pos_rows.size()));
    for (int r : query_rows) d_embed->row(r) += dq.transpose();
    for (int r : pos_rows) d_embed->row(r) += dp.transpose();
    for (std::size_t s = 0; s < neg_rows.size(); ++s) {
        d_embed->row(neg_rows[s]) += scale * normalize_backward(negs_raw[s], negs[s], g.d_negatives[s]).transpose();
    }
    return g.value;
}

double snico_impl(const Matrix& embed, const MiningResult& m, double tau, double scale, Matrix* d_embed) {
    const auto rows = embed.rows();
    check_indices(m.ea, rows, "EA");
    check_indices(m.eb, rows, "EB");
    check_indices(m.ha, rows, "HA");
    check_indices(m.hb, rows, "HB");
    return contrast_term(embed, m.ha, m.ea, m.eb, tau, scale, d_embed) +
           contrast_term(embed, m.hb, m.eb, m.ea, tau, scale, d_embed);
}

}  // namespace

double snico_loss(const Matrix& embed, const MiningResult& mining, double tau) {
    return snico_impl(embed, mining, tau, 1.0, nullptr);
}

double snico_loss_backward(const Matrix& embed, const MiningResult& mining, double tau, double scale,
                           Matrix& d_embed) {
    if (d_embed.rows() != embed.rows() || d_embed.cols() != embed.cols()) {
        throw ValidationError("snico_loss_backward: gradient buffer shape mismatch");
    }
    return snico_impl(embed, mining, tau, scale, &d_embed);
}

}  // namespace streamtal
