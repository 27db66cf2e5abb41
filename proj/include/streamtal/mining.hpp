#pragma once

#include "streamtal/rng.hpp"
#include "streamtal/stream_core.hpp"

#include <span>
#include <vector>

namespace streamtal {

/// Easy/hard snippet index sets for one segment.
///
/// `ea`/`eb` hold exactly k_easy indices, `ha`/`hb` exactly k_hard. Hard sets
/// may repeat an index when their candidate band is smaller than k_hard.
struct MiningResult {
    std::vector<int> ea;
    std::vector<int> eb;
    std::vector<int> ha;
    std::vector<int> hb;
    int k_easy = 0;
    int k_hard = 0;
};

struct MiningConfig {
    int inner_margin = 1;   // erosion radius for the hard-action band
    int outer_margin = 3;   // dilation radius for the hard-background band
    double lambda = 1.0;    // weight of the snippet-contrast loss
};

// max(1, floor(T / 5)) and max(1, floor(T / 20)).
inline int easy_count(int length) { return length / 5 > 1 ? length / 5 : 1; }
inline int hard_count(int length) { return length / 20 > 1 ? length / 20 : 1; }

/// Min-max normalize then threshold at 0.5 (inclusive). A constant vector maps to all zeros.
std::vector<int> binarize_actionness(const Vector& a_act);

/// Indices of the k largest values, ties broken toward the lower index.
std::vector<int> top_k_largest(const Vector& values, int k);
/// Indices of the k smallest values, ties broken toward the lower index.
std::vector<int> top_k_smallest(const Vector& values, int k);

struct EasySets {
    std::vector<int> ea;
    std::vector<int> eb;
};

EasySets mine_easy(const Vector& a_act, int k_easy);

/// Boundary bands of a binary mask: `inner` is what erosion with radius m
/// removes, `outer` is what dilation with radius M adds. Positions past the
/// ends of the sequence replicate the edge value, so a mask that touches an
/// end is not eroded there.
struct HardBands {
    std::vector<int> inner;
    std::vector<int> outer;
};

HardBands hard_candidate_bands(std::span<const int> a_bin, int inner_margin, int outer_margin);

struct HardSets {
    std::vector<int> ha;
    std::vector<int> hb;
    bool ha_fallback = false;
    bool hb_fallback = false;
};

/// Samples k_hard indices from each band. An empty band falls back to the
/// second (HA) or third (HB) quartile of the actionness ranking.
HardSets mine_hard(std::span<const int> a_bin, const Vector& a_act, int inner_margin, int outer_margin,
                   int k_hard, Rng& rng);

/// Full mining for a segment of length T with k_easy = easy_count(T), k_hard = hard_count(T).
MiningResult mine_snippets(const Vector& a_act, std::span<const int> a_bin, const MiningConfig& cfg, Rng& rng);

Vector softmax(const Vector& logits);

/// Cross-entropy -log(pred[label]).
double action_loss(const Vector& pred, int label);

// Unit-length copy; throws ValidationError on a zero vector.
Vector l2_normalize(const Vector& v, const char* what);

/// Noise-contrastive loss of one query against one positive and a set of
/// negatives. All vectors are expected to be unit length.
double nce(const Vector& x, const Vector& positive, const std::vector<Vector>& negatives, double tau);

struct NceGradient {
    double value = 0.0;
    Vector d_x;
    Vector d_positive;
    std::vector<Vector> d_negatives;
};

NceGradient nce_with_gradient(const Vector& x, const Vector& positive, const std::vector<Vector>& negatives,
                              double tau);

/// Snippet-contrast loss over embedded rows E (T x D2):
/// nce(HA mean -> EA mean | EB rows) + nce(HB mean -> EB mean | EA rows),
/// normalizing every vector before the inner products.
double snico_loss(const Matrix& embed, const MiningResult& mining, double tau);

/// Same value as snico_loss; adds `scale * dL/dE` into `d_embed`.
double snico_loss_backward(const Matrix& embed, const MiningResult& mining, double tau, double scale,
                           Matrix& d_embed);

}  // namespace streamtal
