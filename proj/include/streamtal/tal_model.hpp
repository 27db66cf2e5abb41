#pragma once

#include "streamtal/mining.hpp"
#include "streamtal/rng.hpp"
#include "streamtal/stream_core.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace streamtal {

struct ModelDims {
    int input_dim = 32;     // D1
    int embed_dim = 32;     // D2
    int hidden_dim = 32;    // H
    int num_classes = 5;    // C
    int kernel_width = 3;   // w, odd

    void validate() const;
    bool operator==(const ModelDims&) const = default;
};

/// Which clips feed the video-level prediction for each class.
/// Actionness: the k_easy highest-actionness clips, shared by all classes.
/// PerClass: the k_easy highest A_cls clips of each class column.
enum class VideoPooling : std::uint32_t { Actionness = 0, PerClass = 1 };

std::string to_string(VideoPooling p);
VideoPooling parse_pooling(const std::string& name);  // actionness, per_class

struct ModelHyper {
    double tau = 0.07;
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    VideoPooling pooling = VideoPooling::PerClass;
};

/// Trainable tensors in declaration order:
/// embed_w (D1 x D2), embed_b, conv1 taps (w of D2 x H), conv1_b,
/// conv2 taps (w of H x C), conv2_b.
struct TalParameters {
    Matrix embed_w;
    RowVector embed_b;
    std::vector<Matrix> conv1_w;
    RowVector conv1_b;
    std::vector<Matrix> conv2_w;
    RowVector conv2_b;

    static TalParameters zeros(const ModelDims& dims);

    // Visits every tensor as (data, size) in declaration order.
    template <class F>
    void for_each_tensor(F&& f) {
        f(embed_w.data(), embed_w.size());
        f(embed_b.data(), embed_b.size());
        for (auto& k : conv1_w) f(k.data(), k.size());
        f(conv1_b.data(), conv1_b.size());
        for (auto& k : conv2_w) f(k.data(), k.size());
        f(conv2_b.data(), conv2_b.size());
    }
    template <class F>
    void for_each_tensor(F&& f) const {
        const_cast<TalParameters*>(this)->for_each_tensor(
            [&](double* data, Eigen::Index size) { f(static_cast<const double*>(data), size); });
    }

    Eigen::Index parameter_count() const;
    bool all_finite() const;
};

struct AdamState {
    TalParameters first_moment;
    TalParameters second_moment;
    std::uint64_t step = 0;
};

/// Embedding (FC + relu) followed by a two-layer 1-D convolution classifier.
struct TalModel {
    ModelDims dims;
    ModelHyper hyper;
    TalParameters params;
    AdamState adam;
};

/// Per-clip outputs for one input sequence of length T.
struct ModelOutput {
    Matrix embed;              // E, T x D2
    Matrix cas;                // A_cls, T x C
    Vector actionness;         // A_act in [0, 1]
    std::vector<int> binary;   // A_bin

    int length() const { return static_cast<int>(cas.rows()); }
};

/// Seeded Glorot-uniform initialization with zeroed Adam state.
TalModel init_model(const ModelDims& dims, std::uint64_t seed, const ModelHyper& hyper = {});

/// Model whose every parameter is zero.
TalModel zero_model(const ModelDims& dims, const ModelHyper& hyper = {});

ModelOutput forward(const TalModel& model, const MatrixRef& input);

/// Intermediate activations kept for the backward pass.
struct ForwardTrace {
    Matrix input;
    Matrix embed_pre;
    Matrix embed;
    Matrix hidden_pre;
    Matrix hidden;
    Matrix cas;
};

ForwardTrace trace_forward(const TalModel& model, const MatrixRef& input);

/// Parameter gradients given upstream gradients on A_cls and on E.
TalParameters backward(const TalModel& model, const ForwardTrace& trace, const Matrix& d_cas,
                       const Matrix& d_embed);

/// Top-k actionness clips (k_easy, lower index first on ties).
std::vector<int> video_topk_indices(const ModelOutput& out, int k_easy);

/// Clips pooled for each class column.
std::vector<std::vector<int>> pooled_indices(const Matrix& cas, const Vector& actionness, int k_easy,
                                             VideoPooling pooling);

/// softmax over classes of the mean pooled A_cls value.
Vector video_level_prediction(const ModelOutput& out, int k_easy, VideoPooling pooling);

/// Applies one Adam update with the given (already batch-averaged) gradient.
void adam_update(TalModel& model, const TalParameters& grad);

struct TrainingSample {
    ResampledInput input;
    int label = 0;
    int segment_index = -1;  // for diagnostics only
};

struct StepLosses {
    double loss_a = 0.0;
    double loss_s = 0.0;
    double loss_total = 0.0;
};

/// Loss of one sample for fixed mining sets; gradients are added into `grad`
/// scaled by `scale` when it is non-null.
StepLosses sample_loss(const TalModel& model, const MatrixRef& input, int label, const MiningResult& mining,
                       double lambda, TalParameters* grad = nullptr, double scale = 1.0);

/// Batch-mean of L_a + lambda * L_s, one Adam update; returns the pre-update losses.
/// Mining runs on the current model's outputs; hard sets draw from `rng`.
StepLosses train_step(TalModel& model, std::span<const TrainingSample> batch, const MiningConfig& cfg, Rng& rng);

/// Max relative error between analytic and central-difference gradients of
/// L_a + lambda * L_s with the mining sets held fixed.
double gradient_check(const TalModel& model, const MatrixRef& input, int label, const MiningResult& mining,
                      double eps, double lambda = 1.0);

std::string checkpoint_bytes(const TalModel& model);
TalModel model_from_checkpoint_bytes(const std::string& bytes);
void save_checkpoint(const std::filesystem::path& path, const TalModel& model);
TalModel load_checkpoint(const std::filesystem::path& path);

}  // namespace streamtal
