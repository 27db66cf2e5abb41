#include "streamtal/tal_model.hpp"

#include "binary_io.hpp"
#include "csv.hpp"
#include "streamtal/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace streamtal {

void ModelDims::validate() const {
    if (input_dim < 1 || embed_dim < 1 || hidden_dim < 1 || num_classes < 1 || kernel_width < 1) {
        throw ValidationError("model dimensions must all be >= 1");
    }
    if (kernel_width % 2 == 0) throw ValidationError("kernel width must be odd for symmetric same-padding");
}

TalParameters TalParameters::zeros(const ModelDims& d) {
    TalParameters p;
    p.embed_w = Matrix::Zero(d.input_dim, d.embed_dim);
    p.embed_b = RowVector::Zero(d.embed_dim);
    p.conv1_w.assign(static_cast<std::size_t>(d.kernel_width), Matrix::Zero(d.embed_dim, d.hidden_dim));
    p.conv1_b = RowVector::Zero(d.hidden_dim);
    p.conv2_w.assign(static_cast<std::size_t>(d.kernel_width), Matrix::Zero(d.hidden_dim, d.num_classes));
    p.conv2_b = RowVector::Zero(d.num_classes);
    return p;
}

Eigen::Index TalParameters::parameter_count() const {
    Eigen::Index n = 0;
    for_each_tensor([&](const double*, Eigen::Index size) { n += size; });
    return n;
}

bool TalParameters::all_finite() const {
    bool ok = true;
    for_each_tensor([&](const double* data, Eigen::Index size) {
        for (Eigen::Index i = 0; i < size && ok; ++i) ok = std::isfinite(data[i]);
    });
    return ok;
}

namespace {

void fill_uniform(double* data, Eigen::Index size, double bound, Rng& rng) {
    for (Eigen::Index i = 0; i < size; ++i) data[i] = rng.uniform(-bound, bound);
}

// Rows of `in` shifted by `offset` with edge replication.
Matrix shifted_rows(const Matrix& in, int offset) {
    const int n = static_cast<int>(in.rows());
    Matrix s(in.rows(), in.cols());
    for (int t = 0; t < n; ++t) s.row(t) = in.row(std::clamp(t + offset, 0, n - 1));
    return s;
}

Matrix conv_same(const Matrix& in, const std::vector<Matrix>& taps, const RowVector& bias) {
    const int radius = static_cast<int>(taps.size()) / 2;
    Matrix out = Matrix::Zero(in.rows(), bias.size());
    for (std::size_t o = 0; o < taps.size(); ++o) {
        out.noalias() += shifted_rows(in, static_cast<int>(o) - radius) * taps[o];
    }
    out.rowwise() += bias;
    return out;
}

// Accumulates tap/bias gradients and returns the gradient w.r.t. `in`.
Matrix conv_same_backward(const Matrix& in, const std::vector<Matrix>& taps, const Matrix& d_out,
                          std::vector<Matrix>& d_taps, RowVector& d_bias) {
    const int n = static_cast<int>(in.rows());
    const int radius = static_cast<int>(taps.size()) / 2;
    Matrix d_in = Matrix::Zero(in.rows(), in.cols());
    d_bias += d_out.colwise().sum();
    for (std::size_t o = 0; o < taps.size(); ++o) {
        const int offset = static_cast<int>(o) - radius;
        d_taps[o].noalias() += shifted_rows(in, offset).transpose() * d_out;
        const Matrix d_shift = d_out * taps[o].transpose();
        for (int t = 0; t < n; ++t) d_in.row(std::clamp(t + offset, 0, n - 1)) += d_shift.row(t);
    }
    return d_in;
}

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

ModelOutput output_from_trace(ForwardTrace&& trace) {
    ModelOutput out;
    out.actionness = trace.cas.rowwise().sum().unaryExpr([](double s) { return sigmoid(s); });
    out.binary = binarize_actionness(out.actionness);
    out.embed = std::move(trace.embed);
    out.cas = std::move(trace.cas);
    return out;
}

void check_input(const TalModel& model, const MatrixRef& input) {
    if (input.rows() < 1) throw ValidationError("forward: input must have at least one row");
    if (input.cols() != model.dims.input_dim) {
        throw ValidationError("forward: input has " + std::to_string(input.cols()) + " columns, model expects " +
                              std::to_string(model.dims.input_dim));
    }
    if (!input.allFinite()) throw ValidationError("forward: input contains non-finite values");
}

}  // namespace

TalModel init_model(const ModelDims& dims, std::uint64_t seed, const ModelHyper& hyper) {
    dims.validate();
    if (!(hyper.tau > 0.0)) throw ValidationError("tau must be positive");
    TalModel m{dims, hyper, TalParameters::zeros(dims), {TalParameters::zeros(dims), TalParameters::zeros(dims), 0}};
    Rng rng(seed);
    const double w = dims.kernel_width;
    const double a_embed = std::sqrt(6.0 / (dims.input_dim + dims.embed_dim));
    const double a_conv1 = std::sqrt(6.0 / (w * dims.embed_dim + w * dims.hidden_dim));
    const double a_conv2 = std::sqrt(6.0 / (w * dims.hidden_dim + w * dims.num_classes));
    fill_uniform(m.params.embed_w.data(), m.params.embed_w.size(), a_embed, rng);
    fill_uniform(m.params.embed_b.data(), m.params.embed_b.size(), a_embed, rng);
    for (auto& k : m.params.conv1_w) fill_uniform(k.data(), k.size(), a_conv1, rng);
    fill_uniform(m.params.conv1_b.data(), m.params.conv1_b.size(), a_conv1, rng);
    for (auto& k : m.params.conv2_w) fill_uniform(k.data(), k.size(), a_conv2, rng);
    fill_uniform(m.params.conv2_b.data(), m.params.conv2_b.size(), a_conv2, rng);
    return m;
}

TalModel zero_model(const ModelDims& dims, const ModelHyper& hyper) {
    dims.validate();
    return TalModel{dims, hyper, TalParameters::zeros(dims),
                    {TalParameters::zeros(dims), TalParameters::zeros(dims), 0}};
}

ForwardTrace trace_forward(const TalModel& model, const MatrixRef& input) {
    check_input(model, input);
    const auto& p = model.params;
    ForwardTrace tr;
    tr.input = input;
    tr.embed_pre = tr.input * p.embed_w;
    tr.embed_pre.rowwise() += p.embed_b;
    tr.embed = tr.embed_pre.cwiseMax(0.0);
    tr.hidden_pre = conv_same(tr.embed, p.conv1_w, p.conv1_b);
    tr.hidden = tr.hidden_pre.cwiseMax(0.0);
    tr.cas = conv_same(tr.hidden, p.conv2_w, p.conv2_b);
    return tr;
}

ModelOutput forward(const TalModel& model, const MatrixRef& input) {
    return output_from_trace(trace_forward(model, input));
}

TalParameters backward(const TalModel& model, const ForwardTrace& tr, const Matrix& d_cas, const Matrix& d_embed) {
    TalParameters g = TalParameters::zeros(model.dims);
    const Matrix d_hidden = conv_same_backward(tr.hidden, model.params.conv2_w, d_cas, g.conv2_w, g.conv2_b);
    const Matrix d_hidden_pre = d_hidden.cwiseProduct((tr.hidden_pre.array() > 0.0).cast<double>().matrix());
    Matrix d_emb = conv_same_backward(tr.embed, model.params.conv1_w, d_hidden_pre, g.conv1_w, g.conv1_b);
    d_emb += d_embed;
    const Matrix d_embed_pre = d_emb.cwiseProduct((tr.embed_pre.array() > 0.0).cast<double>().matrix());
    g.embed_w.noalias() += tr.input.transpose() * d_embed_pre;
    g.embed_b += d_embed_pre.colwise().sum();
    return g;
}

std::vector<int> video_topk_indices(const ModelOutput& out, int k_easy) {
    return top_k_largest(out.actionness, k_easy);
}

std::string to_string(VideoPooling p) { return p == VideoPooling::Actionness ? "actionness" : "per_class"; }

VideoPooling parse_pooling(const std::string& name) {
    if (name == "actionness") return VideoPooling::Actionness;
    if (name == "per_class") return VideoPooling::PerClass;
    throw ConfigError("unknown video pooling '" + name + "' (expected actionness, per_class)");
}

std::vector<std::vector<int>> pooled_indices(const Matrix& cas, const Vector& actionness, int k_easy,
                                             VideoPooling pooling) {
    std::vector<std::vector<int>> picks(static_cast<std::size_t>(cas.cols()));
    if (pooling == VideoPooling::Actionness) {
        const auto shared = top_k_largest(actionness, k_easy);
        for (auto& p : picks) p = shared;
        return picks;
    }
    for (Eigen::Index c = 0; c < cas.cols(); ++c) picks[c] = top_k_largest(cas.col(c), k_easy);
    return picks;
}

namespace {

Vector pooled_logits(const Matrix& cas, const std::vector<std::vector<int>>& picks) {
    Vector mean = Vector::Zero(cas.cols());
    for (Eigen::Index c = 0; c < cas.cols(); ++c) {
        for (int t : picks[c]) mean[c] += cas(t, c);
        mean[c] /= static_cast<double>(picks[c].size());
    }
    return mean;
}

}  // namespace

Vector video_level_prediction(const ModelOutput& out, int k_easy, VideoPooling pooling) {
    return softmax(pooled_logits(out.cas, pooled_indices(out.cas, out.actionness, k_easy, pooling)));
}

void adam_update(TalModel& model, const TalParameters& grad) {
    auto& st = model.adam;
    ++st.step;
    const auto& h = model.hyper;
    const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(st.step));

    std::vector<double*> p_ptr, m_ptr, v_ptr;
    std::vector<const double*> g_ptr;
    std::vector<Eigen::Index> sizes;
    model.params.for_each_tensor([&](double* d, Eigen::Index n) {
        p_ptr.push_back(d);
        sizes.push_back(n);
    });
    st.first_moment.for_each_tensor([&](double* d, Eigen::Index) { m_ptr.push_back(d); });
    st.second_moment.for_each_tensor([&](double* d, Eigen::Index) { v_ptr.push_back(d); });
    grad.for_each_tensor([&](const double* d, Eigen::Index) { g_ptr.push_back(d); });

    for (std::size_t k = 0; k < p_ptr.size(); ++k) {
        for (Eigen::Index i = 0; i < sizes[k]; ++i) {
            const double g = g_ptr[k][i];
            double& m = m_ptr[k][i];
            double& v = v_ptr[k][i];
            m = h.beta1 * m + (1.0 - h.beta1) * g;
            v = h.beta2 * v + (1.0 - h.beta2) * g * g;
            p_ptr[k][i] -= h.learning_rate * (m / bc1) / (std::sqrt(v / bc2) + h.adam_eps);
        }
    }
}

namespace {

void add_scaled(TalParameters& acc, const TalParameters& g, double scale) {
    std::vector<double*> a;
    acc.for_each_tensor([&](double* d, Eigen::Index) { a.push_back(d); });
    std::size_t k = 0;
    g.for_each_tensor([&](const double* d, Eigen::Index n) {
        for (Eigen::Index i = 0; i < n; ++i) a[k][i] += scale * d[i];
        ++k;
    });
}

}  // namespace

StepLosses sample_loss(const TalModel& model, const MatrixRef& input, int label, const MiningResult& mining,
                       double lambda, TalParameters* grad, double scale) {
    if (label < 0 || label >= model.dims.num_classes) throw ValidationError("training label out of range");
    ForwardTrace tr = trace_forward(model, input);
    const int length = static_cast<int>(tr.cas.rows());
    for (int t : mining.ea) {
        if (t < 0 || t >= length) throw ValidationError("mining index out of range");
    }

    // Video-level prediction: the easy-action clips, or each class's own top clips.
    std::vector<std::vector<int>> picks(static_cast<std::size_t>(tr.cas.cols()), mining.ea);
    if (model.hyper.pooling == VideoPooling::PerClass) {
        picks = pooled_indices(tr.cas, Vector(), static_cast<int>(mining.ea.size()), VideoPooling::PerClass);
    }
    const Vector pred = softmax(pooled_logits(tr.cas, picks));

    StepLosses losses;
    losses.loss_a = action_loss(pred, label);

    Matrix d_embed = Matrix::Zero(tr.embed.rows(), tr.embed.cols());
    if (lambda != 0.0) {
        if (grad != nullptr) {
            losses.loss_s = snico_loss_backward(tr.embed, mining, model.hyper.tau, lambda, d_embed);
        } else {
            losses.loss_s = snico_loss(tr.embed, mining, model.hyper.tau);
        }
    }
    losses.loss_total = losses.loss_a + lambda * losses.loss_s;
    if (grad == nullptr) return losses;

    Vector d_logits = pred;
    d_logits[label] -= 1.0;
    Matrix d_cas = Matrix::Zero(tr.cas.rows(), tr.cas.cols());
    for (Eigen::Index c = 0; c < tr.cas.cols(); ++c) {
        for (int t : picks[c]) d_cas(t, c) += d_logits[c] / static_cast<double>(picks[c].size());
    }
    add_scaled(*grad, backward(model, tr, d_cas, d_embed), scale);
    return losses;
}

StepLosses train_step(TalModel& model, std::span<const TrainingSample> batch, const MiningConfig& cfg, Rng& rng) {
    if (batch.empty()) throw ValidationError("train_step: empty batch");
    TalParameters grad = TalParameters::zeros(model.dims);
    StepLosses total;
    const double scale = 1.0 / static_cast<double>(batch.size());
    for (const auto& sample : batch) {
        const ModelOutput out = forward(model, sample.input.input);
        const MiningResult mining = mine_snippets(out.actionness, out.binary, cfg, rng);
        const StepLosses l = sample_loss(model, sample.input.input, sample.label, mining, cfg.lambda, &grad, scale);
        if (!std::isfinite(l.loss_a) || !std::isfinite(l.loss_s)) {
            std::ostringstream msg;
            msg << "non-finite " << (!std::isfinite(l.loss_a) ? "action loss" : "snippet-contrast loss")
                << " on segment " << sample.segment_index << " (label " << sample.label << ", length "
                << sample.input.input.rows() << ")";
            throw NumericError(msg.str());
        }
        total.loss_a += scale * l.loss_a;
        total.loss_s += scale * l.loss_s;
        total.loss_total += scale * l.loss_total;
    }
    adam_update(model, grad);
    if (!model.params.all_finite()) throw NumericError("non-finite parameter after Adam update");
    return total;
}

double gradient_check(const TalModel& model, const MatrixRef& input, int label, const MiningResult& mining, double eps,
                      double lambda) {
    if (!(eps > 0.0) || eps > 1e-3) throw ValidationError("gradient_check: eps must be in (0, 1e-3]");
    TalParameters analytic = TalParameters::zeros(model.dims);
    sample_loss(model, input, label, mining, lambda, &analytic);

    TalModel probe = model;
    std::vector<double*> probe_ptr;
    std::vector<Eigen::Index> sizes;
    probe.params.for_each_tensor([&](double* d, Eigen::Index n) {
        probe_ptr.push_back(d);
        sizes.push_back(n);
    });
    std::vector<const double*> g_ptr;
    analytic.for_each_tensor([&](const double* d, Eigen::Index) { g_ptr.push_back(d); });

    double worst = 0.0;
    for (std::size_t k = 0; k < probe_ptr.size(); ++k) {
        for (Eigen::Index i = 0; i < sizes[k]; ++i) {
            const double saved = probe_ptr[k][i];
            probe_ptr[k][i] = saved + eps;
            const double up = sample_loss(probe, input, label, mining, lambda).loss_total;
            probe_ptr[k][i] = saved - eps;
            const double down = sample_loss(probe, input, label, mining, lambda).loss_total;
            probe_ptr[k][i] = saved;
            const double fd = (up - down) / (2.0 * eps);
            const double ga = g_ptr[k][i];
            const double rel = std::abs(ga - fd) / std::max(1e-8, std::abs(ga) + std::abs(fd));
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

namespace {

constexpr char kModelMagic[5] = "TALM";
constexpr std::uint32_t kModelVersion = 1;

void write_tensors(std::ostream& out, const TalParameters& p) {
    p.for_each_tensor([&](const double* d, Eigen::Index n) {
        for (Eigen::Index i = 0; i < n; ++i) detail::put_f64(out, d[i]);
    });
}

void read_tensors(std::istream& in, TalParameters& p) {
    p.for_each_tensor([&](double* d, Eigen::Index n) {
        for (Eigen::Index i = 0; i < n; ++i) d[i] = detail::get_f64(in, "model tensor");
    });
}

TalModel read_model(std::istream& in) {
    detail::expect_magic(in, kModelMagic);
    const auto version = detail::get_uint<std::uint32_t>(in, "version");
    if (version != kModelVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
    ModelDims dims;
    dims.input_dim = static_cast<int>(detail::get_uint<std::uint32_t>(in, "D1"));
    dims.embed_dim = static_cast<int>(detail::get_uint<std::uint32_t>(in, "D2"));
    dims.hidden_dim = static_cast<int>(detail::get_uint<std::uint32_t>(in, "H"));
    dims.num_classes = static_cast<int>(detail::get_uint<std::uint32_t>(in, "C"));
    dims.kernel_width = static_cast<int>(detail::get_uint<std::uint32_t>(in, "w"));
    dims.validate();
    ModelHyper hyper;
    hyper.tau = detail::get_f64(in, "tau");
    hyper.learning_rate = detail::get_f64(in, "learning rate");
    hyper.beta1 = detail::get_f64(in, "beta1");
    hyper.beta2 = detail::get_f64(in, "beta2");
    hyper.adam_eps = detail::get_f64(in, "adam eps");
    const auto pooling = detail::get_uint<std::uint32_t>(in, "pooling");
    if (pooling > 1) throw FormatError("unknown pooling code " + std::to_string(pooling));
    hyper.pooling = static_cast<VideoPooling>(pooling);
    TalModel m = zero_model(dims, hyper);
    read_tensors(in, m.params);
    m.adam.step = detail::get_uint<std::uint64_t>(in, "adam step");
    read_tensors(in, m.adam.first_moment);
    read_tensors(in, m.adam.second_moment);
    if (!m.params.all_finite()) throw ValidationError("checkpoint contains non-finite parameters");
    return m;
}

}  // namespace

std::string checkpoint_bytes(const TalModel& model) {
    std::ostringstream out(std::ios::binary);
    out.write(kModelMagic, 4);
    detail::put_uint<std::uint32_t>(out, kModelVersion);
    const auto& d = model.dims;
    for (int v : {d.input_dim, d.embed_dim, d.hidden_dim, d.num_classes, d.kernel_width}) {
        detail::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(v));
    }
    const auto& h = model.hyper;
    for (double v : {h.tau, h.learning_rate, h.beta1, h.beta2, h.adam_eps}) detail::put_f64(out, v);
    detail::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(h.pooling));
    write_tensors(out, model.params);
    detail::put_uint<std::uint64_t>(out, model.adam.step);
    write_tensors(out, model.adam.first_moment);
    write_tensors(out, model.adam.second_moment);
    return out.str();
}

TalModel model_from_checkpoint_bytes(const std::string& bytes) {
    std::istringstream in(bytes, std::ios::binary);
    return read_model(in);
}

void save_checkpoint(const std::filesystem::path& path, const TalModel& model) {
    auto out = detail::open_for_write(path);
    const std::string bytes = checkpoint_bytes(model);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + path.string());
}

TalModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return read_model(in);
}

}  // namespace streamtal
