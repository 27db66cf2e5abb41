#include "streamtal/error.hpp"
#include "streamtal/tal_model.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

using namespace streamtal;

namespace {

Matrix random_input(int t, int d, std::uint64_t seed) {
    Rng rng(seed);
    Matrix x(t, d);
    for (int i = 0; i < t; ++i)
        for (int j = 0; j < d; ++j) x(i, j) = rng.normal();
    return x;
}

ModelDims small_dims(int d1 = 6) { return {d1, 5, 4, 3, 3}; }

MiningResult fixed_mining(const ModelOutput& out, std::uint64_t seed) {
    Rng rng(seed);
    return mine_snippets(out.actionness, out.binary, MiningConfig{}, rng);
}

std::vector<int> argsort_desc(const Vector& v) {
    std::vector<int> idx(static_cast<std::size_t>(v.size()));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return v[a] > v[b]; });
    return idx;
}

}  // namespace

TEST_CASE("init is deterministic per seed and validates dimensions") {
    const TalModel a = init_model(small_dims(), 7);
    const TalModel b = init_model(small_dims(), 7);
    CHECK(checkpoint_bytes(a) == checkpoint_bytes(b));
    CHECK(init_model(small_dims(), 0).params.embed_w != init_model(small_dims(), 1).params.embed_w);

    ModelDims bad = small_dims();
    bad.embed_dim = 0;
    CHECK_THROWS_AS(init_model(bad, 0), ValidationError);
    bad = small_dims();
    bad.kernel_width = 4;
    CHECK_THROWS_AS(init_model(bad, 0), ValidationError);
}

TEST_CASE("init draws stay inside the Glorot bound of each tensor") {
    const ModelDims d{32, 32, 32, 5, 3};
    const TalModel m = init_model(d, 3);
    const double a_embed = std::sqrt(6.0 / 64.0);
    const double a_conv2 = std::sqrt(6.0 / (3.0 * 32 + 3.0 * 5));
    CHECK(m.params.embed_w.cwiseAbs().maxCoeff() <= a_embed);
    CHECK(m.params.embed_w.cwiseAbs().maxCoeff() > 0.9 * a_embed);
    for (const auto& k : m.params.conv2_w) CHECK(k.cwiseAbs().maxCoeff() <= a_conv2);
    CHECK(m.adam.step == 0);
    CHECK(m.adam.first_moment.embed_w.isZero());
}

TEST_CASE("zero network gives zero activations and one-half actionness") {
    const TalModel m = zero_model(small_dims());
    const ModelOutput out = forward(m, random_input(7, 6, 1));
    CHECK(out.cas.isZero());
    for (int t = 0; t < 7; ++t) CHECK(out.actionness[t] == 0.5);
    CHECK(std::all_of(out.binary.begin(), out.binary.end(), [](int b) { return b == 0; }));
}

TEST_CASE("single-clip input keeps one row everywhere") {
    const TalModel m = init_model(small_dims(), 2);
    const ModelOutput out = forward(m, random_input(1, 6, 2));
    CHECK(out.embed.rows() == 1);
    CHECK(out.cas.rows() == 1);
    CHECK(out.actionness.size() == 1);
    CHECK(out.binary.size() == 1);
}

TEST_CASE("forward is pure and actionness lies in [0, 1]") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const TalModel m = init_model(small_dims(), seed);
        const Matrix x = random_input(9, 6, seed + 100) * 3.0;
        const ModelOutput a = forward(m, x);
        const ModelOutput b = forward(m, x);
        CHECK(a.cas == b.cas);
        CHECK(a.embed == b.embed);
        CHECK(a.actionness.minCoeff() >= 0.0);
        CHECK(a.actionness.maxCoeff() <= 1.0);
    }
}

TEST_CASE("forward rejects non-finite or misshapen input") {
    const TalModel m = init_model(small_dims(), 0);
    Matrix x = random_input(4, 6, 0);
    x(2, 3) = std::nan("");
    CHECK_THROWS_AS(forward(m, x), ValidationError);
    CHECK_THROWS_AS(forward(m, random_input(4, 5, 0)), ValidationError);
}

TEST_CASE("same padding replicates edge rows") {
    // With only the left tap active, output row t reads embedded row t-1 (row 0 reads itself).
    ModelDims d{2, 2, 2, 2, 3};
    TalModel m = zero_model(d);
    m.params.embed_w = Matrix::Identity(2, 2);
    m.params.conv1_w[0] = Matrix::Identity(2, 2);
    m.params.conv2_w[1] = Matrix::Identity(2, 2);
    Matrix x(3, 2);
    x << 1, 2, 3, 4, 5, 6;
    const ModelOutput out = forward(m, x);
    Matrix expect(3, 2);
    expect << 1, 2, 1, 2, 3, 4;
    CHECK(out.cas == expect);
}

TEST_CASE("video level prediction under actionness pooling") {
    const TalModel m = init_model(small_dims(), 5);
    const ModelOutput out = forward(m, random_input(10, 6, 5));
    for (int k = 1; k <= 10; ++k) {
        const Vector p = video_level_prediction(out, k, VideoPooling::Actionness);
        CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(p.minCoeff() > 0.0);
        const auto picks = pooled_indices(out.cas, out.actionness, k, VideoPooling::Actionness);
        auto expect = argsort_desc(out.actionness);
        expect.resize(static_cast<std::size_t>(k));
        for (const auto& col : picks) CHECK(col == expect);
        CHECK(video_topk_indices(out, k) == expect);
    }
    CHECK_THROWS_AS(video_level_prediction(out, 11, VideoPooling::Actionness), ValidationError);
    CHECK_THROWS_AS(video_level_prediction(out, 0, VideoPooling::PerClass), ValidationError);
}

TEST_CASE("per-class pooling takes each class column's own top clips") {
    const TalModel m = init_model(small_dims(), 6);
    const ModelOutput out = forward(m, random_input(12, 6, 6));
    const int k = 3;
    const auto picks = pooled_indices(out.cas, out.actionness, k, VideoPooling::PerClass);
    Vector logits(out.cas.cols());
    for (Eigen::Index c = 0; c < out.cas.cols(); ++c) {
        auto expect = argsort_desc(out.cas.col(c));
        expect.resize(k);
        CHECK(picks[c] == expect);
        double s = 0.0;
        for (int t : expect) s += out.cas(t, c);
        logits[c] = s / k;
    }
    const Vector p = video_level_prediction(out, k, VideoPooling::PerClass);
    const Vector e = (logits.array() - logits.maxCoeff()).exp();
    for (Eigen::Index c = 0; c < p.size(); ++c) CHECK(p[c] == doctest::Approx(e[c] / e.sum()).epsilon(1e-12));
}

TEST_CASE("degenerate video level predictions") {
    for (VideoPooling pooling : {VideoPooling::Actionness, VideoPooling::PerClass}) {
        const TalModel m = init_model(small_dims(), 8);
        const ModelOutput one = forward(m, random_input(1, 6, 8));
        const Vector p1 = video_level_prediction(one, 1, pooling);
        CHECK((p1 - softmax(one.cas.row(0).transpose())).cwiseAbs().maxCoeff() < 1e-15);

        // Constant input and edge padding make every A_cls row identical.
        Matrix x(6, 6);
        x.rowwise() = random_input(1, 6, 9).row(0);
        const ModelOutput same = forward(m, x);
        for (int k = 1; k <= 6; ++k) {
            CHECK((video_level_prediction(same, k, pooling) - softmax(same.cas.row(0).transpose()))
                      .cwiseAbs()
                      .maxCoeff() < 1e-12);
        }
        const ModelOutput zero = forward(zero_model(small_dims()), x);
        const Vector u = video_level_prediction(zero, 2, pooling);
        for (Eigen::Index c = 0; c < u.size(); ++c) CHECK(u[c] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    }
}

TEST_CASE("gradient check: zero model") {
    const TalModel m = zero_model(small_dims());
    const Matrix x = random_input(8, 6, 1);
    const ModelOutput out = forward(m, x);
    const MiningResult mining = fixed_mining(out, 1);
    for (VideoPooling pooling : {VideoPooling::Actionness, VideoPooling::PerClass}) {
        TalModel z = m;
        z.hyper.pooling = pooling;
        CHECK(gradient_check(z, x, 1, mining, 1e-6, 0.0) < 1e-4);
        // All embeddings are zero, so the contrastive term has no direction to normalize.
        CHECK_THROWS_AS(gradient_check(z, x, 1, mining, 1e-6, 1.0), ValidationError);
    }
}

TEST_CASE("gradient check: seeded random models, both poolings") {
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
        for (VideoPooling pooling : {VideoPooling::Actionness, VideoPooling::PerClass}) {
            ModelHyper h;
            h.pooling = pooling;
            TalModel m = init_model(small_dims(), seed, h);
            // A positive embedding bias keeps every mean embedding away from zero norm.
            m.params.embed_b.array() += 0.5;
            const Matrix x = random_input(8, 6, seed + 50);
            const MiningResult mining = fixed_mining(forward(m, x), seed);
            const double err = gradient_check(m, x, static_cast<int>(seed % 3), mining, 1e-6, 1.0);
            CAPTURE(seed);
            CHECK(err < 1e-4);
        }
    }
}

TEST_CASE("gradient check rejects bad step sizes") {
    const TalModel m = init_model(small_dims(), 0);
    const Matrix x = random_input(8, 6, 0);
    const MiningResult mining = fixed_mining(forward(m, x), 0);
    CHECK_THROWS_AS(gradient_check(m, x, 0, mining, 0.0, 1.0), ValidationError);
    CHECK_THROWS_AS(gradient_check(m, x, 0, mining, 1e-2, 1.0), ValidationError);
}

TEST_CASE("train step is deterministic and lambda zero reduces to the action loss") {
    const TalModel base = init_model(small_dims(), 4);
    std::vector<TrainingSample> batch;
    for (int i = 0; i < 3; ++i) batch.push_back({resample_to_length(random_input(10, 6, 20 + i), 10), i % 3, i});

    TalModel a = base, b = base;
    Rng ra(9), rb(9);
    const StepLosses la = train_step(a, batch, MiningConfig{}, ra);
    const StepLosses lb = train_step(b, batch, MiningConfig{}, rb);
    CHECK(la.loss_total == lb.loss_total);
    CHECK(checkpoint_bytes(a) == checkpoint_bytes(b));
    CHECK(checkpoint_bytes(a) != checkpoint_bytes(base));
    CHECK(la.loss_total == doctest::Approx(la.loss_a + la.loss_s).epsilon(1e-12));

    TalModel c = base;
    Rng rc(9);
    MiningConfig no_contrast;
    no_contrast.lambda = 0.0;
    const StepLosses lc = train_step(c, batch, no_contrast, rc);
    CHECK(lc.loss_total == lc.loss_a);
    CHECK(lc.loss_s == 0.0);
    CHECK_THROWS_AS(train_step(c, std::vector<TrainingSample>{}, no_contrast, rc), ValidationError);
}

TEST_CASE("repeated steps on one segment reduce the action loss") {
    for (VideoPooling pooling : {VideoPooling::Actionness, VideoPooling::PerClass}) {
        ModelHyper h;
        h.pooling = pooling;
        h.learning_rate = 1e-3;
        TalModel m = init_model(small_dims(), 11, h);
        const std::vector<TrainingSample> batch{{resample_to_length(random_input(10, 6, 3), 10), 2, 0}};
        Rng rng(1);
        double first = 0.0, last = 0.0;
        for (int step = 0; step < 200; ++step) {
            const StepLosses l = train_step(m, batch, MiningConfig{}, rng);
            if (step == 0) first = l.loss_a;
            last = l.loss_a;
        }
        CHECK(last < first);
    }
}

TEST_CASE("non-finite loss aborts the step with a diagnostic") {
    TalModel m = init_model(small_dims(), 2);
    // An infinite logit turns the softmax into NaN.
    m.params.conv2_b[0] = std::numeric_limits<double>::infinity();
    const std::vector<TrainingSample> batch{{resample_to_length(random_input(6, 6, 2), 6), 1, 42}};
    Rng rng(0);
    try {
        train_step(m, batch, MiningConfig{}, rng);
        FAIL("expected a numeric error");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("segment 42") != std::string::npos);
    }
}

TEST_CASE("first Adam step moves each parameter by the learning rate against its gradient sign") {
    TalModel m = zero_model(small_dims());
    m.hyper.learning_rate = 0.01;
    TalParameters g = TalParameters::zeros(m.dims);
    g.embed_w(0, 0) = 3.0;
    g.conv2_b[1] = -0.5;
    adam_update(m, g);
    CHECK(m.params.embed_w(0, 0) == doctest::Approx(-0.01).epsilon(1e-6));
    CHECK(m.params.conv2_b[1] == doctest::Approx(0.01).epsilon(1e-6));
    CHECK(m.params.embed_w(1, 1) == 0.0);
    CHECK(m.adam.step == 1);
}

TEST_CASE("checkpoints round trip byte-exactly and reject corruption") {
    TalModel m = init_model(small_dims(), 3);
    m.hyper.pooling = VideoPooling::Actionness;
    std::vector<TrainingSample> batch{{resample_to_length(random_input(8, 6, 1), 8), 0, 0}};
    Rng rng(0);
    train_step(m, batch, MiningConfig{}, rng);
    const std::string bytes = checkpoint_bytes(m);
    const TalModel back = model_from_checkpoint_bytes(bytes);
    CHECK(checkpoint_bytes(back) == bytes);
    CHECK(back.hyper.pooling == VideoPooling::Actionness);
    CHECK(back.adam.step == 1);
    CHECK(bytes.substr(0, 4) == "TALM");

    CHECK_THROWS_AS(model_from_checkpoint_bytes(bytes.substr(0, bytes.size() - 3)), IoError);
    std::string bad = bytes;
    bad[1] = 'x';
    CHECK_THROWS_AS(model_from_checkpoint_bytes(bad), FormatError);
}

TEST_CASE("pooling names parse") {
    CHECK(parse_pooling("actionness") == VideoPooling::Actionness);
    CHECK(parse_pooling("per_class") == VideoPooling::PerClass);
    CHECK(to_string(VideoPooling::PerClass) == "per_class");
    CHECK_THROWS_AS(parse_pooling("max"), ConfigError);
}
