#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "doctest.h"
#include "lreg/network.hpp"
#include "lreg/numerics.hpp"
#include "lreg/rng.hpp"

using namespace lreg;

namespace {

Batch make_batch(Rng& rng, std::size_t n, std::size_t d, std::size_t K) {
    Batch b;
    b.X = Matrix(n, d);
    for (double& v : b.X.data) v = rng.normal();
    b.y.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        b.y[i] = static_cast<int>(rng.uniform_int(K));
    b.domain.assign(n, 0);
    b.known_mask.assign(n, 1);
    return b;
}

}  // namespace

TEST_CASE("mlp_init determinism, shapes, and bound") {
    const MlpSpec spec = make_mlp_spec({2, 3, 1}, Head::LinearRegressor);
    const MlpModel a = mlp_init(spec, 5);
    const MlpModel b = mlp_init(spec, 5);
    REQUIRE(a.W.size() == 2);
    CHECK(a.W[0].rows == 3);
    CHECK(a.W[0].cols == 2);
    CHECK(a.W[1].rows == 1);
    CHECK(a.W[1].cols == 3);
    CHECK(a.W[0].data == b.W[0].data);
    CHECK(a.b[1] == b.b[1]);
    for (std::size_t l = 0; l < a.W.size(); ++l) {
        const double fan_in = static_cast<double>(a.W[l].cols);
        const double fan_out = static_cast<double>(a.W[l].rows);
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        for (double w : a.W[l].data) CHECK(std::abs(w) <= limit);
    }
}

TEST_CASE("forward hand cases") {
    MlpSpec spec = make_mlp_spec({2, 3, 2}, Head::SoftmaxClassifier);
    MlpModel zero = mlp_init(spec, 0);
    for (Matrix& W : zero.W)
        for (double& v : W.data) v = 0.0;
    Matrix X = Matrix::of({{0.3, -0.8}});
    const ForwardPass fz = forward(zero, X);
    for (double v : fz.logits.data) CHECK(v == 0.0);

    MlpModel neg = mlp_init(spec, 1);
    for (double& v : neg.W[0].data) v = -1.0;
    for (double& b : neg.b[0]) b = -1.0;
    Matrix Xpos = Matrix::of({{1.0, 1.0}});
    const ForwardPass fr = forward(neg, Xpos);
    for (double v : fr.acts[1].data) CHECK(v == 0.0);  // ReLU clamps the layer
}

TEST_CASE("forward matches a naive layer-by-layer re-evaluation") {
    Rng rng(7);
    const MlpSpec spec = make_mlp_spec({3, 4, 2}, Head::SoftmaxClassifier);
    const MlpModel m = mlp_init(spec, 7);
    Matrix X(5, 3);
    for (double& v : X.data) v = rng.normal();
    const ForwardPass f = forward(m, X);

    Matrix cur = X;
    for (std::size_t l = 0; l < m.W.size(); ++l) {
        Matrix nxt(cur.rows, m.W[l].rows);
        for (std::size_t r = 0; r < cur.rows; ++r)
            for (std::size_t o = 0; o < m.W[l].rows; ++o) {
                double s = m.b[l][o];
                for (std::size_t i = 0; i < cur.cols; ++i) s += m.W[l](o, i) * cur(r, i);
                if (spec.activations[l] == Activation::Relu && s < 0.0) s = 0.0;
                nxt(r, o) = s;
            }
        cur = nxt;
    }
    for (std::size_t i = 0; i < cur.data.size(); ++i)
        CHECK(f.logits.data[i] == doctest::Approx(cur.data[i]).epsilon(1e-12));
    const Matrix P = row_softmax(cur);
    for (std::size_t i = 0; i < P.data.size(); ++i)
        CHECK(f.probs.data[i] == doctest::Approx(P.data[i]).epsilon(1e-12));
}

TEST_CASE("loss_ce and loss_mse anchors") {
    Matrix sat = Matrix::of({{60.0, 0.0}, {0.0, 60.0}});
    CHECK(loss_ce(sat, {0, 1}).value == doctest::Approx(0.0).epsilon(1e-12));

    Matrix uni(3, 4);
    CHECK(loss_ce(uni, {0, 2, 3}).value == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    // unlabeled rows are skipped; all-unlabeled gives zero loss and gradient
    const LossWithGrad none = loss_ce(uni, {-1, -1, -1});
    CHECK(none.value == 0.0);
    for (double v : none.grad.data) CHECK(v == 0.0);

    Rng rng(11);
    Matrix pred(6, 2), target(6, 2);
    for (double& v : pred.data) v = rng.normal();
    CHECK(loss_mse(pred, pred).value == 0.0);
    for (double& v : target.data) v = rng.normal();
    double direct = 0.0;
    for (std::size_t r = 0; r < 6; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < 2; ++c) {
            const double dlt = pred(r, c) - target(r, c);
            s += dlt * dlt;
        }
        direct += s;
    }
    direct /= 6.0;
    CHECK(loss_mse(pred, target).value == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("loss gradients match finite differences") {
    Rng rng(13);
    Matrix logits(5, 3);
    for (double& v : logits.data) v = rng.normal();
    const std::vector<int> y{0, 2, -1, 1, 2};
    const LossWithGrad ce = loss_ce(logits, y);
    auto fce = [&](const std::vector<double>& flat) {
        return loss_ce(Matrix(5, 3, flat), y).value;
    };
    CHECK(rel_err(ce.grad.data, finite_diff_grad(fce, logits.data, 1e-5)) < 1e-6);

    Matrix pred(4, 2), target(4, 2);
    for (double& v : pred.data) v = rng.normal();
    for (double& v : target.data) v = rng.normal();
    const LossWithGrad mse = loss_mse(pred, target);
    auto fmse = [&](const std::vector<double>& flat) {
        return loss_mse(Matrix(4, 2, flat), target).value;
    };
    CHECK(rel_err(mse.grad.data, finite_diff_grad(fmse, pred.data, 1e-5)) < 1e-6);
}

TEST_CASE("infomax_loss anchors and gradient") {
    Matrix uni(4, 3);
    for (double& v : uni.data) v = 1.0 / 3.0;
    CHECK(infomax_loss(uni).value == doctest::Approx(0.0).epsilon(1e-12));

    Matrix hot(3, 3);
    for (std::size_t i = 0; i < 3; ++i) hot(i, i) = 1.0;
    CHECK(infomax_loss(hot).value == doctest::Approx(-std::log(3.0)).epsilon(1e-6));

    Rng rng(17);
    Matrix logits(8, 3);
    for (double& v : logits.data) v = rng.normal();
    const Matrix probs = row_softmax(logits);
    const LossWithGrad g = infomax_loss(probs);
    auto f = [&](const std::vector<double>& flat) {
        return infomax_loss(Matrix(8, 3, flat)).value;
    };
    CHECK(rel_err(g.grad.data, finite_diff_grad(f, probs.data, 1e-5)) < 1e-6);
}

TEST_CASE("train_step composition, zero-lr, and determinism") {
    Rng rng(19);
    const MlpSpec spec = make_mlp_spec({3, 4, 2}, Head::SoftmaxClassifier);
    const Batch batch = make_batch(rng, 8, 3, 2);

    TrainConfig clean;
    clean.alpha = 0.0;
    clean.lr = 1e-2;
    clean.steps = 1;
    TrainConfig composed = clean;
    composed.extra_regs = {{RegKind::L1, 0.0}, {RegKind::L2, 0.0}, {RegKind::Ortho, 0.0}};

    MlpModel a = mlp_init(spec, 3), b = mlp_init(spec, 3);
    OptimizerState sa = make_optimizer_state(a), sb = make_optimizer_state(b);
    train_step(a, batch, clean, sa);
    train_step(b, batch, composed, sb);
    for (std::size_t l = 0; l < a.W.size(); ++l) {
        CHECK(a.W[l].data == b.W[l].data);
        CHECK(a.b[l] == b.b[l]);
    }

    TrainConfig frozen = clean;
    frozen.lr = 0.0;
    MlpModel c = mlp_init(spec, 3);
    const MlpModel before = c;
    OptimizerState sc = make_optimizer_state(c);
    train_step(c, batch, frozen, sc);
    for (std::size_t l = 0; l < c.W.size(); ++l) CHECK(c.W[l].data == before.W[l].data);
}

TEST_CASE("composed loss parameter gradient matches finite differences") {
    Rng rng(23);
    const MlpSpec spec = make_mlp_spec({2, 4, 3}, Head::SoftmaxClassifier);
    MlpModel model = mlp_init(spec, 23);
    const Batch batch = make_batch(rng, 6, 2, 3);

    TrainConfig cfg;
    cfg.alpha = 0.05;
    cfg.extra_regs = {{RegKind::L1, 0.01}, {RegKind::L2, 0.02}, {RegKind::Ortho, 0.03}};

    const auto [metrics, grads] = backward_all(model, batch, cfg);
    std::vector<double> analytic;
    for (std::size_t l = 0; l < grads.dW.size(); ++l) {
        analytic.insert(analytic.end(), grads.dW[l].data.begin(), grads.dW[l].data.end());
        analytic.insert(analytic.end(), grads.db[l].begin(), grads.db[l].end());
    }
    const std::vector<double> flat = flatten_params(model);
    auto f = [&](const std::vector<double>& x) {
        MlpModel m = model;
        unflatten_params(m, x);
        return loss_all(m, batch, cfg).l_all;
    };
    CHECK(rel_err(analytic, finite_diff_grad(f, flat, 1e-5)) < 1e-5);
    CHECK(metrics.l_all ==
          doctest::Approx(metrics.l_main + cfg.alpha * metrics.l_lreg + metrics.l_extra)
              .epsilon(1e-12));
}

TEST_CASE("regression head with deep-feature pairing also passes the gradient check") {
    Rng rng(29);
    const MlpSpec spec = make_mlp_spec({2, 4, 3, 1}, Head::LinearRegressor);
    MlpModel model = mlp_init(spec, 29);
    Batch batch;
    batch.X = Matrix(6, 2);
    for (double& v : batch.X.data) v = rng.normal();
    batch.y.assign(6, -1);
    batch.domain.assign(6, 0);
    batch.known_mask.assign(6, 1);
    batch.target = Matrix(6, 1);
    for (double& v : batch.target.data) v = rng.normal();

    TrainConfig cfg;
    cfg.main_loss = MainLoss::MSE;
    cfg.alpha = 0.1;
    cfg.lreg_pairing = LRegPair::DeepFeatures;

    const auto [metrics, grads] = backward_all(model, batch, cfg);
    std::vector<double> analytic;
    for (std::size_t l = 0; l < grads.dW.size(); ++l) {
        analytic.insert(analytic.end(), grads.dW[l].data.begin(), grads.dW[l].data.end());
        analytic.insert(analytic.end(), grads.db[l].begin(), grads.db[l].end());
    }
    auto f = [&](const std::vector<double>& x) {
        MlpModel m = model;
        unflatten_params(m, x);
        return loss_all(m, batch, cfg).l_all;
    };
    CHECK(rel_err(analytic, finite_diff_grad(f, flatten_params(model), 1e-5)) < 1e-5);
    CHECK(metrics.l_lreg != 0.0);  // the pairing is non-degenerate for 1-D outputs
}

TEST_CASE("sgd_update and adam_update hand dynamics") {
    // smallest legal model: two 1x1 affine layers; the hand dynamics below
    // only touch W[0], the second layer just satisfies the depth invariant
    MlpSpec spec;
    spec.layer_widths = {1, 1, 1};
    spec.activations = {Activation::Identity, Activation::Identity};
    spec.tap_layer = 1;
    spec.head = Head::LinearRegressor;
    MlpModel m = mlp_init(spec, 0);
    m.W[0](0, 0) = 1.0;
    m.b[0][0] = 0.0;

    auto zero_grads = [&](double g00) {
        ParamGrads g;
        g.dW = {Matrix(1, 1), Matrix(1, 1)};
        g.db = {{0.0}, {0.0}};
        g.dW[0](0, 0) = g00;
        return g;
    };
    const ParamGrads g = zero_grads(0.5);
    sgd_update(m, g, 1.0, 0.0);
    CHECK(m.W[0](0, 0) == 0.5);

    // weight decay folds in as w <- w - lr*(g + wd*w)
    m.W[0](0, 0) = 2.0;
    sgd_update(m, g, 0.1, 0.5);
    CHECK(m.W[0](0, 0) == doctest::Approx(2.0 - 0.1 * (0.5 + 0.5 * 2.0)).epsilon(1e-12));

    // Adam's bias-corrected first step is -lr * g/(|g| + eps), so almost -lr
    MlpModel am = mlp_init(spec, 0);
    am.W[0](0, 0) = 1.0;
    OptimizerState st = make_optimizer_state(am);
    adam_update(am, g, st.adam, 0.01, 0.9, 0.999, 1e-8);
    CHECK(am.W[0](0, 0) == doctest::Approx(1.0 - 0.01).epsilon(1e-6));

    // 100 Adam steps on f(w) = w^2 from w = 5 converge near 0
    MlpModel qm = mlp_init(spec, 0);
    qm.W[0](0, 0) = 5.0;
    OptimizerState qs = make_optimizer_state(qm);
    for (int t = 0; t < 100; ++t) {
        adam_update(qm, zero_grads(2.0 * qm.W[0](0, 0)), qs.adam, 0.2, 0.9, 0.999, 1e-8);
    }
    CHECK(std::abs(qm.W[0](0, 0)) < 0.1);
}

TEST_CASE("checkpoint round trip") {
    const MlpSpec spec = make_mlp_spec({3, 4, 2}, Head::SoftmaxClassifier);
    const MlpModel m = mlp_init(spec, 99);
    const std::string path =
        (std::filesystem::temp_directory_path() / "lreg_test_ckpt.json").string();
    save_checkpoint(m, 99, 1234, path);
    const Checkpoint ck = load_checkpoint(path);
    CHECK(ck.seed == 99);
    CHECK(ck.step == 1234);
    REQUIRE(ck.model.W.size() == m.W.size());
    for (std::size_t l = 0; l < m.W.size(); ++l) {
        CHECK(ck.model.W[l].data == m.W[l].data);
        CHECK(ck.model.b[l] == m.b[l]);
    }
    CHECK(ck.model.spec.layer_widths == m.spec.layer_widths);
    CHECK(ck.model.spec.tap_layer == m.spec.tap_layer);
    std::remove(path.c_str());
}
