#include "lreg/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include "json.hpp"

namespace lreg {

void MlpSpec::validate() const {
    if (layer_widths.size() < 3)
        throw std::invalid_argument("MlpSpec: needs at least 2 affine layers");
    for (std::size_t w : layer_widths)
        if (w < 1) throw std::invalid_argument("MlpSpec: widths must be >= 1");
    if (activations.size() != n_layers())
        throw std::invalid_argument("MlpSpec: one activation per affine layer required");
    if (tap_layer < 1 || tap_layer >= n_layers())
        throw std::invalid_argument("MlpSpec: tap_layer must lie strictly inside the network");
}

MlpSpec make_mlp_spec(std::vector<std::size_t> widths, Head head) {
    MlpSpec spec;
    spec.layer_widths = std::move(widths);
    const std::size_t L = spec.layer_widths.size() - 1;
    spec.activations.assign(L, Activation::Relu);
    spec.activations[L - 1] = Activation::Identity;
    spec.tap_layer = L - 1;
    spec.head = head;
    spec.validate();
    return spec;
}

void TrainConfig::validate() const {
    if (alpha < 0.0) throw std::invalid_argument("TrainConfig: alpha must be >= 0");
    if (lr < 0.0) throw std::invalid_argument("TrainConfig: lr must be >= 0");
    if (infomax_weight < 0.0) throw std::invalid_argument("TrainConfig: infomax_weight >= 0");
    for (const auto& [kind, w] : extra_regs) {
        (void)kind;
        if (w < 0.0) throw std::invalid_argument("TrainConfig: regularizer weights must be >= 0");
    }
}

void Batch::validate(std::size_t d_in, MainLoss loss) const {
    if (X.rows == 0) throw std::invalid_argument("Batch: empty");
    if (X.cols != d_in) throw std::invalid_argument("Batch: feature width mismatch");
    if (loss == MainLoss::CE) {
        if (y.size() != X.rows) throw std::invalid_argument("Batch: label count mismatch");
    } else {
        if (target.rows != X.rows) throw std::invalid_argument("Batch: target row mismatch");
    }
}

MlpModel mlp_init(const MlpSpec& spec, std::uint64_t seed) {
    spec.validate();
    MlpModel model;
    model.spec = spec;
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < spec.layer_widths.size(); ++l) {
        const std::size_t fan_in = spec.layer_widths[l];
        const std::size_t fan_out = spec.layer_widths[l + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        Matrix W(fan_out, fan_in);
        for (double& w : W.data) w = rng.uniform(-limit, limit);
        model.W.push_back(std::move(W));
        model.b.emplace_back(fan_out, 0.0);
    }
    return model;
}

ForwardPass forward(const MlpModel& model, const Matrix& X) {
    const MlpSpec& spec = model.spec;
    if (X.cols != spec.layer_widths.front())
        throw std::invalid_argument("forward: input width mismatch");
    ForwardPass fw;
    fw.acts.reserve(spec.n_layers() + 1);
    fw.acts.push_back(X);
    for (std::size_t l = 0; l < spec.n_layers(); ++l) {
        Matrix S = matmul_nt(fw.acts.back(), model.W[l]);
        const std::vector<double>& bias = model.b[l];
        for (std::size_t r = 0; r < S.rows; ++r) {
            double* row = S.row_ptr(r);
            for (std::size_t c = 0; c < S.cols; ++c) row[c] += bias[c];
        }
        if (spec.activations[l] == Activation::Relu)
            for (double& v : S.data) v = v > 0.0 ? v : 0.0;
        fw.acts.push_back(std::move(S));
    }
    fw.Z = fw.acts[spec.tap_layer];
    fw.logits = fw.acts.back();
    if (spec.head == Head::SoftmaxClassifier) fw.probs = row_softmax(fw.logits);
    return fw;
}

LossWithGrad loss_ce(const Matrix& logits, const std::vector<int>& labels) {
    if (labels.size() != logits.rows) throw std::invalid_argument("loss_ce: label count mismatch");
    LossWithGrad out;
    out.grad = Matrix(logits.rows, logits.cols);
    std::size_t n = 0;
    for (int yb : labels)
        if (yb >= 0) ++n;
    if (n == 0) return out;
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t b = 0; b < logits.rows; ++b) {
        const int yb = labels[b];
        if (yb < 0) continue;
        if (static_cast<std::size_t>(yb) >= logits.cols)
            throw std::invalid_argument("loss_ce: label out of range");
        const double* row = logits.row_ptr(b);
        double mx = row[0];
        for (std::size_t k = 1; k < logits.cols; ++k) mx = std::max(mx, row[k]);
        double z = 0.0;
        for (std::size_t k = 0; k < logits.cols; ++k) z += std::exp(row[k] - mx);
        out.value += (std::log(z) + mx - row[yb]) * inv;
        double* grow = out.grad.row_ptr(b);
        for (std::size_t k = 0; k < logits.cols; ++k) grow[k] = std::exp(row[k] - mx) / z * inv;
        grow[yb] -= inv;
    }
    return out;
}

LossWithGrad loss_mse(const Matrix& pred, const Matrix& target) {
    if (pred.rows != target.rows || pred.cols != target.cols)
        throw std::invalid_argument("loss_mse: shape mismatch");
    LossWithGrad out;
    out.grad = Matrix(pred.rows, pred.cols);
    const double inv = 1.0 / static_cast<double>(pred.rows);
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const double d = pred.data[i] - target.data[i];
        out.value += d * d * inv;
        out.grad.data[i] = 2.0 * d * inv;
    }
    return out;
}

LossWithGrad infomax_loss(const Matrix& probs) {
    LossWithGrad out;
    out.grad = Matrix(probs.rows, probs.cols);
    if (probs.rows == 0) return out;
    const std::size_t n = probs.rows, K = probs.cols;
    const double inv = 1.0 / static_cast<double>(n);
    std::vector<double> pbar(K, 0.0);
    double cond = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
        const double* row = probs.row_ptr(b);
        for (std::size_t k = 0; k < K; ++k) {
            cond -= row[k] * std::log(row[k] + kLogEps);
            pbar[k] += row[k] * inv;
        }
    }
    double marg = 0.0;
    std::vector<double> dmarg(K);
    for (std::size_t k = 0; k < K; ++k) {
        marg -= pbar[k] * std::log(pbar[k] + kLogEps);
        dmarg[k] = std::log(pbar[k] + kLogEps) + pbar[k] / (pbar[k] + kLogEps);
    }
    out.value = cond * inv - marg;
    for (std::size_t b = 0; b < n; ++b) {
        const double* row = probs.row_ptr(b);
        double* grow = out.grad.row_ptr(b);
        for (std::size_t k = 0; k < K; ++k)
            grow[k] = inv * (-(std::log(row[k] + kLogEps) + row[k] / (row[k] + kLogEps)) + dmarg[k]);
    }
    return out;
}

namespace {

struct ComposedLoss {
    StepMetrics metrics;
    Matrix dLogits;  // gradient w.r.t. final-layer output
    Matrix dZ;       // gradient w.r.t. tap activations
    Matrix dDeep;    // gradient w.r.t. deepest hidden activations (DeepFeatures pairing)
};

Matrix gather_rows(const Matrix& A, const std::vector<std::size_t>& idx) {
    Matrix out(idx.size(), A.cols);
    for (std::size_t r = 0; r < idx.size(); ++r)
        std::copy(A.row_ptr(idx[r]), A.row_ptr(idx[r]) + A.cols, out.row_ptr(r));
    return out;
}

// Composed loss value and its gradients w.r.t. logits and Z (parameter chain
// is applied by the caller). want_grad=false skips gradient work for loss_all.
ComposedLoss composed_loss(const MlpModel& model, const ForwardPass& fw, const Batch& batch,
                           const TrainConfig& cfg, bool want_grad) {
    ComposedLoss out;
    out.dLogits = Matrix(fw.logits.rows, fw.logits.cols);
    out.dZ = Matrix(fw.Z.rows, fw.Z.cols);
    const Matrix& deep_acts = fw.acts[fw.acts.size() - 2];
    out.dDeep = Matrix(deep_acts.rows, deep_acts.cols);
    Matrix dProbs(fw.probs.rows, fw.probs.cols);
    const bool classifier = model.spec.head == Head::SoftmaxClassifier;

    if (cfg.main_loss == MainLoss::CE) {
        if (!classifier) throw std::invalid_argument("train: CE requires a classifier head");
        LossWithGrad ce = loss_ce(fw.logits, batch.y);
        out.metrics.l_main = ce.value;
        if (want_grad) out.dLogits = std::move(ce.grad);
        if (cfg.infomax_weight > 0.0) {
            std::vector<std::size_t> unl;
            for (std::size_t b = 0; b < batch.y.size(); ++b)
                if (batch.y[b] < 0) unl.push_back(b);
            if (!unl.empty()) {
                const Matrix Pu = gather_rows(fw.probs, unl);
                LossWithGrad im = infomax_loss(Pu);
                out.metrics.l_main += cfg.infomax_weight * im.value;
                if (want_grad)
                    for (std::size_t r = 0; r < unl.size(); ++r) {
                        double* dst = dProbs.row_ptr(unl[r]);
                        const double* src = im.grad.row_ptr(r);
                        for (std::size_t k = 0; k < dProbs.cols; ++k)
                            dst[k] += cfg.infomax_weight * src[k];
                    }
            }
        }
    } else {
        LossWithGrad mse = loss_mse(fw.logits, batch.target);
        out.metrics.l_main = mse.value;
        if (want_grad) out.dLogits = std::move(mse.grad);
    }

    if (cfg.alpha > 0.0) {
        const bool deep_pair = cfg.lreg_pairing == LRegPair::DeepFeatures;
        const bool on_probs = !deep_pair && cfg.lreg_on_probs && classifier;
        const std::size_t deep_idx = fw.acts.size() - 2;  // deepest hidden layer
        // DeepFeatures pairs Z with the row-softmax of the deepest hidden
        // activations (a soft dimension assignment per sample). The bounded
        // rows keep the affinity's column softmax out of saturation, where the
        // regularizer's gradient dies; raw activation products grow with batch
        // size and freeze it.
        Matrix deep_soft;
        Matrix dDeepSoft;
        if (deep_pair) {
            deep_soft = row_softmax(fw.acts[deep_idx]);
            dDeepSoft = Matrix(deep_soft.rows, deep_soft.cols);
        }
        const Matrix& Yhat = deep_pair ? deep_soft : (on_probs ? fw.probs : fw.logits);
        auto add_group = [&](const std::vector<std::size_t>& idx, double scale) {
            const Matrix Zg = idx.empty() ? fw.Z : gather_rows(fw.Z, idx);
            const Matrix Yg = idx.empty() ? Yhat : gather_rows(Yhat, idx);
            if (want_grad) {
                LRegBatchGrad lg = lreg_on_batch(Zg, Yg);
                out.metrics.l_lreg += scale * lg.value;
                Matrix& dY = deep_pair ? dDeepSoft : (on_probs ? dProbs : out.dLogits);
                if (idx.empty()) {
                    for (std::size_t i = 0; i < lg.dZ.data.size(); ++i)
                        out.dZ.data[i] += cfg.alpha * scale * lg.dZ.data[i];
                    for (std::size_t i = 0; i < lg.dYhat.data.size(); ++i)
                        dY.data[i] += cfg.alpha * scale * lg.dYhat.data[i];
                } else {
                    for (std::size_t r = 0; r < idx.size(); ++r) {
                        for (std::size_t c = 0; c < out.dZ.cols; ++c)
                            out.dZ(idx[r], c) += cfg.alpha * scale * lg.dZ(r, c);
                        for (std::size_t c = 0; c < dY.cols; ++c)
                            dY(idx[r], c) += cfg.alpha * scale * lg.dYhat(r, c);
                    }
                }
            } else {
                out.metrics.l_lreg += scale * lreg_value(affinity(Zg, Yg));
            }
        };
        if (cfg.lreg_domain_mode == LRegDomainMode::Pooled) {
            add_group({}, 1.0);
        } else {
            if (batch.domain.size() != batch.size())
                throw std::invalid_argument("train: per-domain mode needs domain ids");
            std::map<int, std::vector<std::size_t>> groups;
            for (std::size_t b = 0; b < batch.size(); ++b) groups[batch.domain[b]].push_back(b);
            const double scale = 1.0 / static_cast<double>(groups.size());
            for (const auto& [dom, idx] : groups) {
                (void)dom;
                add_group(idx, scale);
            }
        }
        // fold the soft-assignment gradient through its row softmax
        if (want_grad && deep_pair) {
            for (std::size_t b = 0; b < dDeepSoft.rows; ++b) {
                const double* p = deep_soft.row_ptr(b);
                const double* dp = dDeepSoft.row_ptr(b);
                double dot = 0.0;
                for (std::size_t k = 0; k < dDeepSoft.cols; ++k) dot += p[k] * dp[k];
                double* dd = out.dDeep.row_ptr(b);
                for (std::size_t k = 0; k < dDeepSoft.cols; ++k) dd[k] += p[k] * (dp[k] - dot);
            }
        }
    }

    // fold dProbs through the row-softmax Jacobian into dLogits
    if (want_grad && classifier) {
        for (std::size_t b = 0; b < dProbs.rows; ++b) {
            const double* p = fw.probs.row_ptr(b);
            const double* dp = dProbs.row_ptr(b);
            double dot = 0.0;
            for (std::size_t k = 0; k < dProbs.cols; ++k) dot += p[k] * dp[k];
            double* dl = out.dLogits.row_ptr(b);
            for (std::size_t k = 0; k < dProbs.cols; ++k) dl[k] += p[k] * (dp[k] - dot);
        }
    }

    out.metrics.l_all = out.metrics.l_main + cfg.alpha * out.metrics.l_lreg;
    return out;
}

}  // namespace

StepMetrics loss_all(const MlpModel& model, const Batch& batch, const TrainConfig& cfg) {
    cfg.validate();
    batch.validate(model.spec.layer_widths.front(), cfg.main_loss);
    const ForwardPass fw = forward(model, batch.X);
    ComposedLoss cl = composed_loss(model, fw, batch, cfg, false);
    StepMetrics m = cl.metrics;
    for (const auto& [kind, w] : cfg.extra_regs) {
        if (w == 0.0) continue;
        if (kind == RegKind::Ortho) {
            m.l_extra += w * ortho_reg(fw.Z).value;
        } else {
            double v = 0.0;
            for (const Matrix& W : model.W)
                v += weight_penalty(W.data, kind == RegKind::L1 ? PenaltyKind::L1 : PenaltyKind::L2)
                         .value;
            m.l_extra += w * v;
        }
    }
    m.l_all += m.l_extra;
    return m;
}

std::pair<StepMetrics, ParamGrads> backward_all(const MlpModel& model, const Batch& batch,
                                                const TrainConfig& cfg) {
    cfg.validate();
    batch.validate(model.spec.layer_widths.front(), cfg.main_loss);
    const MlpSpec& spec = model.spec;
    const ForwardPass fw = forward(model, batch.X);
    ComposedLoss cl = composed_loss(model, fw, batch, cfg, true);

    ParamGrads grads;
    grads.dW.resize(spec.n_layers());
    grads.db.resize(spec.n_layers());

    for (const auto& [kind, w] : cfg.extra_regs) {
        if (w == 0.0 || kind != RegKind::Ortho) continue;
        LossWithGrad og = ortho_reg(fw.Z);
        cl.metrics.l_extra += w * og.value;
        for (std::size_t i = 0; i < cl.dZ.data.size(); ++i) cl.dZ.data[i] += w * og.grad.data[i];
    }

    Matrix dA = std::move(cl.dLogits);
    for (std::size_t l = spec.n_layers(); l-- > 0;) {
        // dS: activation backward; ReLU mask from the post-activation sign
        if (spec.activations[l] == Activation::Relu) {
            const Matrix& A = fw.acts[l + 1];
            for (std::size_t i = 0; i < dA.data.size(); ++i)
                if (A.data[i] <= 0.0) dA.data[i] = 0.0;
        }
        grads.dW[l] = matmul_tn(dA, fw.acts[l]);
        grads.db[l].assign(spec.layer_widths[l + 1], 0.0);
        for (std::size_t r = 0; r < dA.rows; ++r) {
            const double* row = dA.row_ptr(r);
            for (std::size_t c = 0; c < dA.cols; ++c) grads.db[l][c] += row[c];
        }
        if (l == 0) break;
        dA = matmul(dA, model.W[l]);
        if (l == spec.tap_layer)
            for (std::size_t i = 0; i < dA.data.size(); ++i) dA.data[i] += cl.dZ.data[i];
        if (l == spec.n_layers() - 1)
            for (std::size_t i = 0; i < dA.data.size(); ++i) dA.data[i] += cl.dDeep.data[i];
    }

    for (const auto& [kind, w] : cfg.extra_regs) {
        if (w == 0.0 || kind == RegKind::Ortho) continue;
        const PenaltyKind pk = kind == RegKind::L1 ? PenaltyKind::L1 : PenaltyKind::L2;
        for (std::size_t l = 0; l < model.W.size(); ++l) {
            VecLossWithGrad p = weight_penalty(model.W[l].data, pk);
            cl.metrics.l_extra += w * p.value;
            for (std::size_t i = 0; i < p.grad.size(); ++i)
                grads.dW[l].data[i] += w * p.grad[i];
        }
    }

    cl.metrics.l_all += cl.metrics.l_extra;
    return {cl.metrics, std::move(grads)};
}

OptimizerState make_optimizer_state(const MlpModel& model) {
    OptimizerState st;
    for (std::size_t l = 0; l < model.W.size(); ++l) {
        st.adam.mW.emplace_back(model.W[l].rows, model.W[l].cols);
        st.adam.vW.emplace_back(model.W[l].rows, model.W[l].cols);
        st.adam.mb.emplace_back(model.b[l].size(), 0.0);
        st.adam.vb.emplace_back(model.b[l].size(), 0.0);
    }
    return st;
}

void sgd_update(MlpModel& model, const ParamGrads& grads, double lr, double weight_decay) {
    for (std::size_t l = 0; l < model.W.size(); ++l) {
        for (std::size_t i = 0; i < model.W[l].data.size(); ++i)
            model.W[l].data[i] -=
                lr * (grads.dW[l].data[i] + weight_decay * model.W[l].data[i]);
        for (std::size_t i = 0; i < model.b[l].size(); ++i)
            model.b[l][i] -= lr * grads.db[l][i];
    }
}

void adam_update(MlpModel& model, const ParamGrads& grads, AdamState& state, double lr,
                 double beta1, double beta2, double eps) {
    state.t += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    auto step = [&](double& w, double g, double& m, double& v) {
        m = beta1 * m + (1.0 - beta1) * g;
        v = beta2 * v + (1.0 - beta2) * g * g;
        w -= lr * (m / bc1) / (std::sqrt(v / bc2) + eps);
    };
    for (std::size_t l = 0; l < model.W.size(); ++l) {
        for (std::size_t i = 0; i < model.W[l].data.size(); ++i)
            step(model.W[l].data[i], grads.dW[l].data[i], state.mW[l].data[i],
                 state.vW[l].data[i]);
        for (std::size_t i = 0; i < model.b[l].size(); ++i)
            step(model.b[l][i], grads.db[l][i], state.mb[l][i], state.vb[l][i]);
    }
}

StepMetrics train_step(MlpModel& model, const Batch& batch, const TrainConfig& cfg,
                       OptimizerState& state) {
    auto [metrics, grads] = backward_all(model, batch, cfg);
    if (cfg.optimizer == Optimizer::SGD)
        sgd_update(model, grads, cfg.lr, cfg.sgd_weight_decay);
    else
        adam_update(model, grads, state.adam, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
    return metrics;
}

std::vector<double> flatten_params(const MlpModel& model) {
    std::vector<double> flat;
    for (std::size_t l = 0; l < model.W.size(); ++l) {
        flat.insert(flat.end(), model.W[l].data.begin(), model.W[l].data.end());
        flat.insert(flat.end(), model.b[l].begin(), model.b[l].end());
    }
    return flat;
}

void unflatten_params(MlpModel& model, const std::vector<double>& flat) {
    std::size_t pos = 0;
    for (std::size_t l = 0; l < model.W.size(); ++l) {
        for (double& w : model.W[l].data) w = flat.at(pos++);
        for (double& b : model.b[l]) b = flat.at(pos++);
    }
    if (pos != flat.size()) throw std::invalid_argument("unflatten_params: length mismatch");
}

void save_checkpoint(const MlpModel& model, std::uint64_t seed, long step,
                     const std::string& path) {
    nlohmann::json j;
    j["spec"]["layer_widths"] = model.spec.layer_widths;
    std::vector<std::string> acts;
    for (Activation a : model.spec.activations)
        acts.push_back(a == Activation::Relu ? "relu" : "identity");
    j["spec"]["activations"] = acts;
    j["spec"]["tap_layer"] = model.spec.tap_layer;
    j["spec"]["head"] =
        model.spec.head == Head::SoftmaxClassifier ? "classifier" : "regressor";
    j["seed"] = seed;
    j["step"] = step;
    j["params"] = flatten_params(model);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out << j.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    nlohmann::json j;
    in >> j;
    MlpSpec spec;
    spec.layer_widths = j.at("spec").at("layer_widths").get<std::vector<std::size_t>>();
    for (const std::string& s : j.at("spec").at("activations").get<std::vector<std::string>>()) {
        if (s == "relu")
            spec.activations.push_back(Activation::Relu);
        else if (s == "identity")
            spec.activations.push_back(Activation::Identity);
        else
            throw std::runtime_error("load_checkpoint: unknown activation " + s);
    }
    spec.tap_layer = j.at("spec").at("tap_layer").get<std::size_t>();
    const std::string head = j.at("spec").at("head").get<std::string>();
    if (head == "classifier")
        spec.head = Head::SoftmaxClassifier;
    else if (head == "regressor")
        spec.head = Head::LinearRegressor;
    else
        throw std::runtime_error("load_checkpoint: unknown head " + head);
    spec.validate();
    Checkpoint ck;
    ck.model.spec = spec;
    for (std::size_t l = 0; l + 1 < spec.layer_widths.size(); ++l) {
        ck.model.W.emplace_back(spec.layer_widths[l + 1], spec.layer_widths[l]);
        ck.model.b.emplace_back(spec.layer_widths[l + 1], 0.0);
    }
    unflatten_params(ck.model, j.at("params").get<std::vector<double>>());
    ck.seed = j.at("seed").get<std::uint64_t>();
    ck.step = j.at("step").get<long>();
    return ck;
}

}  // namespace lreg
