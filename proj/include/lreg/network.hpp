#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lreg/matrix.hpp"
#include "lreg/regularizers.hpp"
#include "lreg/rng.hpp"

namespace lreg {

enum class Activation { Relu, Identity };
enum class Head { SoftmaxClassifier, LinearRegressor };
enum class MainLoss { CE, MSE };
enum class Optimizer { SGD, Adam };
enum class RegKind { L1, L2, Ortho };
enum class LRegDomainMode { Pooled, PerDomain };
// What the mutual-information regularizer pairs Z with: the model's predictions
// (probs or logits), or a row softmax of the deepest hidden activations (a soft
// per-sample dimension assignment). The latter is the only non-degenerate
// choice for 1-D regression outputs, where Yhat^T Z has a single row; the
// softmax keeps the pairing bounded so the affinity's column softmax stays
// unsaturated and the regularizer keeps a usable gradient.
enum class LRegPair { Predictions, DeepFeatures };

struct MlpSpec {
    std::vector<std::size_t> layer_widths;  // input -> ... -> output
    std::vector<Activation> activations;    // one per affine layer
    std::size_t tap_layer = 1;              // post-activation output of this layer is Z
    Head head = Head::SoftmaxClassifier;

    std::size_t n_layers() const { return layer_widths.empty() ? 0 : layer_widths.size() - 1; }
    void validate() const;
};

// Hidden layers ReLU, output layer identity, tap at the last hidden layer.
MlpSpec make_mlp_spec(std::vector<std::size_t> widths, Head head);

struct MlpModel {
    MlpSpec spec;
    std::vector<Matrix> W;               // W[l] is out x in
    std::vector<std::vector<double>> b;  // b[l] length out
};

struct ParamGrads {
    std::vector<Matrix> dW;
    std::vector<std::vector<double>> db;
};

struct TrainConfig {
    double alpha = 0.0;  // mutual-information regularizer weight
    MainLoss main_loss = MainLoss::CE;
    std::vector<std::pair<RegKind, double>> extra_regs;  // L1/L2 on weights, Ortho on Z
    Optimizer optimizer = Optimizer::Adam;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double sgd_weight_decay = 0.0;
    std::size_t batch_size = 64;
    std::size_t steps = 0;
    std::uint64_t seed = 0;
    double infomax_weight = 0.5;  // unlabeled-row surrogate loss weight under CE
    LRegDomainMode lreg_domain_mode = LRegDomainMode::Pooled;
    LRegPair lreg_pairing = LRegPair::Predictions;
    bool lreg_on_probs = true;  // false: pair Z with raw logits instead
    void validate() const;
};

struct Batch {
    Matrix X;
    std::vector<int> y;  // -1 = unlabeled; ignored under MSE
    std::vector<int> domain;
    std::vector<char> known_mask;
    Matrix target;  // MSE targets, rows match X
    std::size_t size() const { return X.rows; }
    void validate(std::size_t d_in, MainLoss loss) const;
};

struct ForwardPass {
    std::vector<Matrix> acts;  // acts[0] = X, acts[l] = post-activation of layer l
    Matrix Z;                  // acts[tap_layer]
    Matrix logits;             // final layer output (pre-softmax for classifier)
    Matrix probs;              // row-softmax of logits; empty for regressor head
};

MlpModel mlp_init(const MlpSpec& spec, std::uint64_t seed);

ForwardPass forward(const MlpModel& model, const Matrix& X);

// Mean over labeled rows; all rows unlabeled -> zero loss and gradient.
LossWithGrad loss_ce(const Matrix& logits, const std::vector<int>& labels);

// (1/B) sum_b ||pred_b - target_b||^2
LossWithGrad loss_mse(const Matrix& pred, const Matrix& target);

// mean_b H(p_b) - H(mean_b p_b); gradient w.r.t. the prob entries themselves.
LossWithGrad infomax_loss(const Matrix& probs);

struct StepMetrics {
    double l_main = 0.0;
    double l_lreg = 0.0;
    double l_extra = 0.0;
    double l_all = 0.0;
};

// Full composed loss at the current parameters; no update.
StepMetrics loss_all(const MlpModel& model, const Batch& batch, const TrainConfig& cfg);

// Composed loss plus analytic parameter gradients; no update.
std::pair<StepMetrics, ParamGrads> backward_all(const MlpModel& model, const Batch& batch,
                                                const TrainConfig& cfg);

struct AdamState {
    std::vector<Matrix> mW, vW;
    std::vector<std::vector<double>> mb, vb;
    long t = 0;
};

struct OptimizerState {
    AdamState adam;  // used when cfg.optimizer == Adam
};

OptimizerState make_optimizer_state(const MlpModel& model);

void sgd_update(MlpModel& model, const ParamGrads& grads, double lr, double weight_decay);
void adam_update(MlpModel& model, const ParamGrads& grads, AdamState& state, double lr,
                 double beta1, double beta2, double eps);

StepMetrics train_step(MlpModel& model, const Batch& batch, const TrainConfig& cfg,
                       OptimizerState& state);

std::vector<double> flatten_params(const MlpModel& model);
void unflatten_params(MlpModel& model, const std::vector<double>& flat);

void save_checkpoint(const MlpModel& model, std::uint64_t seed, long step,
                     const std::string& path);
struct Checkpoint {
    MlpModel model;
    std::uint64_t seed = 0;
    long step = 0;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace lreg
