#pragma once

#include <cstdint>
#include <vector>

#include "lreg/matrix.hpp"
#include "lreg/regularizers.hpp"

namespace lreg {

struct SupportSet {
    std::vector<std::vector<std::size_t>> dims_per_class;  // sorted dimension ids
    double mean_jaccard = 0.0;  // averaged over class pairs; empty-vs-empty counts 0
    double mean_size = 0.0;
};

struct ComplexityReport {
    double extreme_weight_fraction = 0.0;
    double mean_support_size = 0.0;
    double support_jaccard = 0.0;
    double feature_balance_entropy = 0.0;  // nats
};

// Fraction of entries with |w| > tau * stddev(W); all-equal W gives 0.
double weight_extremity(const Matrix& W, double tau = 2.0);

// Per-class dimension sets where the column-softmax mass meets the threshold.
SupportSet semantic_support(const AffinityMatrix& G, double threshold = 0.5);

// Entropy of the normalized per-dimension |Z| column mass; all-zero Z gives 0.
double feature_balance(const Matrix& Z);

// Mean over rows of the Euclidean norm of (pred_f - pred_fstar).
double generalization_gap(const Matrix& pred_f, const Matrix& pred_fstar);

// Euclidean distance between the mean feature vectors of the two mask groups.
double group_mean_distance(const Matrix& Z, const std::vector<char>& in_group);

// Plain linear softmax classifier trained with mini-batch Adam on CE + L2 and,
// when alpha > 0, the mutual-information regularizer paired as (X_batch,
// probs_batch), with the gradient chained through the row softmax. Mini-batch
// sums keep the affinity's column softmax out of saturation, where the
// regularizer has no gradient; alpha needs to be strong enough (defaults
// calibrated at 0.5) to counter the shortcut preference of the CE + L2 fit,
// without tipping the fit into the degenerate basin where the regularizer
// overrides the labels.
struct LinearFitConfig {
    double alpha = 0.5;
    double l2 = 0.01;
    double lr = 0.01;
    std::size_t steps = 3000;
    std::size_t batch = 64;  // 0 or >= n trains full-batch
    std::uint64_t seed = 0;
};

struct LinearModel {
    Matrix W;  // K x d
    std::vector<double> b;
};

LinearModel fit_linear_softmax(const Matrix& X, const std::vector<int>& y, std::size_t K,
                               const LinearFitConfig& cfg);

Matrix linear_probs(const LinearModel& model, const Matrix& X);

double accuracy(const Matrix& probs, const std::vector<int>& y);

struct Prop1Record {
    double acc_seen_base = 0.0, acc_seen_lreg = 0.0;
    double acc_unseen_base = 0.0, acc_unseen_lreg = 0.0;
    double spur_mass_base = 0.0, spur_mass_lreg = 0.0;  // mean |weight| on spurious dims
    double gap_base = 0.0, gap_lreg = 0.0;  // vs support-only oracle predictions
};

Prop1Record prop1_check(const Matrix& Zs, const std::vector<int>& Ys, const Matrix& Zu,
                        const std::vector<int>& Yu,
                        const std::vector<std::size_t>& support_dims,
                        const std::vector<double>& w_support, const LinearFitConfig& cfg);

}  // namespace lreg
