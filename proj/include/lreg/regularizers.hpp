#pragma once

#include <vector>

#include "lreg/matrix.hpp"
#include "lreg/numerics.hpp"

namespace lreg {

// K x M class-by-semantic-dimension affinity G = Yhat^T Z.
struct AffinityMatrix {
    Matrix G;
    std::size_t K() const { return G.rows; }
    std::size_t M() const { return G.cols; }
};

// Column-stochastic: each column is a distribution over the K classes.
struct SigmaMatrix {
    Matrix sigma;
};

struct LossWithGrad {
    double value = 0.0;
    Matrix grad;
};

struct VecLossWithGrad {
    double value = 0.0;
    std::vector<double> grad;
};

struct LRegBatchGrad {
    double value = 0.0;
    Matrix dZ;
    Matrix dYhat;
};

enum class PenaltyKind { L1, L2 };

AffinityMatrix affinity(const Matrix& Z, const Matrix& Yhat);

SigmaMatrix column_softmax(const AffinityMatrix& a);

// Mean per-dimension class entropy minus entropy of the dimension-averaged
// class distribution; equals -I(J;I) for the joint p(j,i) = sigma[j,i]/M.
// Range [-min(ln K, ln M), 0].
double lreg_value(const AffinityMatrix& a);

Matrix lreg_grad(const AffinityMatrix& a);

LRegBatchGrad lreg_on_batch(const Matrix& Z, const Matrix& Yhat);

// Value of the degenerate row-normalized reading (softmax over the semantic
// axis). Its second term is the constant -(K/M) ln M, so it is reported for
// diagnosis only and never differentiated.
double lreg_value_literal(const AffinityMatrix& a);

// Sum of squared off-diagonal column correlations; zero-variance columns
// contribute 0 and receive zero gradient.
LossWithGrad ortho_reg(const Matrix& Z);

VecLossWithGrad weight_penalty(const std::vector<double>& params, PenaltyKind kind);

}  // namespace lreg
