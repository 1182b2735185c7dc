#pragma once

#include <functional>
#include <vector>

#include "lreg/matrix.hpp"
#include "lreg/rng.hpp"

namespace lreg {

// Nonnegative entries summing to 1 (within 1e-9); all entropies are in nats.
using ProbVector = std::vector<double>;

constexpr double kLogEps = 1e-12;  // added inside logs only

ProbVector stable_softmax(const std::vector<double>& v);

// -sum p ln(p + eps), clamped at 0 so one-hot inputs honor H >= 0.
double shannon_entropy(const ProbVector& p);

std::vector<double> finite_diff_grad(const std::function<double(const std::vector<double>&)>& f,
                                     const std::vector<double>& x, double h);

// Row-wise softmax of a matrix of logits.
Matrix row_softmax(const Matrix& logits);

double vec_max_abs(const std::vector<double>& v);

// ||a - b||_2 / max(1e-12, ||a||_2 + ||b||_2), the usual gradient-check metric
double rel_err(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace lreg
