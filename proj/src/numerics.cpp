#include "lreg/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lreg {

ProbVector stable_softmax(const std::vector<double>& v) {
    if (v.empty()) throw std::invalid_argument("stable_softmax: empty vector");
    const double m = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(m)) throw std::invalid_argument("stable_softmax: non-finite input");
    ProbVector p(v.size());
    double z = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        p[i] = std::exp(v[i] - m);
        z += p[i];
    }
    for (double& x : p) x /= z;
    return p;
}

double shannon_entropy(const ProbVector& p) {
    double h = 0.0;
    for (double x : p) h -= x * std::log(x + kLogEps);
    return std::max(0.0, h);
}

std::vector<double> finite_diff_grad(const std::function<double(const std::vector<double>&)>& f,
                                     const std::vector<double>& x, double h) {
    if (h <= 0.0) throw std::invalid_argument("finite_diff_grad: h must be positive");
    std::vector<double> g(x.size());
    std::vector<double> xp = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double xi = x[i];
        xp[i] = xi + h;
        const double fp = f(xp);
        xp[i] = xi - h;
        const double fm = f(xp);
        xp[i] = xi;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw std::runtime_error("finite_diff_grad: non-finite function value");
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

Matrix row_softmax(const Matrix& logits) {
    Matrix P(logits.rows, logits.cols);
    std::vector<double> row(logits.cols);
    for (std::size_t r = 0; r < logits.rows; ++r) {
        const double* src = logits.row_ptr(r);
        row.assign(src, src + logits.cols);
        const ProbVector p = stable_softmax(row);
        std::copy(p.begin(), p.end(), P.row_ptr(r));
    }
    return P;
}

double vec_max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("rel_err: length mismatch");
    double d2 = 0.0, a2 = 0.0, b2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        d2 += d * d;
        a2 += a[i] * a[i];
        b2 += b[i] * b[i];
    }
    return std::sqrt(d2) / std::max(1e-12, std::sqrt(a2) + std::sqrt(b2));
}

std::vector<double> rng_uniform(Rng& rng, std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform();
    return v;
}

std::vector<double> rng_normal(Rng& rng, std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal();
    return v;
}

}  // namespace lreg
