#include "lreg/regularizers.hpp"

#include <cmath>
#include <stdexcept>

namespace lreg {

namespace {

// Unclamped -sum p ln(p + eps); the analytic gradients differentiate exactly this.
double raw_entropy(const double* p, std::size_t n) {
    double h = 0.0;
    for (std::size_t i = 0; i < n; ++i) h -= p[i] * std::log(p[i] + kLogEps);
    return h;
}

std::vector<double> column_means(const Matrix& sigma) {
    std::vector<double> pbar(sigma.rows, 0.0);
    for (std::size_t j = 0; j < sigma.rows; ++j) {
        const double* row = sigma.row_ptr(j);
        double s = 0.0;
        for (std::size_t i = 0; i < sigma.cols; ++i) s += row[i];
        pbar[j] = s / static_cast<double>(sigma.cols);
    }
    return pbar;
}

}  // namespace

AffinityMatrix affinity(const Matrix& Z, const Matrix& Yhat) {
    if (Z.rows != Yhat.rows || Z.rows == 0)
        throw std::invalid_argument("affinity: Z and Yhat must share a batch size >= 1");
    return AffinityMatrix{matmul_tn(Yhat, Z)};
}

SigmaMatrix column_softmax(const AffinityMatrix& a) {
    const Matrix& G = a.G;
    Matrix sigma(G.rows, G.cols);
    std::vector<double> col(G.rows);
    for (std::size_t i = 0; i < G.cols; ++i) {
        for (std::size_t j = 0; j < G.rows; ++j) col[j] = G(j, i);
        const ProbVector p = stable_softmax(col);
        for (std::size_t j = 0; j < G.rows; ++j) sigma(j, i) = p[j];
    }
    return SigmaMatrix{std::move(sigma)};
}

double lreg_value(const AffinityMatrix& a) {
    const std::size_t K = a.K(), M = a.M();
    if (K == 0 || M == 0) throw std::invalid_argument("lreg_value: empty affinity matrix");
    if (K == 1) return 0.0;
    const Matrix sigma = column_softmax(a).sigma;
    std::vector<double> col(K);
    double cond = 0.0;
    for (std::size_t i = 0; i < M; ++i) {
        for (std::size_t j = 0; j < K; ++j) col[j] = sigma(j, i);
        cond += raw_entropy(col.data(), K);
    }
    cond /= static_cast<double>(M);
    const std::vector<double> pbar = column_means(sigma);
    return cond - raw_entropy(pbar.data(), K);
}

Matrix lreg_grad(const AffinityMatrix& a) {
    const std::size_t K = a.K(), M = a.M();
    if (K == 0 || M == 0) throw std::invalid_argument("lreg_grad: empty affinity matrix");
    Matrix dG(K, M);
    if (K == 1) return dG;
    const Matrix sigma = column_softmax(a).sigma;
    const std::vector<double> pbar = column_means(sigma);

    // d(value)/d(sigma[j,i]) before the softmax chain
    std::vector<double> marg(K);
    for (std::size_t j = 0; j < K; ++j)
        marg[j] = std::log(pbar[j] + kLogEps) + pbar[j] / (pbar[j] + kLogEps);
    Matrix A(K, M);
    const double invM = 1.0 / static_cast<double>(M);
    for (std::size_t j = 0; j < K; ++j)
        for (std::size_t i = 0; i < M; ++i) {
            const double s = sigma(j, i);
            A(j, i) = invM * (-(std::log(s + kLogEps) + s / (s + kLogEps)) + marg[j]);
        }

    // column-softmax Jacobian: dG[k,i] = sigma[k,i] (A[k,i] - sum_j sigma[j,i] A[j,i])
    for (std::size_t i = 0; i < M; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < K; ++j) dot += sigma(j, i) * A(j, i);
        for (std::size_t k = 0; k < K; ++k) dG(k, i) = sigma(k, i) * (A(k, i) - dot);
    }
    return dG;
}

LRegBatchGrad lreg_on_batch(const Matrix& Z, const Matrix& Yhat) {
    const AffinityMatrix a = affinity(Z, Yhat);
    LRegBatchGrad out;
    out.value = lreg_value(a);
    const Matrix dG = lreg_grad(a);
    out.dZ = matmul(Yhat, dG);
    out.dYhat = matmul_nt(Z, dG);
    return out;
}

double lreg_value_literal(const AffinityMatrix& a) {
    const std::size_t K = a.K(), M = a.M();
    if (K == 0 || M == 0) throw std::invalid_argument("lreg_value_literal: empty affinity matrix");
    const Matrix sigma = row_softmax(a.G);
    std::vector<double> pbar(K);
    double cond = 0.0;
    for (std::size_t j = 0; j < K; ++j) {
        cond += raw_entropy(sigma.row_ptr(j), M);
        double s = 0.0;
        for (std::size_t i = 0; i < M; ++i) s += sigma(j, i);
        pbar[j] = s / static_cast<double>(M);
    }
    return cond / static_cast<double>(M) - raw_entropy(pbar.data(), K);
}

LossWithGrad ortho_reg(const Matrix& Z) {
    const std::size_t B = Z.rows, M = Z.cols;
    if (B < 2) throw std::invalid_argument("ortho_reg: needs at least 2 rows");
    LossWithGrad out;
    out.grad = Matrix(B, M);
    if (M < 2) return out;

    // center columns, compute norms, flag dead (zero-variance) columns
    Matrix U(B, M);
    std::vector<double> norms(M, 0.0);
    std::vector<char> dead(M, 0);
    for (std::size_t i = 0; i < M; ++i) {
        double mean = 0.0, maxabs = 0.0;
        for (std::size_t b = 0; b < B; ++b) {
            mean += Z(b, i);
            maxabs = std::max(maxabs, std::abs(Z(b, i)));
        }
        mean /= static_cast<double>(B);
        double n2 = 0.0;
        for (std::size_t b = 0; b < B; ++b) {
            const double c = Z(b, i) - mean;
            U(b, i) = c;
            n2 += c * c;
        }
        const double n = std::sqrt(n2);
        if (n <= 1e-12 * std::sqrt(static_cast<double>(B)) * (1.0 + maxabs)) {
            dead[i] = 1;
            for (std::size_t b = 0; b < B; ++b) U(b, i) = 0.0;
        } else {
            norms[i] = n;
            for (std::size_t b = 0; b < B; ++b) U(b, i) /= n;
        }
    }

    const Matrix C = matmul_tn(U, U);  // correlations; dead columns give zero rows/cols
    for (std::size_t i = 0; i < M; ++i)
        for (std::size_t k = 0; k < M; ++k)
            if (i != k) out.value += C(i, k) * C(i, k);

    // dV/du_i = 4 sum_{k != i} C[i,k] u_k
    Matrix Coff = C;
    for (std::size_t i = 0; i < M; ++i) Coff(i, i) = 0.0;
    Matrix Gu = matmul(U, Coff);  // column i holds sum_k C[i,k] u_k (C symmetric)
    for (double& v : Gu.data) v *= 4.0;

    // chain through u = centered/norm, then through centering
    for (std::size_t i = 0; i < M; ++i) {
        if (dead[i]) continue;
        double dot = 0.0, gsum = 0.0;
        for (std::size_t b = 0; b < B; ++b) dot += U(b, i) * Gu(b, i);
        std::vector<double> gc(B);
        for (std::size_t b = 0; b < B; ++b) {
            gc[b] = (Gu(b, i) - U(b, i) * dot) / norms[i];
            gsum += gc[b];
        }
        const double gmean = gsum / static_cast<double>(B);
        for (std::size_t b = 0; b < B; ++b) out.grad(b, i) = gc[b] - gmean;
    }
    return out;
}

VecLossWithGrad weight_penalty(const std::vector<double>& params, PenaltyKind kind) {
    VecLossWithGrad out;
    out.grad.assign(params.size(), 0.0);
    if (kind == PenaltyKind::L1) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            out.value += std::abs(params[i]);
            out.grad[i] = params[i] > 0.0 ? 1.0 : (params[i] < 0.0 ? -1.0 : 0.0);
        }
    } else {
        for (std::size_t i = 0; i < params.size(); ++i) {
            out.value += params[i] * params[i];
            out.grad[i] = 2.0 * params[i];
        }
    }
    return out;
}

}  // namespace lreg
