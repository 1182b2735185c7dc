#include "lreg/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lreg/numerics.hpp"
#include "lreg/rng.hpp"

namespace lreg {

double weight_extremity(const Matrix& W, double tau) {
    if (W.size() == 0) throw std::invalid_argument("weight_extremity: empty matrix");
    if (tau <= 0.0) throw std::invalid_argument("weight_extremity: tau must be > 0");
    // All-equal input has zero spread by definition; detect it exactly rather
    // than through the accumulated mean, whose rounding can leave a phantom
    // nonzero variance that would mark every entry extreme.
    const auto [mn, mx] = std::minmax_element(W.data.begin(), W.data.end());
    if (*mn == *mx) return 0.0;
    double mean = 0.0;
    for (double w : W.data) mean += w;
    mean /= static_cast<double>(W.size());
    double var = 0.0;
    for (double w : W.data) var += (w - mean) * (w - mean);
    var /= static_cast<double>(W.size());
    const double sd = std::sqrt(var);
    if (sd == 0.0) return 0.0;
    std::size_t extreme = 0;
    for (double w : W.data)
        if (std::abs(w) > tau * sd) ++extreme;
    return static_cast<double>(extreme) / static_cast<double>(W.size());
}

SupportSet semantic_support(const AffinityMatrix& G, double threshold) {
    if (threshold <= 0.0 || threshold >= 1.0)
        throw std::invalid_argument("semantic_support: threshold must lie in (0,1)");
    const Matrix sigma = column_softmax(G).sigma;
    const std::size_t K = sigma.rows, M = sigma.cols;
    SupportSet out;
    out.dims_per_class.resize(K);
    for (std::size_t j = 0; j < K; ++j)
        for (std::size_t i = 0; i < M; ++i)
            if (sigma(j, i) >= threshold) out.dims_per_class[j].push_back(i);

    double total = 0.0;
    for (const auto& s : out.dims_per_class) total += static_cast<double>(s.size());
    out.mean_size = total / static_cast<double>(K);

    if (K >= 2) {
        double jsum = 0.0;
        std::size_t pairs = 0;
        for (std::size_t a = 0; a < K; ++a)
            for (std::size_t b = a + 1; b < K; ++b, ++pairs) {
                const auto& sa = out.dims_per_class[a];
                const auto& sb = out.dims_per_class[b];
                std::size_t inter = 0;
                std::size_t ia = 0, ib = 0;
                while (ia < sa.size() && ib < sb.size()) {
                    if (sa[ia] == sb[ib]) {
                        ++inter;
                        ++ia;
                        ++ib;
                    } else if (sa[ia] < sb[ib]) {
                        ++ia;
                    } else {
                        ++ib;
                    }
                }
                const std::size_t uni = sa.size() + sb.size() - inter;
                jsum += uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
            }
        out.mean_jaccard = jsum / static_cast<double>(pairs);
    }
    return out;
}

double feature_balance(const Matrix& Z) {
    if (Z.size() == 0) throw std::invalid_argument("feature_balance: empty matrix");
    std::vector<double> mass(Z.cols, 0.0);
    double total = 0.0;
    for (std::size_t r = 0; r < Z.rows; ++r) {
        const double* row = Z.row_ptr(r);
        for (std::size_t c = 0; c < Z.cols; ++c) {
            mass[c] += std::abs(row[c]);
            total += std::abs(row[c]);
        }
    }
    if (total == 0.0) return 0.0;
    for (double& m : mass) m /= total;
    return shannon_entropy(mass);
}

double generalization_gap(const Matrix& pred_f, const Matrix& pred_fstar) {
    if (pred_f.rows != pred_fstar.rows || pred_f.cols != pred_fstar.cols)
        throw std::invalid_argument("generalization_gap: shape mismatch");
    if (pred_f.rows == 0) throw std::invalid_argument("generalization_gap: empty input");
    double total = 0.0;
    for (std::size_t r = 0; r < pred_f.rows; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < pred_f.cols; ++c) {
            const double d = pred_f(r, c) - pred_fstar(r, c);
            s += d * d;
        }
        total += std::sqrt(s);
    }
    return total / static_cast<double>(pred_f.rows);
}

double group_mean_distance(const Matrix& Z, const std::vector<char>& in_group) {
    if (in_group.size() != Z.rows)
        throw std::invalid_argument("group_mean_distance: mask length mismatch");
    std::vector<double> a(Z.cols, 0.0), b(Z.cols, 0.0);
    std::size_t na = 0, nb = 0;
    for (std::size_t r = 0; r < Z.rows; ++r) {
        std::vector<double>& acc = in_group[r] ? a : b;
        (in_group[r] ? na : nb) += 1;
        const double* row = Z.row_ptr(r);
        for (std::size_t c = 0; c < Z.cols; ++c) acc[c] += row[c];
    }
    if (na == 0 || nb == 0) return 0.0;
    double s = 0.0;
    for (std::size_t c = 0; c < Z.cols; ++c) {
        const double d = a[c] / static_cast<double>(na) - b[c] / static_cast<double>(nb);
        s += d * d;
    }
    return std::sqrt(s);
}

LinearModel fit_linear_softmax(const Matrix& X, const std::vector<int>& y, std::size_t K,
                               const LinearFitConfig& cfg) {
    if (y.size() != X.rows) throw std::invalid_argument("fit_linear_softmax: label mismatch");
    if (K < 2) throw std::invalid_argument("fit_linear_softmax: K must be >= 2");
    const std::size_t n = X.rows, d = X.cols;

    LinearModel model;
    Rng rng(cfg.seed);
    // Small init keeps the early predictions soft, so the affinity's column
    // softmax starts unsaturated and the regularizer can shape the basin.
    model.W = Matrix(K, d);
    for (double& w : model.W.data) w = 0.1 * rng.normal();
    model.b.assign(K, 0.0);

    Matrix mW(K, d), vW(K, d);
    std::vector<double> mb(K, 0.0), vb(K, 0.0);
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;

    bool any_label = false;
    for (int yb : y)
        if (yb >= 0) any_label = true;
    if (!any_label) throw std::invalid_argument("fit_linear_softmax: no labeled rows");

    const std::size_t bsz = (cfg.batch == 0 || cfg.batch >= n) ? n : cfg.batch;
    Matrix bx(bsz, d);
    std::vector<int> by(bsz);

    for (std::size_t t = 1; t <= cfg.steps; ++t) {
        for (std::size_t r = 0; r < bsz; ++r) {
            const std::size_t s =
                bsz == n ? r : static_cast<std::size_t>(rng.uniform_int(n));
            std::copy(X.row_ptr(s), X.row_ptr(s) + d, bx.row_ptr(r));
            by[r] = y[s];
        }
        Matrix logits = matmul_nt(bx, model.W);
        for (std::size_t r = 0; r < bsz; ++r)
            for (std::size_t c = 0; c < K; ++c) logits(r, c) += model.b[c];
        Matrix P = row_softmax(logits);

        std::size_t labeled = 0;
        for (int yb : by)
            if (yb >= 0) ++labeled;
        const double inv = labeled ? 1.0 / static_cast<double>(labeled) : 0.0;

        // CE on labeled rows; dLogits = (P - onehot)/labeled
        Matrix dLogits(bsz, K);
        for (std::size_t r = 0; r < bsz; ++r) {
            if (by[r] < 0) continue;
            for (std::size_t c = 0; c < K; ++c) dLogits(r, c) = P(r, c) * inv;
            dLogits(r, static_cast<std::size_t>(by[r])) -= inv;
        }

        if (cfg.alpha > 0.0) {
            LRegBatchGrad lg = lreg_on_batch(bx, P);
            for (std::size_t r = 0; r < bsz; ++r) {
                double dot = 0.0;
                for (std::size_t c = 0; c < K; ++c) dot += lg.dYhat(r, c) * P(r, c);
                for (std::size_t c = 0; c < K; ++c)
                    dLogits(r, c) += cfg.alpha * P(r, c) * (lg.dYhat(r, c) - dot);
            }
        }

        Matrix dW = matmul_tn(dLogits, bx);
        std::vector<double> db(K, 0.0);
        for (std::size_t r = 0; r < bsz; ++r)
            for (std::size_t c = 0; c < K; ++c) db[c] += dLogits(r, c);
        for (std::size_t i = 0; i < dW.data.size(); ++i)
            dW.data[i] += cfg.l2 * 2.0 * model.W.data[i];

        const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t));
        for (std::size_t i = 0; i < dW.data.size(); ++i) {
            mW.data[i] = b1 * mW.data[i] + (1.0 - b1) * dW.data[i];
            vW.data[i] = b2 * vW.data[i] + (1.0 - b2) * dW.data[i] * dW.data[i];
            model.W.data[i] -= cfg.lr * (mW.data[i] / bc1) / (std::sqrt(vW.data[i] / bc2) + eps);
        }
        for (std::size_t c = 0; c < K; ++c) {
            mb[c] = b1 * mb[c] + (1.0 - b1) * db[c];
            vb[c] = b2 * vb[c] + (1.0 - b2) * db[c] * db[c];
            model.b[c] -= cfg.lr * (mb[c] / bc1) / (std::sqrt(vb[c] / bc2) + eps);
        }
    }
    return model;
}

Matrix linear_probs(const LinearModel& model, const Matrix& X) {
    Matrix logits = matmul_nt(X, model.W);
    for (std::size_t r = 0; r < logits.rows; ++r)
        for (std::size_t c = 0; c < logits.cols; ++c) logits(r, c) += model.b[c];
    return row_softmax(logits);
}

double accuracy(const Matrix& probs, const std::vector<int>& y) {
    if (y.size() != probs.rows) throw std::invalid_argument("accuracy: label mismatch");
    std::size_t hit = 0, n = 0;
    for (std::size_t r = 0; r < probs.rows; ++r) {
        if (y[r] < 0) continue;
        ++n;
        const double* row = probs.row_ptr(r);
        std::size_t best = 0;
        for (std::size_t c = 1; c < probs.cols; ++c)
            if (row[c] > row[best]) best = c;
        if (best == static_cast<std::size_t>(y[r])) ++hit;
    }
    return n ? static_cast<double>(hit) / static_cast<double>(n) : 0.0;
}

Prop1Record prop1_check(const Matrix& Zs, const std::vector<int>& Ys, const Matrix& Zu,
                        const std::vector<int>& Yu,
                        const std::vector<std::size_t>& support_dims,
                        const std::vector<double>& w_support, const LinearFitConfig& cfg) {
    LinearFitConfig base_cfg = cfg;
    base_cfg.alpha = 0.0;
    const LinearModel base = fit_linear_softmax(Zs, Ys, 2, base_cfg);
    const LinearModel with = fit_linear_softmax(Zs, Ys, 2, cfg);

    auto spur_mass = [&](const LinearModel& m) {
        std::vector<char> is_support(m.W.cols, 0);
        for (std::size_t i : support_dims) is_support[i] = 1;
        double mass = 0.0;
        std::size_t cnt = 0;
        for (std::size_t c = 0; c < m.W.cols; ++c) {
            if (is_support[c]) continue;
            for (std::size_t k = 0; k < m.W.rows; ++k) mass += std::abs(m.W(k, c));
            cnt += m.W.rows;
        }
        return cnt ? mass / static_cast<double>(cnt) : 0.0;
    };

    // target-model predictions: one-hot of the support-only rule
    Matrix oracle(Zu.rows, 2);
    for (std::size_t r = 0; r < Zu.rows; ++r) {
        double proj = 0.0;
        for (std::size_t j = 0; j < support_dims.size(); ++j)
            proj += w_support[j] * Zu(r, support_dims[j]);
        oracle(r, proj > 0.0 ? 1 : 0) = 1.0;
    }

    Prop1Record rec;
    rec.acc_seen_base = accuracy(linear_probs(base, Zs), Ys);
    rec.acc_seen_lreg = accuracy(linear_probs(with, Zs), Ys);
    const Matrix pu_base = linear_probs(base, Zu);
    const Matrix pu_with = linear_probs(with, Zu);
    rec.acc_unseen_base = accuracy(pu_base, Yu);
    rec.acc_unseen_lreg = accuracy(pu_with, Yu);
    rec.spur_mass_base = spur_mass(base);
    rec.spur_mass_lreg = spur_mass(with);
    rec.gap_base = generalization_gap(pu_base, oracle);
    rec.gap_lreg = generalization_gap(pu_with, oracle);
    return rec;
}

}  // namespace lreg
