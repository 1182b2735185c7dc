#include "lreg/gcdeval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "lreg/rng.hpp"

namespace lreg {

Assignment hungarian(const Matrix& cost) {
    if (cost.rows != cost.cols) throw std::invalid_argument("hungarian: matrix must be square");
    if (cost.rows == 0) throw std::invalid_argument("hungarian: empty matrix");
    cost.require_finite("hungarian");
    const std::size_t n = cost.rows;
    constexpr double kInf = std::numeric_limits<double>::infinity();

    // potentials method over a 1-indexed grid with sentinel column 0
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::fill(minv.begin(), minv.end(), kInf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            double delta = kInf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    Assignment out;
    out.perm.assign(n, 0);
    for (std::size_t j = 1; j <= n; ++j) out.perm[p[j] - 1] = j - 1;
    for (std::size_t i = 0; i < n; ++i) out.total_cost += cost(i, out.perm[i]);
    return out;
}

GcdReport gcd_accuracy(const std::vector<int>& pred_ids, const std::vector<int>& gt_ids,
                       const std::vector<char>& known_mask) {
    if (pred_ids.size() != gt_ids.size() || pred_ids.empty())
        throw std::invalid_argument("gcd_accuracy: id vectors must share a length >= 1");
    if (!known_mask.empty() && known_mask.size() != pred_ids.size())
        throw std::invalid_argument("gcd_accuracy: known_mask length mismatch");
    int mx = 0;
    for (std::size_t i = 0; i < pred_ids.size(); ++i) {
        if (pred_ids[i] < 0 || gt_ids[i] < 0)
            throw std::invalid_argument("gcd_accuracy: ids must be >= 0");
        mx = std::max({mx, pred_ids[i], gt_ids[i]});
    }
    const std::size_t D = static_cast<std::size_t>(mx) + 1;

    Matrix overlap(D, D);
    for (std::size_t i = 0; i < pred_ids.size(); ++i) overlap(pred_ids[i], gt_ids[i]) += 1.0;
    Matrix neg = overlap;
    for (double& x : neg.data) x = -x;
    const Assignment a = hungarian(neg);

    GcdReport rep;
    rep.n_all = pred_ids.size();
    for (std::size_t i = 0; i < pred_ids.size(); ++i) {
        const bool known = known_mask.empty() ? true : known_mask[i] != 0;
        const bool hit = a.perm[pred_ids[i]] == static_cast<std::size_t>(gt_ids[i]);
        if (known)
            ++rep.n_known;
        else
            ++rep.n_unknown;
        if (hit) {
            ++rep.matched_all;
            if (known)
                ++rep.matched_known;
            else
                ++rep.matched_unknown;
        }
    }
    rep.acc_all = static_cast<double>(rep.matched_all) / static_cast<double>(rep.n_all);
    rep.acc_known =
        rep.n_known ? static_cast<double>(rep.matched_known) / static_cast<double>(rep.n_known)
                    : 0.0;
    rep.acc_unknown = rep.n_unknown ? static_cast<double>(rep.matched_unknown) /
                                          static_cast<double>(rep.n_unknown)
                                    : 0.0;
    return rep;
}

std::string GcdReport::csv_row(const std::string& run_id, std::uint64_t seed,
                               const std::string& setting) const {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s,%llu,%s,%.17g,%.17g,%.17g", run_id.c_str(),
                  static_cast<unsigned long long>(seed), setting.c_str(), acc_all, acc_known,
                  acc_unknown);
    return buf;
}

namespace {

double sq_dist(const double* a, const double* b, std::size_t d) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double t = a[i] - b[i];
        s += t * t;
    }
    return s;
}

}  // namespace

std::vector<int> kmeans(const Matrix& X, std::size_t k, std::uint64_t seed,
                        std::size_t max_iter) {
    const std::size_t n = X.rows, d = X.cols;
    if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
    if (n < k) throw std::invalid_argument("kmeans: fewer points than clusters");

    Rng rng(seed);
    Matrix C(k, d);

    // k-means++ seeding
    std::vector<double> dist2(n, std::numeric_limits<double>::infinity());
    std::size_t first = static_cast<std::size_t>(rng.uniform_int(n));
    std::copy(X.row_ptr(first), X.row_ptr(first) + d, C.row_ptr(0));
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            dist2[i] = std::min(dist2[i], sq_dist(X.row_ptr(i), C.row_ptr(c - 1), d));
            total += dist2[i];
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            const double r = rng.uniform() * total;
            double acc = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += dist2[i];
                if (acc >= r) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<std::size_t>(rng.uniform_int(n));
        }
        std::copy(X.row_ptr(pick), X.row_ptr(pick) + d, C.row_ptr(c));
    }

    std::vector<int> assign(n, -1);
    std::vector<std::size_t> counts(k);
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            int bc = 0;
            for (std::size_t c = 0; c < k; ++c) {
                const double ds = sq_dist(X.row_ptr(i), C.row_ptr(c), d);
                if (ds < best) {
                    best = ds;
                    bc = static_cast<int>(c);
                }
            }
            if (assign[i] != bc) {
                assign[i] = bc;
                changed = true;
            }
        }
        if (!changed && iter > 0) break;

        std::fill(C.data.begin(), C.data.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            double* crow = C.row_ptr(assign[i]);
            const double* xrow = X.row_ptr(i);
            for (std::size_t j = 0; j < d; ++j) crow[j] += xrow[j];
            ++counts[assign[i]];
        }
        for (std::size_t c = 0; c < k; ++c)
            if (counts[c])
                for (std::size_t j = 0; j < d; ++j) C(c, j) /= static_cast<double>(counts[c]);

        // re-seed any empty cluster to the point farthest from its own centroid
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c]) continue;
            double far = -1.0;
            std::size_t pick = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const double ds = sq_dist(X.row_ptr(i), C.row_ptr(assign[i]), d);
                if (ds > far) {
                    far = ds;
                    pick = i;
                }
            }
            std::copy(X.row_ptr(pick), X.row_ptr(pick) + d, C.row_ptr(c));
        }
    }
    return assign;
}

}  // namespace lreg
