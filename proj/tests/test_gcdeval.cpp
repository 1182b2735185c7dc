#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "lreg/gcdeval.hpp"
#include "lreg/rng.hpp"

using namespace lreg;

namespace {

// exhaustive minimum over all permutations, exact for small n
double brute_force_min_cost(const Matrix& cost) {
    std::vector<std::size_t> perm(cost.rows);
    std::iota(perm.begin(), perm.end(), 0);
    double best = 1e300;
    do {
        double c = 0.0;
        for (std::size_t i = 0; i < cost.rows; ++i) c += cost(i, perm[i]);
        best = std::min(best, c);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

bool is_permutation_of_indices(const std::vector<std::size_t>& perm) {
    std::vector<char> seen(perm.size(), 0);
    for (std::size_t p : perm) {
        if (p >= perm.size() || seen[p]) return false;
        seen[p] = 1;
    }
    return true;
}

}  // namespace

TEST_CASE("hungarian hand-checked anchors") {
    SUBCASE("1x1") {
        Matrix c(1, 1);
        c(0, 0) = 7.5;
        const Assignment a = hungarian(c);
        CHECK(a.perm == std::vector<std::size_t>{0});
        CHECK(a.total_cost == doctest::Approx(7.5).epsilon(1e-12));
    }
    SUBCASE("classic 3x3, unique optimum 5 at (0->1, 1->0, 2->2)") {
        Matrix c(3, 3);
        const double vals[9] = {4, 1, 3, 2, 0, 5, 3, 2, 2};
        std::copy(vals, vals + 9, c.data.begin());
        const Assignment a = hungarian(c);
        CHECK(a.total_cost == doctest::Approx(5.0).epsilon(1e-12));
        CHECK(a.perm == std::vector<std::size_t>{1, 0, 2});
    }
    SUBCASE("identity cost has a zero-cost derangement") {
        Matrix c(3, 3);
        c(0, 0) = c(1, 1) = c(2, 2) = 1.0;
        const Assignment a = hungarian(c);
        CHECK(a.total_cost == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(is_permutation_of_indices(a.perm));
        for (std::size_t i = 0; i < 3; ++i) CHECK(a.perm[i] != i);
    }
    SUBCASE("rejects non-square and empty input") {
        CHECK_THROWS_AS(hungarian(Matrix(2, 3)), std::invalid_argument);
        CHECK_THROWS_AS(hungarian(Matrix(0, 0)), std::invalid_argument);
    }
}

TEST_CASE("hungarian matches exhaustive search on random instances") {
    Rng rng(2024);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform_int(5));  // 2..6
        Matrix c(n, n);
        for (double& v : c.data) v = rng.uniform(-5.0, 5.0);
        const Assignment a = hungarian(c);
        REQUIRE(is_permutation_of_indices(a.perm));
        double recomputed = 0.0;
        for (std::size_t i = 0; i < n; ++i) recomputed += c(i, a.perm[i]);
        CHECK(a.total_cost == doctest::Approx(recomputed).epsilon(1e-9));
        CHECK(a.total_cost == doctest::Approx(brute_force_min_cost(c)).epsilon(1e-9));
    }
}

TEST_CASE("gcd_accuracy hand-checked anchors") {
    SUBCASE("relabeled clustering scores 1.0") {
        // pred is gt pushed through the cycle 0->2->1->0
        const std::vector<int> gt = {0, 1, 2, 0, 1, 2};
        const std::vector<int> pred = {2, 0, 1, 2, 0, 1};
        const GcdReport rep = gcd_accuracy(pred, gt, {});
        CHECK(rep.acc_all == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(rep.n_all == 6);
        CHECK(rep.matched_all == 6);
    }
    SUBCASE("constant prediction on balanced labels scores 1/K") {
        const std::vector<int> gt = {0, 1, 2, 3, 0, 1, 2, 3};
        const std::vector<int> pred(8, 0);
        const GcdReport rep = gcd_accuracy(pred, gt, {});
        CHECK(rep.acc_all == doctest::Approx(0.25).epsilon(1e-12));
    }
    SUBCASE("single mapping shared by known and unknown subsets") {
        // classes 0,1 known; class 2 unknown; one unknown sample predicted into
        // the cluster matched to class 1 -> unknown side pays for it
        const std::vector<int> gt = {0, 0, 1, 1, 2, 2};
        const std::vector<int> pred = {1, 1, 0, 0, 2, 0};
        const std::vector<char> known = {1, 1, 1, 1, 0, 0};
        const GcdReport rep = gcd_accuracy(pred, gt, known);
        CHECK(rep.n_known == 4);
        CHECK(rep.n_unknown == 2);
        CHECK(rep.acc_known == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(rep.acc_unknown == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(rep.acc_all == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
        CHECK(rep.matched_known + rep.matched_unknown == rep.matched_all);
    }
    SUBCASE("argument validation") {
        CHECK_THROWS_AS(gcd_accuracy({}, {}, {}), std::invalid_argument);
        CHECK_THROWS_AS(gcd_accuracy({0, 1}, {0}, {}), std::invalid_argument);
        CHECK_THROWS_AS(gcd_accuracy({0, -1}, {0, 1}, {}), std::invalid_argument);
        CHECK_THROWS_AS(gcd_accuracy({0, 1}, {0, 1}, {1}), std::invalid_argument);
    }
}

TEST_CASE("gcd_accuracy equals exhaustive best mapping on random labelings") {
    Rng rng(77);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 60, K = 4;
        std::vector<int> gt(n), pred(n);
        std::vector<char> known(n);
        for (std::size_t i = 0; i < n; ++i) {
            gt[i] = static_cast<int>(rng.uniform_int(K));
            pred[i] = static_cast<int>(rng.uniform_int(K));
            known[i] = gt[i] < 2 ? 1 : 0;
        }
        const GcdReport rep = gcd_accuracy(pred, gt, known);

        std::vector<int> map(K);
        std::iota(map.begin(), map.end(), 0);
        std::size_t best = 0;
        do {
            std::size_t hits = 0;
            for (std::size_t i = 0; i < n; ++i) hits += map[pred[i]] == gt[i];
            best = std::max(best, hits);
        } while (std::next_permutation(map.begin(), map.end()));
        CHECK(rep.matched_all == best);
        CHECK(rep.acc_all == doctest::Approx(static_cast<double>(best) / 60.0).epsilon(1e-12));
        CHECK(rep.matched_known + rep.matched_unknown == rep.matched_all);
        CHECK(rep.n_known + rep.n_unknown == rep.n_all);
    }
}

TEST_CASE("kmeans basics") {
    SUBCASE("k = 1 assigns everything to cluster 0") {
        Matrix X(5, 2);
        Rng rng(1);
        for (double& v : X.data) v = rng.normal();
        const std::vector<int> ids = kmeans(X, 1, 0);
        for (int id : ids) CHECK(id == 0);
    }
    SUBCASE("argument validation") {
        CHECK_THROWS_AS(kmeans(Matrix(3, 2), 0, 0), std::invalid_argument);
        CHECK_THROWS_AS(kmeans(Matrix(3, 2), 4, 0), std::invalid_argument);
    }
    SUBCASE("deterministic per seed") {
        Matrix X(40, 3);
        Rng rng(9);
        for (double& v : X.data) v = rng.normal();
        CHECK(kmeans(X, 4, 123) == kmeans(X, 4, 123));
    }
}

TEST_CASE("kmeans separates distant blobs") {
    // two unit-variance blobs 10 apart: essentially error-free clustering
    std::size_t wins = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(1000 + seed);
        const std::size_t n_per = 50;
        Matrix X(2 * n_per, 2);
        std::vector<int> gt(2 * n_per);
        for (std::size_t i = 0; i < 2 * n_per; ++i) {
            const int blob = i < n_per ? 0 : 1;
            gt[i] = blob;
            X(i, 0) = (blob ? 10.0 : 0.0) + 0.5 * rng.normal();
            X(i, 1) = 0.5 * rng.normal();
        }
        const std::vector<int> ids = kmeans(X, 2, seed);
        const GcdReport rep = gcd_accuracy(ids, gt, {});
        wins += rep.acc_all >= 0.99 ? 1 : 0;
    }
    CHECK(wins >= 9);
}

TEST_CASE("kmeans output is a Lloyd fixed point on well-separated data") {
    Rng rng(5);
    const std::size_t n_per = 30, k = 3;
    Matrix X(n_per * k, 2);
    for (std::size_t i = 0; i < X.rows; ++i) {
        const std::size_t blob = i / n_per;
        X(i, 0) = 8.0 * static_cast<double>(blob) + 0.4 * rng.normal();
        X(i, 1) = (blob == 1 ? 6.0 : 0.0) + 0.4 * rng.normal();
    }
    const std::vector<int> ids = kmeans(X, k, 42);

    // recompute centroids from the returned labels
    Matrix cent(k, 2);
    std::vector<double> cnt(k, 0.0);
    for (std::size_t i = 0; i < X.rows; ++i) {
        cnt[static_cast<std::size_t>(ids[i])] += 1.0;
        for (std::size_t c = 0; c < 2; ++c) cent(static_cast<std::size_t>(ids[i]), c) += X(i, c);
    }
    for (std::size_t j = 0; j < k; ++j) {
        REQUIRE(cnt[j] > 0.0);
        for (std::size_t c = 0; c < 2; ++c) cent(j, c) /= cnt[j];
    }
    // every point already sits with its nearest centroid
    for (std::size_t i = 0; i < X.rows; ++i) {
        double best_d = 1e300;
        int best = -1;
        for (std::size_t j = 0; j < k; ++j) {
            double d2 = 0.0;
            for (std::size_t c = 0; c < 2; ++c) {
                const double dlt = X(i, c) - cent(j, c);
                d2 += dlt * dlt;
            }
            if (d2 < best_d) {
                best_d = d2;
                best = static_cast<int>(j);
            }
        }
        CHECK(best == ids[i]);
    }
}
