#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "doctest.h"
#include "lreg/numerics.hpp"
#include "lreg/regularizers.hpp"
#include "lreg/rng.hpp"

using namespace lreg;

TEST_CASE("stable_softmax hand values") {
    const ProbVector equal = stable_softmax({0.0, 0.0});
    CHECK(equal[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(equal[1] == doctest::Approx(0.5).epsilon(1e-12));

    const ProbVector ratio = stable_softmax({std::log(1.0), std::log(2.0), std::log(3.0)});
    CHECK(ratio[0] == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
    CHECK(ratio[1] == doctest::Approx(2.0 / 6.0).epsilon(1e-12));
    CHECK(ratio[2] == doctest::Approx(3.0 / 6.0).epsilon(1e-12));

    const ProbVector hot = stable_softmax({1000.0, 0.0});
    CHECK(std::isfinite(hot[0]));
    CHECK(hot[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(hot[1] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("stable_softmax is a distribution and shift-invariant at large magnitudes") {
    Rng rng(7);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> v(6);
        for (double& x : v) x = rng.uniform(-1e3, 1e3);
        const ProbVector p = stable_softmax(v);
        double sum = 0.0;
        for (double x : p) {
            CHECK(x >= 0.0);
            CHECK(std::isfinite(x));
            sum += x;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));

        std::vector<double> shifted = v;
        for (double& x : shifted) x += 123.456;
        const ProbVector q = stable_softmax(shifted);
        for (std::size_t i = 0; i < p.size(); ++i)
            CHECK(std::abs(p[i] - q[i]) <= 1e-12);
    }
}

TEST_CASE("ln-softmax analytic gradient matches finite differences") {
    Rng rng(11);
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<double> v(10);
        for (double& x : v) x = rng.normal();
        const std::size_t pick = rep % v.size();
        auto f = [&](const std::vector<double>& x) {
            return std::log(stable_softmax(x)[pick] + 1e-300);
        };
        const std::vector<double> fd = finite_diff_grad(f, v, 1e-5);
        const ProbVector sigma = stable_softmax(v);
        std::vector<double> analytic(v.size());
        for (std::size_t i = 0; i < v.size(); ++i)
            analytic[i] = (i == pick ? 1.0 : 0.0) - sigma[i];
        CHECK(rel_err(analytic, fd) < 1e-6);
    }
}

TEST_CASE("shannon_entropy anchors") {
    // entropy values carry the ~1e-12 log clamp used for zero-safety
    CHECK(shannon_entropy({0.25, 0.25, 0.25, 0.25}) ==
          doctest::Approx(std::log(4.0)).epsilon(1e-9));
    CHECK(shannon_entropy({1.0, 0.0, 0.0}) == 0.0);

    // direct summation oracle for the two-entry case
    const ProbVector p{0.8808, 0.1192};
    const double direct = -(p[0] * std::log(p[0]) + p[1] * std::log(p[1]));
    CHECK(direct == doctest::Approx(0.36533).epsilon(1e-4));
    CHECK(shannon_entropy(p) == doctest::Approx(direct).epsilon(1e-9));
    CHECK(shannon_entropy({0.5, 0.5}) >= 0.0);
}

TEST_CASE("finite_diff_grad on quadratics and constants") {
    auto quad = [](const std::vector<double>& x) {
        double s = 0.0;
        for (double v : x) s += v * v;
        return s;
    };
    const std::vector<double> g = finite_diff_grad(quad, {1.0, 2.0}, 1e-5);
    CHECK(std::abs(g[0] - 2.0) <= 1e-8);
    CHECK(std::abs(g[1] - 4.0) <= 1e-8);

    auto constant = [](const std::vector<double>&) { return 3.5; };
    for (double v : finite_diff_grad(constant, {0.3, -0.7, 2.0}, 1e-5)) CHECK(v == 0.0);

    CHECK_THROWS_AS(finite_diff_grad(quad, {1.0}, 0.0), std::invalid_argument);
}

TEST_CASE("finite differences agree with the affinity-loss analytic gradient") {
    Rng rng(3);
    AffinityMatrix a;
    a.G = Matrix(3, 4);
    for (double& v : a.G.data) v = rng.normal();
    auto f = [&](const std::vector<double>& flat) {
        AffinityMatrix b;
        b.G = Matrix(3, 4, flat);
        return lreg_value(b);
    };
    const std::vector<double> fd = finite_diff_grad(f, a.G.data, 1e-5);
    CHECK(rel_err(lreg_grad(a).data, fd) < 1e-6);
}

TEST_CASE("row_softmax matches per-row stable_softmax") {
    Rng rng(5);
    Matrix logits(4, 3);
    for (double& v : logits.data) v = rng.uniform(-5.0, 5.0);
    const Matrix P = row_softmax(logits);
    for (std::size_t r = 0; r < logits.rows; ++r) {
        std::vector<double> row(logits.row_ptr(r), logits.row_ptr(r) + logits.cols);
        const ProbVector p = stable_softmax(row);
        for (std::size_t c = 0; c < logits.cols; ++c)
            CHECK(P(r, c) == doctest::Approx(p[c]).epsilon(1e-15));
    }
}

TEST_CASE("rng determinism and stream separation") {
    Rng a(42), b(42), c(43);
    bool all_equal = true, any_diff = false;
    for (int i = 0; i < 10; ++i) {
        const std::uint64_t x = a.next_u64();
        all_equal = all_equal && (x == b.next_u64());
        any_diff = any_diff || (x != c.next_u64());
    }
    CHECK(all_equal);
    CHECK(any_diff);

    Rng u(0);
    for (int i = 0; i < 1000; ++i) {
        const double x = u.uniform();
        CHECK(x >= 0.0);
        CHECK(x < 1.0);
    }
}

TEST_CASE("rng vector helpers and normal statistics") {
    Rng rng(1);
    const std::vector<double> us = rng_uniform(rng, 100);
    CHECK(us.size() == 100);
    const std::vector<double> ns = rng_normal(rng, 100000);
    CHECK(ns.size() == 100000);
    double mean = 0.0;
    for (double v : ns) mean += v;
    mean /= static_cast<double>(ns.size());
    CHECK(mean >= -0.02);
    CHECK(mean <= 0.02);
}

TEST_CASE("rng shuffle preserves the multiset and uniform_int stays in range") {
    Rng rng(9);
    std::vector<int> v{1, 2, 3, 4, 5, 6, 7, 8};
    std::vector<int> shuffled = v;
    rng.shuffle(shuffled);
    CHECK(std::multiset<int>(shuffled.begin(), shuffled.end()) ==
          std::multiset<int>(v.begin(), v.end()));
    for (int i = 0; i < 1000; ++i) CHECK(rng.uniform_int(7) < 7);
}

TEST_CASE("rel_err and vec_max_abs basics") {
    CHECK(rel_err({1.0, 2.0}, {1.0, 2.0}) == 0.0);
    CHECK(rel_err({1.0, 0.0}, {0.0, 0.0}) == doctest::Approx(1.0));
    CHECK(vec_max_abs({-3.0, 2.0, 0.5}) == 3.0);
    CHECK(vec_max_abs({}) == 0.0);
}
