#include "lreg/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "lreg/rng.hpp"

namespace lreg {

double toy_oracle(double x1, double x2) {
    constexpr double two_pi = 2.0 * 3.14159265358979323846;
    return std::sin(two_pi * x1) * std::sin(two_pi * x2);
}

ToyData toy_dataset(std::size_t n_train, ToyBox box, std::size_t grid_resolution,
                    std::uint64_t seed) {
    if (n_train < 1) throw std::invalid_argument("toy_dataset: n_train must be >= 1");
    if (!(box.lo < box.hi) || box.lo < -1.0 || box.hi > 1.0)
        throw std::invalid_argument("toy_dataset: degenerate box");
    if (grid_resolution < 2) throw std::invalid_argument("toy_dataset: grid_resolution >= 2");

    Rng rng(seed);
    ToyData out;
    out.train.inputs = Matrix(n_train, 2);
    out.train.targets.resize(n_train);
    out.train.region_mask.assign(n_train, 1);
    for (std::size_t i = 0; i < n_train; ++i) {
        const double x1 = rng.uniform(box.lo, box.hi);
        const double x2 = rng.uniform(box.lo, box.hi);
        out.train.inputs(i, 0) = x1;
        out.train.inputs(i, 1) = x2;
        out.train.targets[i] = toy_oracle(x1, x2);
    }

    const std::size_t g = grid_resolution;
    out.eval_grid.inputs = Matrix(g * g, 2);
    out.eval_grid.targets.resize(g * g);
    out.eval_grid.region_mask.assign(g * g, 0);
    std::size_t r = 0;
    for (std::size_t i = 0; i < g; ++i) {
        const double x1 = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(g - 1);
        for (std::size_t j = 0; j < g; ++j, ++r) {
            const double x2 = -1.0 + 2.0 * static_cast<double>(j) / static_cast<double>(g - 1);
            out.eval_grid.inputs(r, 0) = x1;
            out.eval_grid.inputs(r, 1) = x2;
            out.eval_grid.targets[r] = toy_oracle(x1, x2);
            out.eval_grid.region_mask[r] =
                (x1 >= box.lo && x1 <= box.hi && x2 >= box.lo && x2 <= box.hi) ? 1 : 0;
        }
    }
    return out;
}

SynthClassSet mdg_dataset(const MdgParams& p, std::uint64_t seed) {
    if (p.K < 2) throw std::invalid_argument("mdg_dataset: K must be >= 2");
    if (p.n_domains < 2) throw std::invalid_argument("mdg_dataset: needs >= 2 domains");
    if (p.m_inf < 1) throw std::invalid_argument("mdg_dataset: m_inf must be >= 1");
    if (p.n_per_domain < 1) throw std::invalid_argument("mdg_dataset: n_per_domain >= 1");
    if (p.unseen_domain >= p.n_domains)
        throw std::invalid_argument("mdg_dataset: unseen_domain out of range");
    if (p.rho_seen < 0.0 || p.rho_seen > 1.0)
        throw std::invalid_argument("mdg_dataset: rho_seen must lie in [0,1]");

    Rng rng(seed);

    // class means: 3*e_y on the standard basis when it fits, else spaced on a line
    Matrix mu(p.K, p.m_inf);
    for (std::size_t y = 0; y < p.K; ++y) {
        if (p.m_inf >= p.K)
            mu(y, y) = 3.0;
        else
            mu(y, 0) = 3.0 * static_cast<double>(y);
    }

    // class sign pattern for the spurious block, then optional per-domain flips
    Matrix sy(p.K, p.m_spur);
    for (double& v : sy.data) v = rng.uniform() < 0.5 ? -1.0 : 1.0;
    Matrix flips(p.n_domains, p.m_spur);
    for (double& v : flips.data)
        v = (p.domain_sign_flips && rng.uniform() < 0.5) ? -1.0 : 1.0;

    const std::size_t n = p.n_domains * p.n_per_domain;
    const std::size_t d_total = p.m_inf + p.m_spur;
    SynthClassSet set;
    set.X = Matrix(n, d_total);
    set.y.resize(n);
    set.domain.resize(n);
    set.known_mask.assign(n, 1);

    const double noise_scale = std::sqrt(1.0 - p.rho_seen * p.rho_seen);
    std::size_t row = 0;
    for (std::size_t d = 0; d < p.n_domains; ++d) {
        const bool unseen = d == p.unseen_domain;
        for (std::size_t t = 0; t < p.n_per_domain; ++t, ++row) {
            const std::size_t y = t % p.K;
            set.y[row] = static_cast<int>(y);
            set.domain[row] = static_cast<int>(d);
            for (std::size_t i = 0; i < p.m_inf; ++i)
                set.X(row, i) = mu(y, i) + rng.normal();
            for (std::size_t i = 0; i < p.m_spur; ++i) {
                const double noise = rng.normal();
                set.X(row, p.m_inf + i) =
                    unseen ? noise
                           : p.rho_seen * flips(d, i) * sy(y, i) + noise_scale * noise;
            }
        }
    }
    return set;
}

namespace {

SynthClassSet take_rows(const SynthClassSet& set, const std::vector<std::size_t>& idx) {
    SynthClassSet out;
    out.X = Matrix(idx.size(), set.X.cols);
    out.y.resize(idx.size());
    out.domain.resize(idx.size());
    out.known_mask.resize(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
        const std::size_t s = idx[r];
        std::copy(set.X.row_ptr(s), set.X.row_ptr(s) + set.X.cols, out.X.row_ptr(r));
        out.y[r] = set.y[s];
        out.domain[r] = set.domain[s];
        out.known_mask[r] = set.known_mask[s];
    }
    return out;
}

}  // namespace

GcdSplit gcd_split(const SynthClassSet& set, const SplitSpec& spec, std::uint64_t seed) {
    if (set.size() == 0) throw std::invalid_argument("gcd_split: empty set");
    if (spec.known_class_fraction <= 0.0 || spec.known_class_fraction > 1.0 ||
        spec.labeled_fraction_of_known <= 0.0 || spec.labeled_fraction_of_known > 1.0)
        throw std::invalid_argument("gcd_split: fractions must lie in (0,1]");
    int maxy = 0;
    for (int y : set.y) maxy = std::max(maxy, y);
    const std::size_t K = static_cast<std::size_t>(maxy) + 1;
    const std::size_t n_known =
        static_cast<std::size_t>(std::floor(static_cast<double>(K) * spec.known_class_fraction));
    if (n_known == 0 || n_known > K)
        throw std::invalid_argument("gcd_split: known-class side is empty");

    // per known class, a labeled_fraction share (rounded) drawn without replacement
    Rng rng(seed);
    std::vector<char> labeled_flag(set.size(), 0);
    for (std::size_t c = 0; c < n_known; ++c) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < set.size(); ++i)
            if (set.y[i] == static_cast<int>(c)) members.push_back(i);
        rng.shuffle(members);
        const std::size_t n_lab = static_cast<std::size_t>(
            std::llround(static_cast<double>(members.size()) * spec.labeled_fraction_of_known));
        for (std::size_t t = 0; t < n_lab && t < members.size(); ++t)
            labeled_flag[members[t]] = 1;
    }

    std::vector<std::size_t> lab_idx, unl_idx;
    for (std::size_t i = 0; i < set.size(); ++i)
        (labeled_flag[i] ? lab_idx : unl_idx).push_back(i);
    if (lab_idx.empty() || unl_idx.empty())
        throw std::invalid_argument("gcd_split: a side of the split is empty");

    GcdSplit out{take_rows(set, lab_idx), take_rows(set, unl_idx)};
    for (std::size_t i = 0; i < out.labeled.size(); ++i)
        out.labeled.known_mask[i] = out.labeled.y[i] < static_cast<int>(n_known) ? 1 : 0;
    for (std::size_t i = 0; i < out.unlabeled.size(); ++i)
        out.unlabeled.known_mask[i] = out.unlabeled.y[i] < static_cast<int>(n_known) ? 1 : 0;
    return out;
}

AllShiftSplit allshift_split(const SynthClassSet& set, const SplitSpec& spec,
                             std::uint64_t seed) {
    std::vector<std::size_t> seen_idx, test_idx;
    for (std::size_t i = 0; i < set.size(); ++i)
        (set.domain[i] == static_cast<int>(spec.unseen_domain_index) ? test_idx : seen_idx)
            .push_back(i);
    if (test_idx.empty()) throw std::invalid_argument("allshift_split: unseen domain is empty");
    if (seen_idx.empty()) throw std::invalid_argument("allshift_split: no seen-domain rows");

    const SynthClassSet seen = take_rows(set, seen_idx);
    GcdSplit inner = gcd_split(seen, spec, seed);

    AllShiftSplit out;
    out.train_labeled = std::move(inner.labeled);
    out.train_unlabeled = std::move(inner.unlabeled);
    out.test = take_rows(set, test_idx);
    int maxy = 0;
    for (int y : set.y) maxy = std::max(maxy, y);
    const std::size_t K = static_cast<std::size_t>(maxy) + 1;
    const std::size_t n_known =
        static_cast<std::size_t>(std::floor(static_cast<double>(K) * spec.known_class_fraction));
    for (std::size_t i = 0; i < out.test.size(); ++i)
        out.test.known_mask[i] = out.test.y[i] < static_cast<int>(n_known) ? 1 : 0;
    return out;
}

Prop1Instance prop1_instance(std::size_t m_support, std::size_t m_spurious, std::size_t B,
                             std::uint64_t seed) {
    if (m_support < 1 || m_spurious < 1 || B < 1)
        throw std::invalid_argument("prop1_instance: counts must be >= 1");
    Rng rng(seed);
    Prop1Instance inst;

    inst.w_support.resize(m_support);
    double nrm = 0.0;
    for (double& w : inst.w_support) {
        w = rng.normal();
        nrm += w * w;
    }
    nrm = std::sqrt(nrm);
    for (double& w : inst.w_support) w /= nrm;

    // Each spurious dim is a sign-flipped duplicate of the label-relevant
    // support projection: redundant noisy copies of exactly the signal the
    // labels depend on, which a min-norm CE + L2 fit prefers to average over
    // instead of reading the support dims directly.
    inst.mix = Matrix(m_spurious, m_support);
    for (std::size_t i = 0; i < m_spurious; ++i) {
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        for (std::size_t j = 0; j < m_support; ++j) inst.mix(i, j) = sign * inst.w_support[j];
    }

    inst.support_dims.resize(m_support);
    for (std::size_t j = 0; j < m_support; ++j) inst.support_dims[j] = j;

    const double noise_scale = std::sqrt(1.0 - inst.rho * inst.rho);
    auto draw_set = [&](Matrix& Z, std::vector<int>& Y, bool seen) {
        Z = Matrix(B, m_support + m_spurious);
        Y.resize(B);
        std::vector<double> s(m_support);
        for (std::size_t b = 0; b < B; ++b) {
            double proj = 0.0;
            for (int tries = 0; tries < 10000; ++tries) {
                proj = 0.0;
                for (std::size_t j = 0; j < m_support; ++j) {
                    s[j] = rng.normal();
                    proj += inst.w_support[j] * s[j];
                }
                if (std::abs(proj) >= inst.margin) break;
            }
            Y[b] = proj > 0.0 ? 1 : 0;
            for (std::size_t j = 0; j < m_support; ++j) Z(b, j) = s[j];
            for (std::size_t i = 0; i < m_spurious; ++i) {
                const double noise = rng.normal();
                if (seen) {
                    double mixed = 0.0;
                    for (std::size_t j = 0; j < m_support; ++j) mixed += inst.mix(i, j) * s[j];
                    Z(b, m_support + i) = inst.rho * mixed + noise_scale * noise;
                } else {
                    Z(b, m_support + i) = noise;
                }
            }
        }
    };
    draw_set(inst.Zs, inst.Ys, true);
    draw_set(inst.Zu, inst.Yu, false);
    return inst;
}

void write_synth_csv(const SynthClassSet& set, const std::vector<char>& labeled_mask,
                     const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_synth_csv: cannot open " + path);
    for (std::size_t c = 0; c < set.X.cols; ++c) out << "x" << c << ",";
    out << "y,domain,known,labeled\n";
    char buf[32];
    for (std::size_t r = 0; r < set.size(); ++r) {
        for (std::size_t c = 0; c < set.X.cols; ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", set.X(r, c));
            out << buf << ",";
        }
        out << set.y[r] << "," << set.domain[r] << "," << int(set.known_mask[r]) << ","
            << (labeled_mask.empty() ? 0 : int(labeled_mask[r])) << "\n";
    }
}

}  // namespace lreg
