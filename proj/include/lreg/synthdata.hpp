#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lreg/matrix.hpp"

namespace lreg {

struct ToySet {
    Matrix inputs;                 // n x 2, coordinates in [-1,1]^2
    std::vector<double> targets;   // toy_oracle at each row
    std::vector<char> region_mask; // inside the training box
};

struct ToyBox {
    double lo = -0.5;
    double hi = 0.5;
};

double toy_oracle(double x1, double x2);

struct ToyData {
    ToySet train;
    ToySet eval_grid;
};

ToyData toy_dataset(std::size_t n_train, ToyBox box, std::size_t grid_resolution,
                    std::uint64_t seed);

struct SynthClassSet {
    Matrix X;                  // n x (m_inf + m_spur)
    std::vector<int> y;        // ground-truth class in [0, K)
    std::vector<int> domain;   // domain id in [0, n_domains)
    std::vector<char> known_mask;
    std::size_t size() const { return X.rows; }
};

struct MdgParams {
    std::size_t K = 4;
    std::size_t n_domains = 4;
    std::size_t m_inf = 4;
    std::size_t m_spur = 8;
    std::size_t n_per_domain = 256;  // per domain, balanced over classes (+-1)
    double rho_seen = 0.95;
    std::size_t unseen_domain = 3;   // spurious dims are pure noise here
    bool domain_sign_flips = false;  // per-domain flips of the spurious class pattern
};

// Informative dims: class-conditional means 3*e_y (pairwise distance >= 3), unit
// noise, shared across domains. Spurious dims: rho*s_y + sqrt(1-rho^2)*noise in
// seen domains with a class sign pattern s_y; pure unit noise in the unseen domain.
SynthClassSet mdg_dataset(const MdgParams& params, std::uint64_t seed);

struct SplitSpec {
    double known_class_fraction = 0.5;
    double labeled_fraction_of_known = 0.5;
    std::size_t unseen_domain_index = 0;
};

struct GcdSplit {
    SynthClassSet labeled;
    SynthClassSet unlabeled;
};

// Lowest floor(K*fraction) classes are known; a per-class fraction of known-class
// samples is labeled, everything else (rest of known + all unknown) is unlabeled.
GcdSplit gcd_split(const SynthClassSet& set, const SplitSpec& spec, std::uint64_t seed);

struct AllShiftSplit {
    SynthClassSet train_labeled;
    SynthClassSet train_unlabeled;
    SynthClassSet test;  // every sample of the unseen domain
};

AllShiftSplit allshift_split(const SynthClassSet& set, const SplitSpec& spec,
                             std::uint64_t seed);

struct Prop1Instance {
    Matrix Zs;               // seen features, B x (m_support + m_spurious)
    std::vector<int> Ys;     // binary labels
    Matrix Zu;               // unseen features
    std::vector<int> Yu;
    std::vector<std::size_t> support_dims;  // the first m_support indices
    std::vector<double> w_support;          // unit vector defining y on support dims
    Matrix mix;              // m_spurious x m_support map from supports to seen spurious dims
    double rho = 0.95;
    double margin = 0.3;
};

// Labels are a margin-separated linear threshold of the support dims. Seen-set
// spurious dims are sign-flipped duplicates of the support projection,
// rho * (+-w_support . s) + sqrt(1-rho^2) * noise — redundant noisy copies of
// exactly the label-relevant signal, which a min-norm CE + L2 fit prefers to
// average over instead of reading the support dims; unseen-set spurious dims
// are pure noise.
Prop1Instance prop1_instance(std::size_t m_support, std::size_t m_spurious, std::size_t B,
                             std::uint64_t seed);

// CSV with header x0..xd,y,domain,known,labeled; labeled_mask may be empty (all 0).
void write_synth_csv(const SynthClassSet& set, const std::vector<char>& labeled_mask,
                     const std::string& path);

}  // namespace lreg
