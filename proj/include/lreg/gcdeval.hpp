#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lreg/matrix.hpp"

namespace lreg {

struct Assignment {
    std::vector<std::size_t> perm;  // row i -> column perm[i]
    double total_cost = 0.0;
};

// Minimum-cost perfect matching on a square cost matrix, O(n^3) potentials
// method. Ties resolve to the lowest column index scanned first.
Assignment hungarian(const Matrix& cost);

struct GcdReport {
    double acc_all = 0.0;
    double acc_known = 0.0;
    double acc_unknown = 0.0;
    std::size_t n_all = 0, n_known = 0, n_unknown = 0;
    std::size_t matched_all = 0, matched_known = 0, matched_unknown = 0;
    std::string csv_row(const std::string& run_id, std::uint64_t seed,
                        const std::string& setting) const;
};

// One Hungarian mapping computed on the overlap matrix over all samples, then
// accuracy restricted to the known / unknown subsets under that single mapping.
GcdReport gcd_accuracy(const std::vector<int>& pred_ids, const std::vector<int>& gt_ids,
                       const std::vector<char>& known_mask);

// Lloyd's algorithm with k-means++ seeding; empty clusters re-seed to the
// farthest point from its centroid assignment.
std::vector<int> kmeans(const Matrix& X, std::size_t k, std::uint64_t seed,
                        std::size_t max_iter = 100);

}  // namespace lreg
