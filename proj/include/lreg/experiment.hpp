#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace lreg {

// Invalid or unknown configuration; the CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

enum class ExperimentKind { Toy, Mdg, Gcd, AllShift, Prop1, Diag };

std::string kind_name(ExperimentKind kind);

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::Toy;
    std::vector<std::uint64_t> seeds{0, 1, 2};
    std::vector<double> alphas;  // empty -> per-kind default (effective_alphas)
    std::vector<std::string> variants;  // kind-dependent default
    std::string out = "out";
    std::size_t jobs = 1;

    // data
    std::size_t n_train = 2048;       // toy
    double box_lo = -0.5;             // toy
    double box_hi = 0.5;              // toy
    std::size_t grid = 101;           // toy
    std::size_t n_holdout = 512;      // toy
    std::size_t K = 4;                // mdg/gcd/allshift
    std::size_t domains = 4;          // mdg/allshift
    std::size_t m_inf = 0;            // 0 -> K
    std::size_t m_spur = 8;
    std::size_t n_per_domain = 256;
    double rho_seen = 0.95;
    // Per-domain sign flips of the spurious class pattern. On by default: with
    // a pattern shared by every seen domain, nothing in the training data
    // distinguishes spurious dims from informative ones, so no regularizer
    // could prefer the latter; flips give the spurious dims the cross-domain
    // inconsistency that the shift settings are about.
    bool domain_flips = true;
    double known_fraction = 0.5;      // gcd/allshift
    double labeled_fraction = 0.5;    // gcd/allshift
    std::size_t m_support = 4;        // prop1
    std::size_t m_spurious = 8;       // prop1
    std::size_t n_samples = 1000;     // prop1, per set (seen and unseen)
    std::uint64_t instance_seed = 0;  // prop1: fixed data draw; sweep seeds vary the fit

    // trainer
    std::size_t steps = 0;  // 0 -> kind default
    double lr = 1e-3;
    std::size_t batch = 64;
    std::string optimizer = "adam";
    std::vector<std::size_t> hidden;  // kind default when empty
    std::size_t tap = 0;              // 0 -> last hidden layer
    double infomax_weight = 0.5;
    std::string lreg_domain_mode = "pooled";
    std::string lreg_on = "probs";
    double l1_weight = 0.0;  // secondary strengths for combined variants
    // Default decay matches the strength the pure-L2 arm's holdout selection
    // picks on the regression task, so combined variants ride the same
    // baseline decay instead of a separately tuned one.
    double l2_weight = 1e-3;
    double ortho_weight = 1e-2;
    double prop1_lr = 0.01;
    std::size_t prop1_steps = 3000;
    double prop1_l2 = 0.01;

    // diag
    std::string checkpoint;
    double tau = 2.0;
    double support_threshold = 0.5;

    std::size_t effective_steps() const;
    std::vector<std::size_t> effective_hidden() const;
    std::vector<std::string> effective_variants() const;
    std::vector<double> effective_alphas() const;

    // canonical sorted key = value listing; re-parses to an identical config
    std::string echo() const;
    void validate() const;
};

ExperimentConfig parse_config(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text, const std::string& origin);

std::uint64_t fnv1a64(const std::string& text);

struct RunRecord {
    std::string run_id;
    std::string kind;
    std::uint64_t seed = 0;
    std::string variant;
    double alpha = 0.0;
    std::string metric;
    double value = 0.0;
};

struct RunResult {
    std::vector<RunRecord> rows;
    std::string run_dir;  // <out>/<kind>/<hash>
    std::uint64_t config_hash = 0;
};

RunResult run_experiment(const ExperimentConfig& config);

// mean and median per (variant, alpha, metric) across rows in file order
struct SummaryRow {
    std::string kind, variant, metric;
    double alpha = 0.0;
    std::string stat;  // mean | median
    double value = 0.0;
};

std::vector<SummaryRow> summarize(const std::vector<RunRecord>& rows);

std::string format_double(double v);  // %.17g, round-trips

std::vector<RunRecord> read_runs_csv(const std::string& path);
std::string summary_csv_text(const std::vector<SummaryRow>& rows);

}  // namespace lreg
