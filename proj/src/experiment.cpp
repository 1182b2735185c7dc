#include "lreg/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "lreg/diagnostics.hpp"
#include "lreg/gcdeval.hpp"
#include "lreg/network.hpp"
#include "lreg/synthdata.hpp"

namespace lreg {

namespace {

constexpr unsigned kToy = 1, kMdg = 2, kGcd = 4, kAll = 8, kProp1 = 16, kDiag = 32;
constexpr unsigned kEvery = 63;
constexpr unsigned kNet = kToy | kMdg | kGcd | kAll;

unsigned kind_bit(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::Toy: return kToy;
        case ExperimentKind::Mdg: return kMdg;
        case ExperimentKind::Gcd: return kGcd;
        case ExperimentKind::AllShift: return kAll;
        case ExperimentKind::Prop1: return kProp1;
        case ExperimentKind::Diag: return kDiag;
    }
    return 0;
}

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

double parse_double(const std::string& s) {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("not a number: " + s);
    return v;
}

std::uint64_t parse_u64(const std::string& s) {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("not an integer: " + s);
    return v;
}

bool parse_bool(const std::string& s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw std::invalid_argument("not a bool: " + s);
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

template <class T, class F>
std::string join(const std::vector<T>& v, F fmt) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += fmt(v[i]);
    }
    return out;
}

struct KeyHandler {
    const char* key;
    unsigned kinds;
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

const std::vector<KeyHandler>& key_handlers() {
    static const std::vector<KeyHandler> handlers = {
        {"seeds", kEvery,
         [](ExperimentConfig& c, const std::string& v) {
             c.seeds.clear();
             for (const auto& t : split(v, ',')) c.seeds.push_back(parse_u64(t));
         },
         [](const ExperimentConfig& c) {
             return join(c.seeds, [](std::uint64_t s) { return std::to_string(s); });
         }},
        {"alphas", kEvery & ~kDiag,
         [](ExperimentConfig& c, const std::string& v) {
             c.alphas.clear();
             for (const auto& t : split(v, ',')) c.alphas.push_back(parse_double(t));
         },
         [](const ExperimentConfig& c) {
             return join(c.effective_alphas(), [](double a) { return format_double(a); });
         }},
        {"variants", kEvery,
         [](ExperimentConfig& c, const std::string& v) { c.variants = split(v, ','); },
         [](const ExperimentConfig& c) {
             return join(c.effective_variants(), [](const std::string& s) { return s; });
         }},
        {"out", kEvery, [](ExperimentConfig& c, const std::string& v) { c.out = v; },
         [](const ExperimentConfig& c) { return c.out; }},
        {"jobs", kEvery,
         [](ExperimentConfig& c, const std::string& v) { c.jobs = parse_u64(v); },
         [](const ExperimentConfig& c) { return std::to_string(c.jobs); }},

        {"data.n_train", kToy,
         [](ExperimentConfig& c, const std::string& v) { c.n_train = parse_u64(v); },
         [](const ExperimentConfig& c) { return std::to_string(c.n_train); }},
        {"data.box_lo", kToy,
         [](ExperimentConfig& c, const std::string& v) { c.box_lo = parse_double(v); },
         [](const ExperimentConfig& c) { return format_double(c.box_lo); }},
        {"data.box_hi", kToy,
         [](ExperimentConfig& c, const std::string& v) { c.box_hi = parse_double(v); },
         [](const ExperimentConfig& c) { return format_double(c.box_hi); }},
        {"data.grid", kToy,
         [](ExperimentConfig& c, const std::string& v) { c.grid = parse_u64(v); },
         [](const ExperimentConfig& c) { return std::to_string(c.grid); }},
        {"data.n_holdout", kToy,
         [](ExperimentConfig& c, const std::string& v) { c.n_holdout = parse_u64(v); },
         [](const ExperimentConfig& c) { return std::to_string(c.n_holdout); }},
        {"data.K", kMdg | kGcd | kAll | kDiag,
         [](ExperimentConfig& c, const std::string& v) { c.K = parse_u64(v); },
         [](const ExperimentConfig& c) { return std::to_string(c.K); }},
        {"data.domains", kMdg | kAll | kDiag,
         [](ExperimentConfig& c, const std::string& v) { c.domains = parse_u64(v); },
         [](const ExperimentConfig& c) { return std::to_string(c.domains); }},
        {"data.m_inf", kMdg | kGcd | kAll | kDiag,
         [](ExperimentConfig& c, const std::string& v) { c.m_inf = parse_u64(v); },
         [](const ExperimentConfig& c) { return std::to_string(c.m_inf); }},
        {"data.m_spur", kMdg | kGcd | kAll | kDiag,
         [](ExperimentConfig& c, const std::string& v) { c.m_spur = parse_u64(v); },
         [](const ExperimentConfig& c) { return std::to_string(c.m_spur); }},
        {"data.n_per_domain", kMdg | kGcd | kAll | kDiag,
         [](ExperimentConfig& c, const std::string& v) { c.n_per_domain = parse_u64(v); },
         [](const ExperimentConfig& c) { return std::to_string(c.n_per_domain); }},
        {"data.rho_seen", kMdg | kGcd | kAll | kDiag,
         [](ExperimentConfig& c, const std::string& v) { c.rho_seen = parse_double(v); },
         [](const ExperimentConfig& c) { return format_double(c.rho_seen); }},
        {"data.domain_flips", kMdg | kAll | kDiag,
         [](ExperimentConfig& c, const std::string& v) { c.domain_flips = parse_bool(v); },
         [](const ExperimentConfig& c) { return bool_str(c.domain_flips); }},
        {"data.known_fraction", kGcd | kAll,
         [](ExperimentConfig& c, const std::string& v) { c.known_fraction = parse_double(v); },
         [](const ExperimentConfig& c) { return format_double(c.known_fraction); }},
        {"data.labeled_fraction", kGcd | kAll,
         [](ExperimentConfig& c, const std::string& v) { c.labeled_fraction = parse_double(v); },
         [](const ExperimentConfig& c) { return format_double(c.labeled_fraction); }},
        {"data.m_support", kProp1,
         [](ExperimentConfig& c, const std::string& v) { c.m_support = parse_u64(v); },
         [](const ExperimentConfig& c) { return std::to_string(c.m_support); }},
        {"data.m_spurious", kProp1,
         [](ExperimentConfig& c, const std::string& v) { c.m_spurious = parse_u64(v); },
         [](const ExperimentConfig& c) { return std::to_string(c.m_spurious); }},
        {"data.n_samples", kProp1,
         [](ExperimentConfig& c, const std::string& v) { c.n_samples = parse_u64(v); },
         [](const ExperimentConfig& c) { return std::to_string(c.n_samples); }},
        {"data.instance_seed", kProp1,
         [](ExperimentConfig& c, const std::string& v) { c.instance_seed = parse_u64(v); },
         [](const ExperimentConfig& c) { return std::to_string(c.instance_seed); }},

        {"trainer.steps", kNet,
         [](ExperimentConfig& c, const std::string& v) { c.steps = parse_u64(v); },
         [](const ExperimentConfig& c) { return std::to_string(c.effective_steps()); }},
        {"trainer.lr", kNet,
         [](ExperimentConfig& c, const std::string& v) { c.lr = parse_double(v); },
         [](const ExperimentConfig& c) { return format_double(c.lr); }},
        {"trainer.batch", kNet,
         [](ExperimentConfig& c, const std::string& v) { c.batch = parse_u64(v); },
         [](const ExperimentConfig& c) { return std::to_string(c.batch); }},
        {"trainer.optimizer", kNet,
         [](ExperimentConfig& c, const std::string& v) { c.optimizer = v; },
         [](const ExperimentConfig& c) { return c.optimizer; }},
        {"trainer.hidden", kNet,
         [](ExperimentConfig& c, const std::string& v) {
             c.hidden.clear();
             for (const auto& t : split(v, ',')) c.hidden.push_back(parse_u64(t));
         },
         [](const ExperimentConfig& c) {
             return join(c.effective_hidden(),
                         [](std::size_t w) { return std::to_string(w); });
         }},
        {"trainer.tap", kNet,
         [](ExperimentConfig& c, const std::string& v) { c.tap = parse_u64(v); },
         [](const ExperimentConfig& c) { return std::to_string(c.tap); }},
        {"trainer.infomax_weight", kGcd | kAll,
         [](ExperimentConfig& c, const std::string& v) { c.infomax_weight = parse_double(v); },
         [](const ExperimentConfig& c) { return format_double(c.infomax_weight); }},
        {"trainer.lreg_domain_mode", kMdg | kAll,
         [](ExperimentConfig& c, const std::string& v) { c.lreg_domain_mode = v; },
         [](const ExperimentConfig& c) { return c.lreg_domain_mode; }},
        {"trainer.lreg_on", kNet,
         [](ExperimentConfig& c, const std::string& v) { c.lreg_on = v; },
         [](const ExperimentConfig& c) { return c.lreg_on; }},
        {"trainer.l1_weight", kNet,
         [](ExperimentConfig& c, const std::string& v) { c.l1_weight = parse_double(v); },
         [](const ExperimentConfig& c) { return format_double(c.l1_weight); }},
        {"trainer.l2_weight", kNet,
         [](ExperimentConfig& c, const std::string& v) { c.l2_weight = parse_double(v); },
         [](const ExperimentConfig& c) { return format_double(c.l2_weight); }},
        {"trainer.ortho_weight", kNet,
         [](ExperimentConfig& c, const std::string& v) { c.ortho_weight = parse_double(v); },
         [](const ExperimentConfig& c) { return format_double(c.ortho_weight); }},
        {"prop1.lr", kProp1,
         [](ExperimentConfig& c, const std::string& v) { c.prop1_lr = parse_double(v); },
         [](const ExperimentConfig& c) { return format_double(c.prop1_lr); }},
        {"prop1.steps", kProp1,
         [](ExperimentConfig& c, const std::string& v) { c.prop1_steps = parse_u64(v); },
         [](const ExperimentConfig& c) { return std::to_string(c.prop1_steps); }},
        {"prop1.l2", kProp1,
         [](ExperimentConfig& c, const std::string& v) { c.prop1_l2 = parse_double(v); },
         [](const ExperimentConfig& c) { return format_double(c.prop1_l2); }},

        {"diag.checkpoint", kDiag,
         [](ExperimentConfig& c, const std::string& v) { c.checkpoint = v; },
         [](const ExperimentConfig& c) { return c.checkpoint; }},
        {"diag.tau", kDiag,
         [](ExperimentConfig& c, const std::string& v) { c.tau = parse_double(v); },
         [](const ExperimentConfig& c) { return format_double(c.tau); }},
        {"diag.support_threshold", kDiag,
         [](ExperimentConfig& c, const std::string& v) {
             c.support_threshold = parse_double(v);
         },
         [](const ExperimentConfig& c) { return format_double(c.support_threshold); }},
    };
    return handlers;
}

const std::set<std::string> kVariantTokens = {"none", "l1",     "l2",     "ortho",
                                              "lreg", "kmeans", "paired", "ckpt"};

std::uint64_t splitmix_once(std::uint64_t x) {
    std::uint64_t z = x + 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    return splitmix_once(seed ^ (salt * 0xBF58476D1CE4E5B9ULL));
}

constexpr std::uint64_t kSaltData = 0xA0, kSaltSplit = 0xB1, kSaltInit = 0xC2,
                        kSaltBatch = 0xD3, kSaltHoldout = 0xE4, kSaltKmeans = 0xF5;

std::string alpha_tag(double a) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", a);
    return buf;
}

}  // namespace

std::string kind_name(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::Toy: return "toy";
        case ExperimentKind::Mdg: return "mdg";
        case ExperimentKind::Gcd: return "gcd";
        case ExperimentKind::AllShift: return "allshift";
        case ExperimentKind::Prop1: return "prop1";
        case ExperimentKind::Diag: return "diag";
    }
    return "?";
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::uint64_t fnv1a64(const std::string& text) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::size_t ExperimentConfig::effective_steps() const {
    if (steps) return steps;
    switch (kind) {
        case ExperimentKind::Toy: return 2000;
        case ExperimentKind::Mdg: return 1500;
        case ExperimentKind::Gcd: return 4000;
        case ExperimentKind::AllShift: return 4000;
        default: return 0;
    }
}

std::vector<std::size_t> ExperimentConfig::effective_hidden() const {
    if (!hidden.empty()) return hidden;
    switch (kind) {
        case ExperimentKind::Toy: return {110, 110, 110, 110, 110};
        case ExperimentKind::Mdg: return {32, 32};
        case ExperimentKind::Gcd: return {64, 32};
        case ExperimentKind::AllShift: return {64, 32};
        default: return {};
    }
}

std::vector<double> ExperimentConfig::effective_alphas() const {
    if (!alphas.empty()) return alphas;
    // The paired linear fits need a strong weight to counter the shortcut
    // preference of the CE + L2 objective; the network sweeps scan decades.
    if (kind == ExperimentKind::Prop1) return {0.5};
    return {1e-3, 1e-2, 1e-1};
}

std::vector<std::string> ExperimentConfig::effective_variants() const {
    if (!variants.empty()) return variants;
    switch (kind) {
        // The regression task keeps weight decay in every regularized arm:
        // the mutual-information term shapes which pattern the net fits but
        // puts no pressure on weight magnitudes, which dominate the far-field
        // error, so it is studied as an addition to the decayed baseline.
        case ExperimentKind::Toy: return {"none", "l2", "lreg+l2"};
        case ExperimentKind::Mdg: return {"none", "lreg"};
        case ExperimentKind::Gcd: return {"none", "lreg", "kmeans"};
        case ExperimentKind::AllShift: return {"none", "lreg"};
        case ExperimentKind::Prop1: return {"paired"};
        case ExperimentKind::Diag: return {"ckpt"};
    }
    return {};
}

void ExperimentConfig::validate() const {
    if (seeds.empty()) throw ConfigError("config: seeds must be non-empty");
    for (double a : effective_alphas())
        if (a < 0.0 || !std::isfinite(a)) throw ConfigError("config: alphas must be >= 0");
    if (jobs < 1) throw ConfigError("config: jobs must be >= 1");
    if (optimizer != "adam" && optimizer != "sgd")
        throw ConfigError("config: trainer.optimizer must be adam or sgd");
    if (lreg_domain_mode != "pooled" && lreg_domain_mode != "perdomain")
        throw ConfigError("config: trainer.lreg_domain_mode must be pooled or perdomain");
    if (lreg_on != "probs" && lreg_on != "logits")
        throw ConfigError("config: trainer.lreg_on must be probs or logits");
    if (kind == ExperimentKind::Toy && !(box_lo < box_hi))
        throw ConfigError("config: data.box_lo must be < data.box_hi");
    if (kind == ExperimentKind::Diag && checkpoint.empty())
        throw ConfigError("config: diag.checkpoint is required");

    for (const std::string& variant : effective_variants()) {
        const std::vector<std::string> toks = split(variant, '+');
        for (const std::string& t : toks) {
            if (!kVariantTokens.count(t))
                throw ConfigError("config: unknown variant token '" + t + "'");
            if ((t == "none" || t == "kmeans" || t == "paired" || t == "ckpt") &&
                toks.size() > 1)
                throw ConfigError("config: variant '" + t + "' cannot be combined");
        }
        const std::string& head = toks.front();
        switch (kind) {
            case ExperimentKind::Toy:
            case ExperimentKind::Mdg:
                if (head == "kmeans" || head == "paired" || head == "ckpt")
                    throw ConfigError("config: variant '" + variant + "' not valid for kind " +
                                      kind_name(kind));
                break;
            case ExperimentKind::Gcd:
            case ExperimentKind::AllShift:
                if (head == "paired" || head == "ckpt")
                    throw ConfigError("config: variant '" + variant + "' not valid for kind " +
                                      kind_name(kind));
                break;
            case ExperimentKind::Prop1:
                if (variant != "paired")
                    throw ConfigError("config: prop1 supports only the 'paired' variant");
                break;
            case ExperimentKind::Diag:
                if (variant != "ckpt")
                    throw ConfigError("config: diag supports only the 'ckpt' variant");
                break;
        }
    }
}

std::string ExperimentConfig::echo() const {
    std::vector<std::pair<std::string, std::string>> lines;
    lines.emplace_back("kind", kind_name(kind));
    const unsigned bit = kind_bit(kind);
    for (const KeyHandler& h : key_handlers())
        if (h.kinds & bit) lines.emplace_back(h.key, h.get(*this));
    std::sort(lines.begin(), lines.end());
    std::string out;
    for (const auto& [k, v] : lines) out += k + " = " + v + "\n";
    return out;
}

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
    std::vector<std::pair<std::string, std::string>> entries;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) +
                              ": expected 'key = value', got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(origin + ": empty key");
        entries.emplace_back(key, value);
    }

    ExperimentConfig cfg;
    bool kind_seen = false;
    for (const auto& [k, v] : entries) {
        if (k != "kind") continue;
        if (kind_seen) throw ConfigError("config: duplicate key 'kind'");
        kind_seen = true;
        if (v == "toy")
            cfg.kind = ExperimentKind::Toy;
        else if (v == "mdg")
            cfg.kind = ExperimentKind::Mdg;
        else if (v == "gcd")
            cfg.kind = ExperimentKind::Gcd;
        else if (v == "allshift")
            cfg.kind = ExperimentKind::AllShift;
        else if (v == "prop1")
            cfg.kind = ExperimentKind::Prop1;
        else if (v == "diag")
            cfg.kind = ExperimentKind::Diag;
        else
            throw ConfigError("config: unknown kind '" + v + "'");
    }
    if (!kind_seen) throw ConfigError("config: missing required key 'kind'");

    // kind-specific sentinel defaults
    switch (cfg.kind) {
        case ExperimentKind::Gcd:
            cfg.K = 10;
            cfg.domains = 2;
            cfg.m_spur = 4;
            cfg.n_per_domain = 1000;
            break;
        case ExperimentKind::AllShift:
            cfg.K = 6;
            cfg.domains = 4;
            cfg.m_spur = 8;
            cfg.n_per_domain = 240;
            break;
        default: break;
    }

    const unsigned bit = kind_bit(cfg.kind);
    std::set<std::string> seen;
    for (const auto& [k, v] : entries) {
        if (k == "kind") continue;
        if (!seen.insert(k).second) throw ConfigError("config: duplicate key '" + k + "'");
        const KeyHandler* found = nullptr;
        for (const KeyHandler& h : key_handlers())
            if (k == h.key) {
                found = &h;
                break;
            }
        if (!found) throw ConfigError("config: unknown key '" + k + "'");
        if (!(found->kinds & bit))
            throw ConfigError("config: key '" + k + "' is not valid for kind " +
                              kind_name(cfg.kind));
        try {
            found->set(cfg, v);
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError("config: bad value for key '" + k + "': " + e.what());
        }
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path);
}

// ---------------------------------------------------------------------------
// runners

namespace {

struct CellOutput {
    std::vector<RunRecord> rows;
    std::string grid_name;  // grids/<name>.csv when non-empty
    std::string grid_text;
    std::string supports_key;
    std::vector<std::vector<std::size_t>> supports;  // per class
    double wall_seconds = 0.0;
    std::string error;
};

TrainConfig base_train_config(const ExperimentConfig& cfg, MainLoss loss) {
    TrainConfig t;
    t.main_loss = loss;
    t.optimizer = cfg.optimizer == "sgd" ? Optimizer::SGD : Optimizer::Adam;
    t.lr = cfg.lr;
    t.batch_size = cfg.batch;
    t.steps = cfg.effective_steps();
    t.infomax_weight = 0.0;
    t.lreg_domain_mode = cfg.lreg_domain_mode == "perdomain" ? LRegDomainMode::PerDomain
                                                             : LRegDomainMode::Pooled;
    t.lreg_on_probs = cfg.lreg_on == "probs";
    return t;
}

// alpha drives the variant's first regularizer token; later tokens use the
// configured secondary weights.
void apply_variant(TrainConfig& t, const ExperimentConfig& cfg, const std::string& variant,
                   double alpha) {
    const std::vector<std::string> toks = split(variant, '+');
    for (std::size_t i = 0; i < toks.size(); ++i) {
        const std::string& tok = toks[i];
        const bool primary = i == 0;
        if (tok == "none" || tok == "kmeans") continue;
        if (tok == "lreg") {
            t.alpha = primary ? alpha : cfg.effective_alphas().front();
        } else if (tok == "l1") {
            t.extra_regs.emplace_back(RegKind::L1, primary ? alpha : cfg.l1_weight);
        } else if (tok == "l2") {
            t.extra_regs.emplace_back(RegKind::L2, primary ? alpha : cfg.l2_weight);
        } else if (tok == "ortho") {
            t.extra_regs.emplace_back(RegKind::Ortho, primary ? alpha : cfg.ortho_weight);
        }
    }
}

MlpSpec make_spec(const ExperimentConfig& cfg, std::size_t d_in, std::size_t d_out, Head head) {
    std::vector<std::size_t> widths{d_in};
    for (std::size_t w : cfg.effective_hidden()) widths.push_back(w);
    widths.push_back(d_out);
    MlpSpec spec = make_mlp_spec(widths, head);
    if (cfg.tap) spec.tap_layer = cfg.tap;
    spec.validate();
    return spec;
}

MlpModel train_model(const Matrix& X, const std::vector<int>& y, const std::vector<int>& domain,
                     const Matrix& target, const MlpSpec& spec, const TrainConfig& tcfg,
                     std::uint64_t init_seed, std::uint64_t batch_seed) {
    MlpModel model = mlp_init(spec, init_seed);
    OptimizerState state = make_optimizer_state(model);
    Rng brng(batch_seed);
    const std::size_t n = X.rows;
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::size_t pos = n;  // force initial shuffle
    const std::size_t bsz = std::min(tcfg.batch_size, n);

    Batch batch;
    for (std::size_t step = 0; step < tcfg.steps; ++step) {
        if (pos + bsz > n) {
            brng.shuffle(order);
            pos = 0;
        }
        batch.X = Matrix(bsz, X.cols);
        batch.y.assign(bsz, -1);
        batch.domain.assign(bsz, 0);
        if (tcfg.main_loss == MainLoss::MSE) batch.target = Matrix(bsz, target.cols);
        for (std::size_t r = 0; r < bsz; ++r) {
            const std::size_t s = order[pos + r];
            std::copy(X.row_ptr(s), X.row_ptr(s) + X.cols, batch.X.row_ptr(r));
            if (!y.empty()) batch.y[r] = y[s];
            if (!domain.empty()) batch.domain[r] = domain[s];
            if (tcfg.main_loss == MainLoss::MSE)
                std::copy(target.row_ptr(s), target.row_ptr(s) + target.cols,
                          batch.target.row_ptr(r));
        }
        pos += bsz;
        train_step(model, batch, tcfg, state);
    }
    return model;
}

std::vector<int> argmax_rows(const Matrix& P) {
    std::vector<int> out(P.rows);
    for (std::size_t r = 0; r < P.rows; ++r) {
        const double* row = P.row_ptr(r);
        std::size_t best = 0;
        for (std::size_t c = 1; c < P.cols; ++c)
            if (row[c] > row[best]) best = c;
        out[r] = static_cast<int>(best);
    }
    return out;
}

double flat_weight_extremity(const MlpModel& model, double tau) {
    std::vector<double> flat;
    for (const Matrix& W : model.W)
        flat.insert(flat.end(), W.data.begin(), W.data.end());
    const std::size_t n = flat.size();  // read before the move; arg order is unspecified
    Matrix all(1, n, std::move(flat));
    return weight_extremity(all, tau);
}

std::string run_id_of(const ExperimentConfig& cfg, const std::string& variant, double alpha,
                      std::uint64_t seed, int dom = -1) {
    std::string id = kind_name(cfg.kind) + "-" + variant + "-a" + alpha_tag(alpha) + "-s" +
                     std::to_string(seed);
    if (dom >= 0) id += "-d" + std::to_string(dom);
    return id;
}

void push_row(CellOutput& out, const ExperimentConfig& cfg, const std::string& run_id,
              std::uint64_t seed, const std::string& variant, double alpha,
              const std::string& metric, double value) {
    out.rows.push_back(
        RunRecord{run_id, kind_name(cfg.kind), seed, variant, alpha, metric, value});
}

double masked_mse(const Matrix& pred, const std::vector<double>& targets,
                  const std::vector<char>& mask, bool want) {
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t r = 0; r < pred.rows; ++r) {
        if ((mask[r] != 0) != want) continue;
        const double d = pred(r, 0) - targets[r];
        s += d * d;
        ++n;
    }
    return n ? s / static_cast<double>(n) : 0.0;
}

CellOutput run_toy_cell(const ExperimentConfig& cfg, const std::string& variant, double alpha,
                        std::uint64_t seed, bool emit_grid) {
    CellOutput out;
    const ToyBox box{cfg.box_lo, cfg.box_hi};
    const ToyData data = toy_dataset(cfg.n_train, box, cfg.grid, mix_seed(seed, kSaltData));

    Rng hold_rng(mix_seed(seed, kSaltHoldout));
    Matrix hx(cfg.n_holdout, 2);
    std::vector<double> ht(cfg.n_holdout);
    for (std::size_t i = 0; i < cfg.n_holdout; ++i) {
        const double x1 = hold_rng.uniform(box.lo, box.hi);
        const double x2 = hold_rng.uniform(box.lo, box.hi);
        hx(i, 0) = x1;
        hx(i, 1) = x2;
        ht[i] = toy_oracle(x1, x2);
    }

    const MlpSpec spec = make_spec(cfg, 2, 1, Head::LinearRegressor);
    TrainConfig tcfg = base_train_config(cfg, MainLoss::MSE);
    apply_variant(tcfg, cfg, variant, alpha);
    tcfg.lreg_pairing = LRegPair::DeepFeatures;

    Matrix target(data.train.targets.size(), 1);
    for (std::size_t i = 0; i < data.train.targets.size(); ++i)
        target(i, 0) = data.train.targets[i];
    const MlpModel model = train_model(data.train.inputs, {}, {}, target, spec, tcfg,
                                       mix_seed(seed, kSaltInit), mix_seed(seed, kSaltBatch));

    const Matrix grid_pred = forward(model, data.eval_grid.inputs).logits;
    const Matrix hold_pred = forward(model, hx).logits;
    double hold_mse = 0.0;
    for (std::size_t i = 0; i < cfg.n_holdout; ++i) {
        const double d = hold_pred(i, 0) - ht[i];
        hold_mse += d * d;
    }
    hold_mse /= static_cast<double>(cfg.n_holdout);

    const std::string id = run_id_of(cfg, variant, alpha, seed);
    push_row(out, cfg, id, seed, variant, alpha, "mse_inside_holdout", hold_mse);
    push_row(out, cfg, id, seed, variant, alpha, "mse_inside_grid",
             masked_mse(grid_pred, data.eval_grid.targets, data.eval_grid.region_mask, true));
    push_row(out, cfg, id, seed, variant, alpha, "mse_outside_grid",
             masked_mse(grid_pred, data.eval_grid.targets, data.eval_grid.region_mask, false));

    if (emit_grid) {
        out.grid_name = variant + "_a" + alpha_tag(alpha) + "_s" + std::to_string(seed);
        std::string text = "x1,x2,f_star,f_pred,inside\n";
        for (std::size_t r = 0; r < grid_pred.rows; ++r) {
            text += format_double(data.eval_grid.inputs(r, 0)) + "," +
                    format_double(data.eval_grid.inputs(r, 1)) + "," +
                    format_double(data.eval_grid.targets[r]) + "," +
                    format_double(grid_pred(r, 0)) + "," +
                    std::to_string(int(data.eval_grid.region_mask[r])) + "\n";
        }
        out.grid_text = std::move(text);
    }
    return out;
}

MdgParams mdg_params_of(const ExperimentConfig& cfg, std::size_t unseen) {
    MdgParams p;
    p.K = cfg.K;
    p.n_domains = cfg.domains;
    p.m_inf = cfg.m_inf ? cfg.m_inf : cfg.K;
    p.m_spur = cfg.m_spur;
    p.n_per_domain = cfg.n_per_domain;
    p.rho_seen = cfg.rho_seen;
    p.unseen_domain = unseen;
    p.domain_sign_flips = cfg.domain_flips;
    return p;
}

std::vector<std::size_t> rows_where(const std::vector<int>& domain, int value, bool equal) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < domain.size(); ++i)
        if ((domain[i] == value) == equal) idx.push_back(i);
    return idx;
}

SynthClassSet select_rows(const SynthClassSet& set, const std::vector<std::size_t>& idx) {
    SynthClassSet out;
    out.X = Matrix(idx.size(), set.X.cols);
    out.y.resize(idx.size());
    out.domain.resize(idx.size());
    out.known_mask.resize(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
        std::copy(set.X.row_ptr(idx[r]), set.X.row_ptr(idx[r]) + set.X.cols, out.X.row_ptr(r));
        out.y[r] = set.y[idx[r]];
        out.domain[r] = set.domain[idx[r]];
        out.known_mask[r] = set.known_mask[idx[r]];
    }
    return out;
}

CellOutput run_mdg_cell(const ExperimentConfig& cfg, const std::string& variant, double alpha,
                        std::uint64_t seed, std::size_t unseen) {
    CellOutput out;
    const MdgParams params = mdg_params_of(cfg, unseen);
    const SynthClassSet set =
        mdg_dataset(params, mix_seed(seed, kSaltData + 17 * (unseen + 1)));
    const SynthClassSet train =
        select_rows(set, rows_where(set.domain, static_cast<int>(unseen), false));
    const SynthClassSet test =
        select_rows(set, rows_where(set.domain, static_cast<int>(unseen), true));

    const MlpSpec spec = make_spec(cfg, set.X.cols, cfg.K, Head::SoftmaxClassifier);
    TrainConfig tcfg = base_train_config(cfg, MainLoss::CE);
    apply_variant(tcfg, cfg, variant, alpha);

    const MlpModel model = train_model(train.X, train.y, train.domain, {}, spec, tcfg,
                                       mix_seed(seed, kSaltInit), mix_seed(seed, kSaltBatch));
    const Matrix probs = forward(model, test.X).probs;
    const std::string id = run_id_of(cfg, variant, alpha, seed, static_cast<int>(unseen));
    const std::string sfx = "_d" + std::to_string(unseen);
    push_row(out, cfg, id, seed, variant, alpha, "acc_unseen" + sfx, accuracy(probs, test.y));

    // First-layer weight mass split by input block: how much the network reads
    // the informative dims versus the domain-bound spurious dims.
    const Matrix& W1 = model.W[0];
    const std::size_t m_inf = params.m_inf;
    double inf_mass = 0.0, spur_mass = 0.0;
    for (std::size_t r = 0; r < W1.rows; ++r)
        for (std::size_t c = 0; c < W1.cols; ++c)
            (c < m_inf ? inf_mass : spur_mass) += std::abs(W1(r, c));
    inf_mass /= static_cast<double>(W1.rows * m_inf);
    if (params.m_spur > 0) spur_mass /= static_cast<double>(W1.rows * params.m_spur);
    push_row(out, cfg, id, seed, variant, alpha, "w1_inf_mass" + sfx, inf_mass);
    push_row(out, cfg, id, seed, variant, alpha, "w1_spur_mass" + sfx, spur_mass);
    return out;
}

CellOutput run_gcd_cell(const ExperimentConfig& cfg, const std::string& variant, double alpha,
                        std::uint64_t seed) {
    CellOutput out;
    const MdgParams params = mdg_params_of(cfg, cfg.domains - 1);
    const SynthClassSet full = mdg_dataset(params, mix_seed(seed, kSaltData));
    const SynthClassSet domain0 = select_rows(full, rows_where(full.domain, 0, true));
    SplitSpec sspec;
    sspec.known_class_fraction = cfg.known_fraction;
    sspec.labeled_fraction_of_known = cfg.labeled_fraction;
    const GcdSplit split = gcd_split(domain0, sspec, mix_seed(seed, kSaltSplit));
    const std::string id = run_id_of(cfg, variant, alpha, seed);

    if (variant == "kmeans") {
        const std::vector<int> pred =
            kmeans(split.unlabeled.X, cfg.K, mix_seed(seed, kSaltKmeans));
        const GcdReport rep = gcd_accuracy(pred, split.unlabeled.y, split.unlabeled.known_mask);
        push_row(out, cfg, id, seed, variant, alpha, "acc_all", rep.acc_all);
        push_row(out, cfg, id, seed, variant, alpha, "acc_known", rep.acc_known);
        push_row(out, cfg, id, seed, variant, alpha, "acc_unknown", rep.acc_unknown);
        return out;
    }

    const std::size_t n = split.labeled.size() + split.unlabeled.size();
    Matrix X(n, domain0.X.cols);
    std::vector<int> y(n, -1);
    for (std::size_t r = 0; r < split.labeled.size(); ++r) {
        std::copy(split.labeled.X.row_ptr(r), split.labeled.X.row_ptr(r) + X.cols, X.row_ptr(r));
        y[r] = split.labeled.y[r];
    }
    for (std::size_t r = 0; r < split.unlabeled.size(); ++r)
        std::copy(split.unlabeled.X.row_ptr(r), split.unlabeled.X.row_ptr(r) + X.cols,
                  X.row_ptr(split.labeled.size() + r));

    const MlpSpec spec = make_spec(cfg, X.cols, cfg.K, Head::SoftmaxClassifier);
    TrainConfig tcfg = base_train_config(cfg, MainLoss::CE);
    tcfg.infomax_weight = cfg.infomax_weight;
    apply_variant(tcfg, cfg, variant, alpha);

    const MlpModel model = train_model(X, y, {}, {}, spec, tcfg, mix_seed(seed, kSaltInit),
                                       mix_seed(seed, kSaltBatch));
    const ForwardPass fw = forward(model, split.unlabeled.X);
    const GcdReport rep =
        gcd_accuracy(argmax_rows(fw.probs), split.unlabeled.y, split.unlabeled.known_mask);
    push_row(out, cfg, id, seed, variant, alpha, "acc_all", rep.acc_all);
    push_row(out, cfg, id, seed, variant, alpha, "acc_known", rep.acc_known);
    push_row(out, cfg, id, seed, variant, alpha, "acc_unknown", rep.acc_unknown);

    const SupportSet sup = semantic_support(affinity(fw.Z, fw.probs), cfg.support_threshold);
    push_row(out, cfg, id, seed, variant, alpha, "diag_extremity",
             flat_weight_extremity(model, cfg.tau));
    push_row(out, cfg, id, seed, variant, alpha, "diag_support_size", sup.mean_size);
    push_row(out, cfg, id, seed, variant, alpha, "diag_jaccard", sup.mean_jaccard);
    push_row(out, cfg, id, seed, variant, alpha, "diag_balance", feature_balance(fw.Z));
    out.supports_key = id;
    out.supports = sup.dims_per_class;
    return out;
}

CellOutput run_allshift_cell(const ExperimentConfig& cfg, const std::string& variant,
                             double alpha, std::uint64_t seed, std::size_t unseen) {
    CellOutput out;
    const MdgParams params = mdg_params_of(cfg, unseen);
    const SynthClassSet full =
        mdg_dataset(params, mix_seed(seed, kSaltData + 17 * (unseen + 1)));
    SplitSpec sspec;
    sspec.known_class_fraction = cfg.known_fraction;
    sspec.labeled_fraction_of_known = cfg.labeled_fraction;
    sspec.unseen_domain_index = unseen;
    const AllShiftSplit split = allshift_split(full, sspec, mix_seed(seed, kSaltSplit));
    const std::string id = run_id_of(cfg, variant, alpha, seed, static_cast<int>(unseen));
    const std::string sfx = "_d" + std::to_string(unseen);

    if (variant == "kmeans") {
        const std::vector<int> pred = kmeans(split.test.X, cfg.K, mix_seed(seed, kSaltKmeans));
        const GcdReport rep = gcd_accuracy(pred, split.test.y, split.test.known_mask);
        push_row(out, cfg, id, seed, variant, alpha, "acc_all" + sfx, rep.acc_all);
        push_row(out, cfg, id, seed, variant, alpha, "acc_known" + sfx, rep.acc_known);
        push_row(out, cfg, id, seed, variant, alpha, "acc_unknown" + sfx, rep.acc_unknown);
        return out;
    }

    const std::size_t n = split.train_labeled.size() + split.train_unlabeled.size();
    Matrix X(n, full.X.cols);
    std::vector<int> y(n, -1);
    std::vector<int> dom(n, 0);
    for (std::size_t r = 0; r < split.train_labeled.size(); ++r) {
        std::copy(split.train_labeled.X.row_ptr(r), split.train_labeled.X.row_ptr(r) + X.cols,
                  X.row_ptr(r));
        y[r] = split.train_labeled.y[r];
        dom[r] = split.train_labeled.domain[r];
    }
    for (std::size_t r = 0; r < split.train_unlabeled.size(); ++r) {
        const std::size_t t = split.train_labeled.size() + r;
        std::copy(split.train_unlabeled.X.row_ptr(r), split.train_unlabeled.X.row_ptr(r) + X.cols,
                  X.row_ptr(t));
        dom[t] = split.train_unlabeled.domain[r];
    }

    const MlpSpec spec = make_spec(cfg, X.cols, cfg.K, Head::SoftmaxClassifier);
    TrainConfig tcfg = base_train_config(cfg, MainLoss::CE);
    tcfg.infomax_weight = cfg.infomax_weight;
    apply_variant(tcfg, cfg, variant, alpha);

    const MlpModel model = train_model(X, y, dom, {}, spec, tcfg, mix_seed(seed, kSaltInit),
                                       mix_seed(seed, kSaltBatch));
    const ForwardPass fw = forward(model, split.test.X);
    const GcdReport rep =
        gcd_accuracy(argmax_rows(fw.probs), split.test.y, split.test.known_mask);
    push_row(out, cfg, id, seed, variant, alpha, "acc_all" + sfx, rep.acc_all);
    push_row(out, cfg, id, seed, variant, alpha, "acc_known" + sfx, rep.acc_known);
    push_row(out, cfg, id, seed, variant, alpha, "acc_unknown" + sfx, rep.acc_unknown);

    const SupportSet sup = semantic_support(affinity(fw.Z, fw.probs), cfg.support_threshold);
    push_row(out, cfg, id, seed, variant, alpha, "diag_extremity" + sfx,
             flat_weight_extremity(model, cfg.tau));
    push_row(out, cfg, id, seed, variant, alpha, "diag_support_size" + sfx, sup.mean_size);
    push_row(out, cfg, id, seed, variant, alpha, "diag_jaccard" + sfx, sup.mean_jaccard);
    push_row(out, cfg, id, seed, variant, alpha, "diag_balance" + sfx, feature_balance(fw.Z));
    push_row(out, cfg, id, seed, variant, alpha, "diag_group_dist" + sfx,
             group_mean_distance(fw.Z, split.test.known_mask));
    out.supports_key = id;
    out.supports = sup.dims_per_class;
    return out;
}

CellOutput run_prop1_cell(const ExperimentConfig& cfg, double alpha, std::uint64_t seed) {
    CellOutput out;
    // The data draw is pinned (the comparison is on one canonical instance);
    // sweep seeds vary only the fit randomness (init and batch order).
    const Prop1Instance inst =
        prop1_instance(cfg.m_support, cfg.m_spurious, cfg.n_samples, cfg.instance_seed);
    LinearFitConfig fcfg;
    fcfg.alpha = alpha;
    fcfg.l2 = cfg.prop1_l2;
    fcfg.lr = cfg.prop1_lr;
    fcfg.steps = cfg.prop1_steps;
    fcfg.seed = mix_seed(seed, kSaltInit);
    const Prop1Record rec = prop1_check(inst.Zs, inst.Ys, inst.Zu, inst.Yu, inst.support_dims,
                                        inst.w_support, fcfg);
    const std::string id = run_id_of(cfg, "paired", alpha, seed);
    push_row(out, cfg, id, seed, "paired", alpha, "acc_seen_base", rec.acc_seen_base);
    push_row(out, cfg, id, seed, "paired", alpha, "acc_seen_lreg", rec.acc_seen_lreg);
    push_row(out, cfg, id, seed, "paired", alpha, "acc_unseen_base", rec.acc_unseen_base);
    push_row(out, cfg, id, seed, "paired", alpha, "acc_unseen_lreg", rec.acc_unseen_lreg);
    push_row(out, cfg, id, seed, "paired", alpha, "spur_mass_base", rec.spur_mass_base);
    push_row(out, cfg, id, seed, "paired", alpha, "spur_mass_lreg", rec.spur_mass_lreg);
    push_row(out, cfg, id, seed, "paired", alpha, "gap_base", rec.gap_base);
    push_row(out, cfg, id, seed, "paired", alpha, "gap_lreg", rec.gap_lreg);
    return out;
}

CellOutput run_diag_cell(const ExperimentConfig& cfg, std::uint64_t seed) {
    CellOutput out;
    const Checkpoint ck = load_checkpoint(cfg.checkpoint);
    const MdgParams params = mdg_params_of(cfg, cfg.domains - 1);
    const SynthClassSet set = mdg_dataset(params, mix_seed(seed, kSaltData));
    if (set.X.cols != ck.model.spec.layer_widths.front())
        throw ConfigError("diag: checkpoint input width " +
                          std::to_string(ck.model.spec.layer_widths.front()) +
                          " does not match dataset width " + std::to_string(set.X.cols));
    const ForwardPass fw = forward(ck.model, set.X);
    const SupportSet sup = semantic_support(affinity(fw.Z, fw.probs), cfg.support_threshold);
    const std::string id = run_id_of(cfg, "ckpt", 0.0, seed);
    push_row(out, cfg, id, seed, "ckpt", 0.0, "diag_extremity",
             flat_weight_extremity(ck.model, cfg.tau));
    push_row(out, cfg, id, seed, "ckpt", 0.0, "diag_support_size", sup.mean_size);
    push_row(out, cfg, id, seed, "ckpt", 0.0, "diag_jaccard", sup.mean_jaccard);
    push_row(out, cfg, id, seed, "ckpt", 0.0, "diag_balance", feature_balance(fw.Z));
    push_row(out, cfg, id, seed, "ckpt", 0.0, "diag_group_dist",
             group_mean_distance(fw.Z, set.known_mask));
    out.supports_key = id;
    out.supports = sup.dims_per_class;
    return out;
}

}  // namespace

std::vector<SummaryRow> summarize(const std::vector<RunRecord>& rows) {
    std::vector<std::string> order;
    std::map<std::string, std::vector<double>> groups;
    std::map<std::string, const RunRecord*> first;
    for (const RunRecord& r : rows) {
        const std::string key = r.variant + "\t" + format_double(r.alpha) + "\t" + r.metric;
        if (!groups.count(key)) {
            order.push_back(key);
            first[key] = &r;
        }
        groups[key].push_back(r.value);
    }
    std::vector<SummaryRow> out;
    for (const std::string& key : order) {
        const RunRecord& r = *first[key];
        std::vector<double>& vals = groups[key];
        double mean = 0.0;
        for (double v : vals) mean += v;
        mean /= static_cast<double>(vals.size());
        std::vector<double> sorted = vals;
        std::sort(sorted.begin(), sorted.end());
        const std::size_t n = sorted.size();
        const double median =
            n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
        out.push_back(SummaryRow{r.kind, r.variant, r.metric, r.alpha, "mean", mean});
        out.push_back(SummaryRow{r.kind, r.variant, r.metric, r.alpha, "median", median});
    }
    return out;
}

std::string summary_csv_text(const std::vector<SummaryRow>& rows) {
    std::string text = "kind,variant,alpha,metric,stat,value\n";
    for (const SummaryRow& r : rows)
        text += r.kind + "," + r.variant + "," + format_double(r.alpha) + "," + r.metric + "," +
                r.stat + "," + format_double(r.value) + "\n";
    return text;
}

std::vector<RunRecord> read_runs_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_runs_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != "run_id,kind,seed,variant,alpha,metric,value")
        throw std::runtime_error("read_runs_csv: bad header in " + path);
    std::vector<RunRecord> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::vector<std::string> f = split(line, ',');
        if (f.size() != 7) throw std::runtime_error("read_runs_csv: bad row: " + line);
        RunRecord r;
        r.run_id = f[0];
        r.kind = f[1];
        r.seed = parse_u64(f[2]);
        r.variant = f[3];
        r.alpha = parse_double(f[4]);
        r.metric = f[5];
        r.value = parse_double(f[6]);
        rows.push_back(std::move(r));
    }
    return rows;
}

RunResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::string echo = cfg.echo();
    const std::uint64_t hash = fnv1a64(echo);
    char hashbuf[20];
    std::snprintf(hashbuf, sizeof hashbuf, "%016llx", static_cast<unsigned long long>(hash));

    namespace fs = std::filesystem;
    const fs::path run_dir = fs::path(cfg.out) / kind_name(cfg.kind) / hashbuf;
    fs::create_directories(run_dir);

    // enumerate cells in canonical order
    struct CellSpec {
        std::string variant;
        double alpha = 0.0;
        std::uint64_t seed = 0;
        int domain = -1;
        bool emit_grid = false;
    };
    std::vector<CellSpec> cells;
    const std::vector<std::string> variants = cfg.effective_variants();
    auto alphas_for = [&](const std::string& variant) -> std::vector<double> {
        if (variant == "none" || variant == "kmeans" || variant == "ckpt")
            return {0.0};
        return cfg.effective_alphas();
    };
    for (const std::string& variant : variants) {
        for (double alpha : alphas_for(variant)) {
            for (std::uint64_t seed : cfg.seeds) {
                switch (cfg.kind) {
                    case ExperimentKind::Toy:
                        cells.push_back(
                            {variant, alpha, seed, -1, seed == cfg.seeds.front()});
                        break;
                    case ExperimentKind::Gcd:
                    case ExperimentKind::Prop1:
                    case ExperimentKind::Diag:
                        cells.push_back({variant, alpha, seed, -1, false});
                        break;
                    case ExperimentKind::Mdg:
                    case ExperimentKind::AllShift:
                        for (std::size_t d = 0; d < cfg.domains; ++d)
                            cells.push_back(
                                {variant, alpha, seed, static_cast<int>(d), false});
                        break;
                }
            }
        }
    }

    std::vector<CellOutput> outputs(cells.size());
    auto run_cell = [&](std::size_t i) {
        const CellSpec& c = cells[i];
        const auto t0 = std::chrono::steady_clock::now();
        try {
            switch (cfg.kind) {
                case ExperimentKind::Toy:
                    outputs[i] = run_toy_cell(cfg, c.variant, c.alpha, c.seed, c.emit_grid);
                    break;
                case ExperimentKind::Mdg:
                    outputs[i] = run_mdg_cell(cfg, c.variant, c.alpha, c.seed,
                                              static_cast<std::size_t>(c.domain));
                    break;
                case ExperimentKind::Gcd:
                    outputs[i] = run_gcd_cell(cfg, c.variant, c.alpha, c.seed);
                    break;
                case ExperimentKind::AllShift:
                    outputs[i] = run_allshift_cell(cfg, c.variant, c.alpha, c.seed,
                                                   static_cast<std::size_t>(c.domain));
                    break;
                case ExperimentKind::Prop1:
                    outputs[i] = run_prop1_cell(cfg, c.alpha, c.seed);
                    break;
                case ExperimentKind::Diag:
                    outputs[i] = run_diag_cell(cfg, c.seed);
                    break;
            }
        } catch (const std::exception& e) {
            outputs[i].error = e.what();
        }
        outputs[i].wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    const std::size_t n_workers = std::min<std::size_t>(cfg.jobs, cells.size());
    if (n_workers <= 1) {
        for (std::size_t i = 0; i < cells.size(); ++i) run_cell(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < n_workers; ++w)
            pool.emplace_back([&] {
                for (;;) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= cells.size()) return;
                    run_cell(i);
                }
            });
        for (std::thread& t : pool) t.join();
    }

    // deterministic writes in cell order, regardless of worker scheduling
    RunResult result;
    result.config_hash = hash;
    result.run_dir = run_dir.string();

    std::ofstream echo_out(run_dir / "config.echo");
    echo_out << echo;
    echo_out.close();

    std::ofstream runs(run_dir / "runs.csv");
    runs << "run_id,kind,seed,variant,alpha,metric,value\n";
    std::string first_error;
    for (const CellOutput& out : outputs) {
        if (!out.error.empty() && first_error.empty()) first_error = out.error;
        for (const RunRecord& r : out.rows) {
            runs << r.run_id << "," << r.kind << "," << r.seed << "," << r.variant << ","
                 << format_double(r.alpha) << "," << r.metric << "," << format_double(r.value)
                 << "\n";
            result.rows.push_back(r);
        }
    }
    runs.close();

    std::ofstream timing(run_dir / "timing.log");
    for (std::size_t i = 0; i < cells.size(); ++i)
        timing << cells[i].variant << " a=" << alpha_tag(cells[i].alpha)
               << " s=" << cells[i].seed << " d=" << cells[i].domain << " "
               << outputs[i].wall_seconds << "s"
               << (outputs[i].error.empty() ? "" : " ERROR: " + outputs[i].error) << "\n";
    timing.close();

    bool any_grid = false, any_supports = false;
    for (const CellOutput& out : outputs) {
        if (!out.grid_name.empty()) any_grid = true;
        if (!out.supports_key.empty()) any_supports = true;
    }
    if (any_grid) {
        fs::create_directories(run_dir / "grids");
        for (const CellOutput& out : outputs) {
            if (out.grid_name.empty()) continue;
            std::ofstream g(run_dir / "grids" / (out.grid_name + ".csv"));
            g << out.grid_text;
        }
    }
    if (any_supports) {
        nlohmann::ordered_json j;
        for (const CellOutput& out : outputs) {
            if (out.supports_key.empty()) continue;
            nlohmann::ordered_json entry;
            for (std::size_t c = 0; c < out.supports.size(); ++c)
                entry["class_" + std::to_string(c)] = out.supports[c];
            j[out.supports_key] = std::move(entry);
        }
        std::ofstream s(run_dir / "supports.json");
        s << j.dump(2) << "\n";
    }

    const std::vector<SummaryRow> summary = summarize(result.rows);
    std::ofstream sum(run_dir / "summary.csv");
    sum << summary_csv_text(summary);
    sum.close();

    if (!first_error.empty())
        throw std::runtime_error("run_experiment: cell failed: " + first_error);
    return result;
}

}  // namespace lreg
