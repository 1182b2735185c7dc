#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lreg/experiment.hpp"

namespace {

int cmd_run(const std::string& config_path, const std::string& out_override,
            const std::string& seeds_override, std::size_t jobs_override) {
    lreg::ExperimentConfig cfg = lreg::parse_config(config_path);
    if (!out_override.empty()) cfg.out = out_override;
    if (!seeds_override.empty()) {
        cfg.seeds.clear();
        std::string cur;
        for (char c : seeds_override + ",") {
            if (c == ',') {
                if (!cur.empty()) cfg.seeds.push_back(std::stoull(cur));
                cur.clear();
            } else {
                cur += c;
            }
        }
        cfg.validate();
    }
    if (jobs_override) cfg.jobs = jobs_override;

    const lreg::RunResult result = lreg::run_experiment(cfg);
    std::printf("wrote %zu rows to %s\n", result.rows.size(), result.run_dir.c_str());
    return 0;
}

int cmd_validate(const std::string& config_path) {
    const lreg::ExperimentConfig cfg = lreg::parse_config(config_path);
    std::printf("%s", cfg.echo().c_str());
    return 0;
}

int cmd_report(const std::string& runs_path) {
    const std::vector<lreg::RunRecord> rows = lreg::read_runs_csv(runs_path);
    const std::vector<lreg::SummaryRow> summary = lreg::summarize(rows);
    std::printf("%s", lreg::summary_csv_text(summary).c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"logical-regularizer experiment runner"};
    app.require_subcommand(1);

    std::string config_path, out_override, seeds_override, runs_path;
    std::size_t jobs_override = 0;

    CLI::App* run = app.add_subcommand("run", "execute an experiment config");
    run->add_option("--config", config_path, "config file")->required();
    run->add_option("--out", out_override, "override output directory");
    run->add_option("--seeds", seeds_override, "override seed list, comma separated");
    run->add_option("--jobs", jobs_override, "override worker count");

    CLI::App* validate = app.add_subcommand("validate", "parse a config and echo it");
    validate->add_option("--config", config_path, "config file")->required();

    CLI::App* report = app.add_subcommand("report", "recompute summary from a runs.csv");
    report->add_option("--runs", runs_path, "runs.csv file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(config_path, out_override, seeds_override, jobs_override);
        if (validate->parsed()) return cmd_validate(config_path);
        if (report->parsed()) return cmd_report(runs_path);
    } catch (const lreg::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
