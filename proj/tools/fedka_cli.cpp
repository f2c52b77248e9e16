// fedka: run, partition, compare and gradcheck subcommands.
//
// Exit codes: 0 success, 1 gradient check failed, 2 config error, 3 runtime error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fedka/config.hpp"
#include "fedka/error.hpp"
#include "fedka/experiment.hpp"
#include "fedka/gradcheck.hpp"
#include "fedka/report.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

int config_failure(const fedka::ConfigError& e) {
    std::cerr << "config error:\n";
    for (const auto& v : e.violations()) std::cerr << "  " << v << '\n';
    return kConfigError;
}

int cmd_run(const std::string& path, const std::vector<std::string>& sets, bool dry_run, bool quiet) {
    fedka::ExperimentConfig cfg;
    try {
        cfg = fedka::load_config(path, sets);
    } catch (const fedka::ConfigError& e) {
        return config_failure(e);
    }
    if (dry_run) {
        std::cout << fedka::to_json(cfg).dump(2) << '\n';
        return kOk;
    }
    try {
        auto progress = [&](const std::string& line) {
            if (!quiet) std::cout << line << std::endl;
        };
        const auto res = fedka::experiment::run_experiment(cfg, progress);
        std::cout << "wrote " << fedka::resolve_output_dir(cfg) << " (" << res.rounds_completed << " rounds)\n";
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntimeError;
    }
    return kOk;
}

int cmd_partition(const std::string& path, const std::vector<std::string>& sets, std::string out_dir) {
    fedka::ExperimentConfig cfg;
    try {
        cfg = fedka::load_config(path, sets, false);
    } catch (const fedka::ConfigError& e) {
        return config_failure(e);
    }
    try {
        namespace ex = fedka::experiment;
        const auto train = ex::load_datasets(cfg).first;
        const auto shards = ex::make_partition(cfg, train);
        if (out_dir.empty()) out_dir = (std::filesystem::path(fedka::resolve_output_dir(cfg)) / "partition").string();
        ex::write_partition(out_dir, train, shards);
        fedka::data::write_count_matrix_csv(std::cout, shards, train.class_count);
        std::cout << '\n';
        fedka::data::write_roles_csv(std::cout, shards);
        std::cerr << "wrote " << out_dir << "/{counts,roles,assignment}.csv\n";
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntimeError;
    }
    return kOk;
}

int cmd_compare(const std::vector<std::string>& dirs, std::string baseline_dir, const std::string& md_path,
                const std::string& csv_path) {
    try {
        namespace rp = fedka::report;
        if (baseline_dir.empty()) baseline_dir = dirs.front();
        const auto baseline = rp::load_run(baseline_dir);
        std::vector<rp::RunInfo> runs;
        for (const auto& d : dirs) runs.push_back(rp::load_run(d));
        const auto cmp = rp::compare_runs(runs, baseline);
        rp::write_markdown(std::cout, cmp);
        if (!md_path.empty()) {
            std::ofstream md(md_path);
            if (!md) throw fedka::Error("cannot write " + md_path);
            rp::write_markdown(md, cmp);
        }
        if (!csv_path.empty()) {
            std::ofstream csv(csv_path);
            if (!csv) throw fedka::Error("cannot write " + csv_path);
            rp::write_csv(csv, cmp);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntimeError;
    }
    return kOk;
}

int cmd_gradcheck(const fedka::check::GradcheckOptions& opts) {
    try {
        bool ok = true;
        std::printf("%-10s %-8s %4s %7s %7s %12s\n", "model", "loss", "seed", "coords", "skipped", "max_rel_err");
        for (const auto& r : fedka::check::run_gradcheck(opts)) {
            std::printf("%-10s %-8s %4llu %7zu %7zu %12.3e %s\n", r.model.c_str(), r.objective.c_str(),
                        static_cast<unsigned long long>(r.seed), r.coords_checked, r.coords_skipped, r.max_rel_error,
                        r.passed ? "ok" : "FAIL");
            ok = ok && r.passed;
        }
        return ok ? kOk : kCheckFailed;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntimeError;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated learning simulator with knowledge anchors"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> sets;
    bool dry_run = false, quiet = false;
    auto* run = app.add_subcommand("run", "Run an experiment and write its artifact directory");
    run->add_option("config", config_path, "Experiment config (JSON)")->required();
    run->add_option("--set", sets, "Override a config value, e.g. --set training.rounds=20");
    run->add_flag("--dry-run", dry_run, "Validate and print the resolved config without training");
    run->add_flag("-q,--quiet", quiet, "Suppress per-round lines");

    std::string part_out;
    auto* part = app.add_subcommand("partition", "Write the client x class count matrix and role report");
    part->add_option("config", config_path, "Experiment config (JSON)")->required();
    part->add_option("--set", sets, "Override a config value");
    part->add_option("-o,--out", part_out, "Output directory (default <output_dir>/partition)");

    std::vector<std::string> dirs;
    std::string baseline, md_path, csv_path;
    auto* cmp = app.add_subcommand("compare", "Tabulate accuracy, rounds to target and speedup across runs");
    cmp->add_option("runs", dirs, "Run directories")->required();
    cmp->add_option("-b,--baseline", baseline, "Run whose final accuracy is the target (default: first run)");
    cmp->add_option("--markdown", md_path, "Also write the markdown table here");
    cmp->add_option("--csv", csv_path, "Write the CSV table here");

    fedka::check::GradcheckOptions gc;
    bool mlp_only = false;
    auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every training objective");
    grad->add_option("--seeds", gc.seeds, "Number of seeds")->check(CLI::PositiveNumber);
    grad->add_option("--coords", gc.coords, "Coordinates sampled per check")->check(CLI::PositiveNumber);
    grad->add_option("--step", gc.step, "Central difference step")->check(CLI::PositiveNumber);
    grad->add_option("--tol", gc.tolerance, "Maximum relative error")->check(CLI::PositiveNumber);
    grad->add_flag("--mlp-only", mlp_only, "Skip the convolutional networks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    if (run->parsed()) return cmd_run(config_path, sets, dry_run, quiet);
    if (part->parsed()) return cmd_partition(config_path, sets, part_out);
    if (cmp->parsed()) return cmd_compare(dirs, baseline, md_path, csv_path);
    gc.include_cnn = !mlp_only;
    return cmd_gradcheck(gc);
}
