#include "fedka/report.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "json.hpp"

#include "fedka/error.hpp"

namespace fedka::report {

namespace fs = std::filesystem;

RunInfo load_run(const std::string& dir) {
    RunInfo info;
    info.dir = dir;
    const auto manifest_path = fs::path(dir) / "manifest.json";
    std::ifstream mf(manifest_path);
    if (!mf) throw Error("not a run directory (no manifest.json): " + dir);
    nlohmann::json m;
    try {
        m = nlohmann::json::parse(mf);
        info.name = m.at("name").get<std::string>();
        info.train_hash = m.at("train_hash").get<std::string>();
        info.test_hash = m.at("test_hash").get<std::string>();
        info.strategy = m.at("config").at("strategy").at("name").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(manifest_path.string() + ": " + e.what());
    }
    std::ifstream rf(fs::path(dir) / "metrics" / "rounds.csv");
    if (!rf) throw Error("missing metrics/rounds.csv in " + dir);
    info.curve = metrics::read_rounds_curve(rf);
    if (info.curve.empty()) throw Error(dir + ": no evaluated rounds to compare");
    return info;
}

Comparison compare_runs(const std::vector<RunInfo>& runs, const RunInfo& baseline) {
    if (baseline.curve.empty()) throw Error("baseline " + baseline.dir + " has no evaluated rounds");
    for (const auto& r : runs) {
        std::string diff;
        if (r.train_hash != baseline.train_hash)
            diff += "\n  train: " + baseline.train_hash + " (baseline) vs " + r.train_hash;
        if (r.test_hash != baseline.test_hash)
            diff += "\n  test:  " + baseline.test_hash + " (baseline) vs " + r.test_hash;
        if (!diff.empty()) throw Error("run " + r.dir + " used different data than the baseline:" + diff);
    }

    Comparison cmp;
    cmp.baseline = baseline.name;
    cmp.target = baseline.curve.back().second;
    cmp.baseline_rounds = *metrics::rounds_to_target(baseline.curve, cmp.target);
    for (const auto& r : runs) {
        if (r.curve.empty()) throw Error("run " + r.dir + " has no evaluated rounds");
        CompareRow row;
        row.name = r.name;
        row.strategy = r.strategy;
        row.final_accuracy = r.curve.back().second;
        row.rounds_to_target = metrics::rounds_to_target(r.curve, cmp.target);
        if (row.rounds_to_target)
            row.speedup = static_cast<double>(cmp.baseline_rounds) / static_cast<double>(*row.rounds_to_target);
        cmp.rows.push_back(row);
    }
    return cmp;
}

void write_markdown(std::ostream& out, const Comparison& cmp) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", cmp.target);
    out << "Target: final accuracy of `" << cmp.baseline << "` = " << buf << " (reached in round "
        << cmp.baseline_rounds << ")\n\n";
    out << "| run | strategy | final acc | rounds to target | speedup |\n";
    out << "|---|---|---|---|---|\n";
    for (const auto& r : cmp.rows) {
        std::snprintf(buf, sizeof buf, "%.4f", r.final_accuracy);
        out << "| " << r.name << " | " << r.strategy << " | " << buf << " | ";
        if (r.rounds_to_target)
            out << *r.rounds_to_target;
        else
            out << "\\";
        out << " | ";
        if (r.speedup) {
            std::snprintf(buf, sizeof buf, "%.2fx", *r.speedup);
            out << buf;
        } else {
            out << "\\";
        }
        out << " |\n";
    }
}

void write_csv(std::ostream& out, const Comparison& cmp) {
    out << "run,strategy,final_acc,target,rounds_to_target,speedup\n";
    for (const auto& r : cmp.rows) {
        out << r.name << ',' << r.strategy << ',' << metrics::format_number(r.final_accuracy) << ','
            << metrics::format_number(cmp.target) << ',';
        if (r.rounds_to_target) out << *r.rounds_to_target;
        out << ',';
        if (r.speedup) out << metrics::format_number(*r.speedup);
        out << '\n';
    }
}

}  // namespace fedka::report
