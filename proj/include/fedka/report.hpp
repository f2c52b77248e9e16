#pragma once

// Cross-run comparison: final accuracy, rounds needed to reach the baseline's
// final accuracy, and speedup over the baseline.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fedka/metrics.hpp"

namespace fedka::report {

struct RunInfo {
    std::string dir;
    std::string name;
    std::string strategy;
    std::string train_hash;
    std::string test_hash;
    metrics::Curve curve;  // from metrics/rounds.csv
};

// Reads manifest.json and metrics/rounds.csv of a run directory.
RunInfo load_run(const std::string& dir);

struct CompareRow {
    std::string name;
    std::string strategy;
    double final_accuracy = 0.0;
    std::optional<std::size_t> rounds_to_target;
    std::optional<double> speedup;  // baseline rounds / this run's rounds
};

struct Comparison {
    std::string baseline;
    double target = 0.0;  // the baseline's final accuracy
    std::size_t baseline_rounds = 0;
    std::vector<CompareRow> rows;
};

// Throws fedka::Error listing both hashes when a run used different data.
Comparison compare_runs(const std::vector<RunInfo>& runs, const RunInfo& baseline);

// Unreached targets are written as "\" in markdown and left empty in CSV.
void write_markdown(std::ostream& out, const Comparison& cmp);
void write_csv(std::ostream& out, const Comparison& cmp);

}  // namespace fedka::report
