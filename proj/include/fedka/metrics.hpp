#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fedka/data.hpp"
#include "fedka/nn.hpp"
#include "fedka/partition.hpp"

namespace fedka::metrics {

struct AccuracyReport {
    double global = 0.0;                          // correct / total over the test set
    std::vector<std::optional<double>> per_class;  // empty optional: class absent from the test set
};

// Predictions use the argmax logit, ties resolved to the lowest class id.
AccuracyReport accuracy_from_logits(const nn::Matrix& logits, std::span<const int> labels, std::size_t class_count);
AccuracyReport evaluate(const nn::ModelState& state, const nn::NetworkSpec& spec, const data::LabeledDataset& test);
std::vector<std::optional<double>> classwise_accuracy(const nn::ModelState& state, const nn::NetworkSpec& spec,
                                                      const data::LabeledDataset& test);

// (acc_global - acc_local) / (acc_global + xi). Positive means the local stage
// forgot the class, negative means it improved it.
double forgetting_degree(double acc_global, double acc_local, double xi);

struct ForgettingRecord {
    std::size_t round = 0;
    std::size_t client = 0;
    int cls = 0;
    data::Role role = data::Role::dominant;
    double acc_global = 0.0;
    double acc_local = 0.0;
    double tau = 0.0;
};

// One record per class with a defined test accuracy; roles come from the shard.
std::vector<ForgettingRecord> measure_local_forgetting(const data::ClientShard& shard, const AccuracyReport& global,
                                                       const AccuracyReport& local, std::size_t round, double xi);
std::vector<ForgettingRecord> measure_local_forgetting(const data::ClientShard& shard,
                                                       const nn::ModelState& global_state,
                                                       const nn::ModelState& local_state, const nn::NetworkSpec& spec,
                                                       const data::LabeledDataset& test, std::size_t round, double xi);

using Curve = std::vector<std::pair<std::size_t, double>>;

// First round whose accuracy reaches target (inclusive); nullopt if never.
std::optional<std::size_t> rounds_to_target(const Curve& curve, double target);

struct RoundRecord {
    std::size_t round = 0;
    AccuracyReport accuracy;
};

// Shortest text that parses back to the same double.
std::string format_number(double v);

// rounds.csv: round,global_acc,acc_class_0..acc_class_{K-1}
void write_rounds_header(std::ostream& out, std::size_t class_count);
void append_round(std::ostream& out, const RoundRecord& rec);
Curve read_rounds_curve(std::istream& in);

// forgetting.csv: round,client,class,role,acc_global,acc_local,tau
void write_forgetting_header(std::ostream& out);
void append_forgetting(std::ostream& out, const ForgettingRecord& rec);
std::vector<ForgettingRecord> read_forgetting_csv(std::istream& in);

}  // namespace fedka::metrics
