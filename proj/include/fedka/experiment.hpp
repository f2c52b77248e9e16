#pragma once

// Full simulation: data, partition, shared set, initial model, then R rounds
// of sample -> local train -> measure -> aggregate.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fedka/anchor.hpp"
#include "fedka/config.hpp"
#include "fedka/data.hpp"
#include "fedka/federation.hpp"
#include "fedka/metrics.hpp"
#include "fedka/nn.hpp"
#include "fedka/partition.hpp"

namespace fedka::experiment {

struct Environment {
    data::LabeledDataset train;
    data::LabeledDataset test;
    std::vector<data::ClientShard> shards;
    anchor::SharedDataset shared;
    nn::NetworkSpec spec;
    nn::ModelState initial;
};

// Seeds that are not given explicitly derive from the master seed.
std::uint64_t dataset_seed(const ExperimentConfig& cfg);
std::uint64_t partition_seed(const ExperimentConfig& cfg);

std::pair<data::LabeledDataset, data::LabeledDataset> load_datasets(const ExperimentConfig& cfg);
std::vector<data::ClientShard> make_partition(const ExperimentConfig& cfg, const data::LabeledDataset& train);
nn::NetworkSpec make_spec(const ExperimentConfig& cfg, const data::LabeledDataset& train);
Environment prepare(const ExperimentConfig& cfg);

struct ClientRecord {
    std::size_t round = 0;
    std::size_t client = 0;
    std::size_t samples = 0;
    double final_loss = 0.0;  // objective of the last mini-batch; NaN when E = 0
};

struct EpochForgettingRecord {
    std::size_t epoch = 0;
    metrics::ForgettingRecord record;
};

// Everything produced by one round; pointers are valid only during the callback.
struct RoundSummary {
    std::size_t round = 0;
    std::vector<std::size_t> participants;
    std::vector<double> weights;
    std::optional<metrics::RoundRecord> evaluation;  // absent on rounds skipped by eval_interval
    std::vector<metrics::ForgettingRecord> forgetting;
    std::vector<EpochForgettingRecord> epoch_forgetting;
    std::vector<ClientRecord> clients;
    std::vector<anchor::KnowledgeAnchor> anchors;
    const std::vector<fl::ClientUpdate>* updates = nullptr;
    const nn::ModelState* global = nullptr;  // after aggregation
};

using RoundObserver = std::function<void(const RoundSummary&)>;

struct RunResult {
    std::vector<metrics::RoundRecord> rounds;
    std::vector<metrics::ForgettingRecord> forgetting;
    std::vector<ClientRecord> clients;
    nn::ModelState final_state;
    std::size_t rounds_completed = 0;
};

// Runs the rounds in memory. Errors are rethrown as fedka::Error naming the
// round (and client, when one is at fault); rounds finished before the error
// have already been reported to the observer.
RunResult simulate(const ExperimentConfig& cfg, const Environment& env, const RoundObserver& observer = {});

struct RunPaths {
    std::string root;
    std::string manifest, config, spec, summary;
    std::string rounds_csv, forgetting_csv, clients_csv, epochs_csv, anchors_csv;
    std::string checkpoints;
    std::string partition_dir;
};
RunPaths run_paths(const std::string& root);

// simulate() plus the artifact directory. `progress` receives one line per round.
RunResult run_experiment(const ExperimentConfig& cfg, const std::function<void(const std::string&)>& progress = {});

// Partition artifacts only: counts.csv, roles.csv, assignment.csv under dir.
void write_partition(const std::string& dir, const data::LabeledDataset& train,
                     const std::vector<data::ClientShard>& shards);

// clients.csv: round,client,samples,final_loss. Anchor sizes live in anchors.csv so
// the metric files of FedKA with beta = 0 match FedAvg byte for byte.
void write_clients_header(std::ostream& out);
void append_client(std::ostream& out, const ClientRecord& rec);

}  // namespace fedka::experiment
