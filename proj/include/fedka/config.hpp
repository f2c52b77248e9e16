#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "fedka/federation.hpp"
#include "fedka/partition.hpp"

namespace fedka {

struct DatasetConfig {
    std::string kind;  // "blobs" | "idx"
    // blobs
    std::size_t classes = 4;
    std::size_t per_class = 100;
    std::size_t test_per_class = 100;
    std::size_t dims = 8;
    double separation = 6.0;
    // idx
    std::string train_images, train_labels, test_images, test_labels;
    std::optional<std::uint64_t> seed;  // derived from the master seed when absent
};

struct PartitionConfig {
    std::size_t clients = 10;
    double alpha = 0.1;
    std::optional<std::uint64_t> seed;
    std::size_t min_samples = 1;
    std::size_t max_retries = 100;
    double gamma = 0.05;  // dominance threshold for class roles
    std::string file;     // optional assignment CSV replacing the Dirichlet draw
};

struct ModelConfig {
    std::string kind = "mlp";  // "mlp" | "t_cnn"
    std::vector<std::size_t> hidden{32};
};

struct TrainingConfig {
    std::size_t rounds = 100;
    std::size_t local_epochs = 10;
    std::size_t batch_size = 128;
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 1e-5;
    double participation = 1.0;
    bool parallel_clients = false;
    std::size_t checkpoint_interval = 0;  // 0: initial and final checkpoints only
};

struct MetricsConfig {
    double xi = 1e-8;
    std::size_t eval_interval = 1;
    bool forgetting = true;
    bool intra_epoch = false;
};

struct ExperimentConfig {
    std::string name = "run";
    DatasetConfig dataset;
    PartitionConfig partition;
    ModelConfig model;
    fl::StrategyConfig strategy;
    TrainingConfig training;
    std::vector<data::Reduction> reductions;
    MetricsConfig metrics;
    std::uint64_t master_seed = 0;
    std::string output_dir;  // empty: $FEDKA_OUTPUT_ROOT (or "runs") / name
};

// Validates every field and collects all violations into one ConfigError.
// Unknown keys are violations too.
ExperimentConfig parse_config(const nlohmann::json& j);

// Fully resolved form: every value, including defaults, is present.
nlohmann::json to_json(const ExperimentConfig& cfg);

// "training.rounds=20" style override; the value is parsed as JSON when
// possible, otherwise taken as a string.
void apply_override(nlohmann::json& j, const std::string& assignment);

// Relative data and partition paths resolve against the config file's directory.
// With require_strategy == false a missing strategy section defaults to fedavg.
ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {},
                             bool require_strategy = true);

std::string resolve_output_dir(const ExperimentConfig& cfg);

}  // namespace fedka
