#pragma once

// Round orchestration: client sampling, local training under a pluggable
// objective (FedAvg / FedProx / FedKA) and sample-weighted aggregation.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedka/anchor.hpp"
#include "fedka/data.hpp"
#include "fedka/metrics.hpp"
#include "fedka/nn.hpp"
#include "fedka/partition.hpp"

namespace fedka::fl {

enum class StrategyKind { fedavg, fedprox, fedka };

const char* strategy_name(StrategyKind k);
StrategyKind parse_strategy(const std::string& s);

struct StrategyConfig {
    StrategyKind kind = StrategyKind::fedavg;
    double prox_mu = 0.0;        // fedprox: weight of (mu/2) * ||theta - theta_g||^2
    double beta = 0.1;           // fedka: weight of the anchor loss
    std::size_t anchor_cap = 10; // fedka: anchors larger than this are randomly down-sampled
    anchor::Selection selection = anchor::Selection::random;
    anchor::Variant variant = anchor::Variant::full;
    bool cache_teacher_logits = false;  // global logits on the anchor computed once per round
};

struct LocalPlan {
    std::size_t epochs = 10;
    std::size_t batch_size = 128;
    nn::SgdConfig sgd;
};

// ceil(ratio * N) distinct clients, uniformly without replacement, sorted.
// Deterministic per (seed, round).
std::vector<std::size_t> sample_participants(std::size_t client_count, double ratio, std::uint64_t seed,
                                             std::size_t round);

struct ClientUpdate {
    std::size_t client_id = 0;
    nn::ModelState state;
    std::size_t sample_count = 0;
    std::vector<double> loss_trace;  // total objective per mini-batch
    std::optional<anchor::KnowledgeAnchor> anchor;
};

// Everything a client needs that is shared across the round.
struct LocalContext {
    const data::LabeledDataset* train = nullptr;
    const nn::NetworkSpec* spec = nullptr;
    const anchor::SharedDataset* shared = nullptr;  // required for fedka
    std::uint64_t seed = 0;
    std::size_t round = 0;
};

// Called after every local epoch with the epoch number (1-based) and current state.
using EpochHook = std::function<void(std::size_t, const nn::ModelState&)>;

// Trains a fresh copy of global_state (momentum reset) for plan.epochs shuffled
// passes over the shard.
ClientUpdate local_train(const LocalContext& ctx, const data::ClientShard& shard, const nn::ModelState& global_state,
                         const LocalPlan& plan, const StrategyConfig& strategy, const EpochHook& hook = {});

// n_i / sum_j n_j over the given updates.
std::vector<double> aggregation_weights(std::span<const ClientUpdate> updates);

// Weighted parameter mean; momentum of the result is zero.
nn::ModelState aggregate(std::span<const ClientUpdate> updates);

}  // namespace fedka::fl
