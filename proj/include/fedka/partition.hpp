#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedka/data.hpp"

namespace fedka::data {

enum class Role { dominant, non_dominant, missing };

const char* role_name(Role r);

// Class-role sets of one client; each sorted ascending.
struct ClassRoles {
    std::vector<int> dominant;
    std::vector<int> non_dominant;
    std::vector<int> missing;

    Role role_of(int k) const;
    bool operator==(const ClassRoles&) const = default;
};

// missing: count == 0; non-dominant: 0 < count/n < gamma; dominant: count/n >= gamma.
ClassRoles classify_roles(std::span<const std::size_t> counts, double gamma);

struct ClientShard {
    std::size_t client_id = 0;
    std::vector<std::size_t> indices;  // ascending indices into the parent dataset
    std::vector<std::size_t> counts;   // per class
    ClassRoles roles;
    double gamma = 0.05;

    std::size_t size() const { return indices.size(); }
    // Indices of this client's samples with label k, ascending.
    std::vector<std::size_t> class_indices(const LabeledDataset& ds, int k) const;
};

ClientShard make_shard(const LabeledDataset& ds, std::size_t client_id, std::vector<std::size_t> indices,
                       double gamma);

struct PartitionSpec {
    std::size_t client_count = 10;
    double alpha = 0.1;
    std::uint64_t seed = 0;
    std::size_t min_samples_per_client = 1;
    std::size_t max_retries = 100;
};

// For every class k draws p_k ~ Dir(alpha * 1_N) and sends each class-k sample
// to a client drawn from p_k. Redraws the whole assignment while any client
// ends up with fewer than min_samples_per_client samples.
std::vector<ClientShard> dirichlet_partition(const LabeledDataset& ds, const PartitionSpec& spec, double gamma);

// Sample-to-client assignment (one client id per dataset index) and back.
std::vector<std::size_t> assignment_of(const std::vector<ClientShard>& shards, std::size_t dataset_size);
std::vector<ClientShard> shards_from_assignment(const LabeledDataset& ds, std::span<const std::size_t> assignment,
                                                std::size_t client_count, double gamma);

// Dirichlet draw; stable for tiny alpha (sampled in log space).
std::vector<double> sample_dirichlet(double alpha, std::size_t n, Rng& rng);

struct Reduction {
    std::size_t round = 0;
    std::size_t client = 0;
    int cls = 0;
    std::size_t keep = 0;
};

// Rounds must be strictly increasing for each (client, class).
void validate_schedule(std::span<const Reduction> schedule);

// Keeps the `keep` lowest-index samples of class `cls` and recomputes roles.
ClientShard reduce_class(const LabeledDataset& ds, const ClientShard& shard, int cls, std::size_t keep);

// Applies every entry scheduled for exactly `round` that targets this shard.
ClientShard apply_reduction_schedule(const LabeledDataset& ds, const ClientShard& shard,
                                     std::span<const Reduction> schedule, std::size_t round);

// CSV exports.
// sample_id,client_id,label
void write_assignment_csv(std::ostream& out, const LabeledDataset& ds, std::span<const std::size_t> assignment);
std::vector<std::size_t> read_assignment_csv(std::istream& in, const LabeledDataset& ds);
// client,class_0..class_{K-1},total
void write_count_matrix_csv(std::ostream& out, const std::vector<ClientShard>& shards, std::size_t class_count);
// client,samples,dominant,non_dominant,missing (class lists separated by spaces)
void write_roles_csv(std::ostream& out, const std::vector<ClientShard>& shards);

}  // namespace fedka::data
