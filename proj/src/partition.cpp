#include "fedka/partition.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "fedka/error.hpp"

namespace fedka::data {

const char* role_name(Role r) {
    switch (r) {
        case Role::dominant: return "dominant";
        case Role::non_dominant: return "non_dominant";
        case Role::missing: return "missing";
    }
    return "?";
}

Role ClassRoles::role_of(int k) const {
    if (std::binary_search(dominant.begin(), dominant.end(), k)) return Role::dominant;
    if (std::binary_search(non_dominant.begin(), non_dominant.end(), k)) return Role::non_dominant;
    if (std::binary_search(missing.begin(), missing.end(), k)) return Role::missing;
    throw Error("class " + std::to_string(k) + " has no role");
}

ClassRoles classify_roles(std::span<const std::size_t> counts, double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw Error("gamma must lie in (0, 1)");
    std::size_t n = 0;
    for (auto c : counts) n += c;
    if (n == 0) throw Error("cannot classify roles of an empty client");
    ClassRoles r;
    for (std::size_t k = 0; k < counts.size(); ++k) {
        const int cls = static_cast<int>(k);
        if (counts[k] == 0) {
            r.missing.push_back(cls);
        } else if (static_cast<double>(counts[k]) / static_cast<double>(n) >= gamma) {
            r.dominant.push_back(cls);
        } else {
            r.non_dominant.push_back(cls);
        }
    }
    return r;
}

std::vector<std::size_t> ClientShard::class_indices(const LabeledDataset& ds, int k) const {
    std::vector<std::size_t> out;
    for (auto i : indices)
        if (ds.labels[i] == k) out.push_back(i);
    return out;
}

ClientShard make_shard(const LabeledDataset& ds, std::size_t client_id, std::vector<std::size_t> indices,
                       double gamma) {
    ClientShard s;
    s.client_id = client_id;
    s.gamma = gamma;
    std::sort(indices.begin(), indices.end());
    s.indices = std::move(indices);
    s.counts.assign(ds.class_count, 0);
    for (auto i : s.indices) ++s.counts[static_cast<std::size_t>(ds.labels[i])];
    if (!s.indices.empty()) s.roles = classify_roles(s.counts, gamma);
    return s;
}

std::vector<double> sample_dirichlet(double alpha, std::size_t n, Rng& rng) {
    if (!(alpha > 0.0)) throw Error("Dirichlet concentration must be positive");
    // Gamma(a) = Gamma(a + 1) * U^(1/a), evaluated in log space so tiny alpha cannot underflow
    std::gamma_distribution<double> gamma(alpha + 1.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<double> logs(n);
    for (auto& l : logs) {
        const double g = gamma(rng);
        const double u = 1.0 - unif(rng);  // (0, 1]
        l = std::log(g) + std::log(u) / alpha;
    }
    const double m = *std::max_element(logs.begin(), logs.end());
    std::vector<double> p(n);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += p[i] = std::exp(logs[i] - m);
    for (auto& v : p) v /= sum;
    return p;
}

std::vector<ClientShard> dirichlet_partition(const LabeledDataset& ds, const PartitionSpec& spec, double gamma) {
    if (spec.client_count == 0) throw Error("partition needs at least one client");
    if (!(spec.alpha > 0.0)) throw Error("partition alpha must be positive");
    ds.validate();

    std::vector<std::vector<std::size_t>> by_class(ds.class_count);
    for (std::size_t i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);

    const std::size_t attempts = spec.max_retries + 1;
    for (std::size_t attempt = 0; attempt < attempts; ++attempt) {
        Rng rng = make_rng(spec.seed, "partition", attempt);
        std::vector<std::vector<std::size_t>> owned(spec.client_count);
        for (const auto& members : by_class) {
            const auto p = sample_dirichlet(spec.alpha, spec.client_count, rng);
            std::discrete_distribution<std::size_t> pick(p.begin(), p.end());
            for (auto i : members) owned[pick(rng)].push_back(i);
        }
        const bool ok = std::all_of(owned.begin(), owned.end(), [&](const auto& v) {
            return v.size() >= std::max<std::size_t>(spec.min_samples_per_client, 1);
        });
        if (!ok) continue;
        std::vector<ClientShard> shards;
        for (std::size_t c = 0; c < spec.client_count; ++c) shards.push_back(make_shard(ds, c, std::move(owned[c]), gamma));
        return shards;
    }
    throw Error("Dirichlet partition left a client with fewer than " +
                std::to_string(std::max<std::size_t>(spec.min_samples_per_client, 1)) + " samples after " +
                std::to_string(attempts) + " attempts; use a larger alpha or fewer clients");
}

std::vector<std::size_t> assignment_of(const std::vector<ClientShard>& shards, std::size_t dataset_size) {
    std::vector<std::size_t> a(dataset_size, SIZE_MAX);
    for (const auto& s : shards)
        for (auto i : s.indices) {
            if (i >= dataset_size || a[i] != SIZE_MAX)
                throw Error("sample " + std::to_string(i) + " is out of range or assigned twice");
            a[i] = s.client_id;
        }
    for (std::size_t i = 0; i < dataset_size; ++i)
        if (a[i] == SIZE_MAX) throw Error("sample " + std::to_string(i) + " is not assigned to any client");
    return a;
}

std::vector<ClientShard> shards_from_assignment(const LabeledDataset& ds, std::span<const std::size_t> assignment,
                                                std::size_t client_count, double gamma) {
    if (assignment.size() != ds.size()) throw Error("assignment length does not match dataset size");
    std::vector<std::vector<std::size_t>> owned(client_count);
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        if (assignment[i] >= client_count)
            throw Error("sample " + std::to_string(i) + " assigned to unknown client " + std::to_string(assignment[i]));
        owned[assignment[i]].push_back(i);
    }
    std::vector<ClientShard> shards;
    for (std::size_t c = 0; c < client_count; ++c) {
        if (owned[c].empty()) throw Error("client " + std::to_string(c) + " has no samples");
        shards.push_back(make_shard(ds, c, std::move(owned[c]), gamma));
    }
    return shards;
}

void validate_schedule(std::span<const Reduction> schedule) {
    std::map<std::pair<std::size_t, int>, std::size_t> last;
    for (const auto& r : schedule) {
        const auto key = std::make_pair(r.client, r.cls);
        const auto it = last.find(key);
        if (it != last.end() && r.round <= it->second)
            throw Error("reductions for client " + std::to_string(r.client) + " class " + std::to_string(r.cls) +
                        " must have strictly increasing rounds");
        last[key] = r.round;
    }
}

ClientShard reduce_class(const LabeledDataset& ds, const ClientShard& shard, int cls, std::size_t keep) {
    if (cls < 0 || static_cast<std::size_t>(cls) >= ds.class_count) throw Error("reduction targets unknown class");
    const std::size_t have = shard.counts[static_cast<std::size_t>(cls)];
    if (keep > have)
        throw Error("cannot keep " + std::to_string(keep) + " samples of class " + std::to_string(cls) + " on client " +
                    std::to_string(shard.client_id) + ": it only has " + std::to_string(have));
    std::vector<std::size_t> kept;
    std::size_t seen = 0;
    for (auto i : shard.indices) {
        if (ds.labels[i] == cls && seen++ >= keep) continue;
        kept.push_back(i);
    }
    if (kept.empty()) throw Error("reduction would leave client " + std::to_string(shard.client_id) + " empty");
    return make_shard(ds, shard.client_id, std::move(kept), shard.gamma);
}

ClientShard apply_reduction_schedule(const LabeledDataset& ds, const ClientShard& shard,
                                     std::span<const Reduction> schedule, std::size_t round) {
    ClientShard out = shard;
    for (const auto& r : schedule)
        if (r.round == round && r.client == shard.client_id) out = reduce_class(ds, out, r.cls, r.keep);
    return out;
}

void write_assignment_csv(std::ostream& out, const LabeledDataset& ds, std::span<const std::size_t> assignment) {
    out << "sample_id,client_id,label\n";
    for (std::size_t i = 0; i < assignment.size(); ++i) out << i << ',' << assignment[i] << ',' << ds.labels[i] << '\n';
}

std::vector<std::size_t> read_assignment_csv(std::istream& in, const LabeledDataset& ds) {
    std::string line;
    if (!std::getline(in, line) || line != "sample_id,client_id,label")
        throw Error("assignment CSV must start with 'sample_id,client_id,label'");
    std::vector<std::size_t> a(ds.size(), SIZE_MAX);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::size_t sample = 0, client = 0;
        long label = 0;
        char c1 = 0, c2 = 0;
        if (!(ls >> sample >> c1 >> client >> c2 >> label) || c1 != ',' || c2 != ',')
            throw Error("assignment CSV line " + std::to_string(lineno) + " is malformed");
        if (sample >= ds.size()) throw Error("assignment CSV line " + std::to_string(lineno) + ": sample out of range");
        if (label != ds.labels[sample])
            throw Error("assignment CSV line " + std::to_string(lineno) + ": label does not match the dataset");
        if (a[sample] != SIZE_MAX)
            throw Error("assignment CSV assigns sample " + std::to_string(sample) + " twice");
        a[sample] = client;
    }
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] == SIZE_MAX) throw Error("assignment CSV is missing sample " + std::to_string(i));
    return a;
}

void write_count_matrix_csv(std::ostream& out, const std::vector<ClientShard>& shards, std::size_t class_count) {
    out << "client";
    for (std::size_t k = 0; k < class_count; ++k) out << ",class_" << k;
    out << ",total\n";
    for (const auto& s : shards) {
        out << s.client_id;
        for (auto c : s.counts) out << ',' << c;
        out << ',' << s.size() << '\n';
    }
}

namespace {

std::string join_classes(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + std::to_string(v[i]);
    return s;
}

}  // namespace

void write_roles_csv(std::ostream& out, const std::vector<ClientShard>& shards) {
    out << "client,samples,dominant,non_dominant,missing\n";
    for (const auto& s : shards)
        out << s.client_id << ',' << s.size() << ',' << join_classes(s.roles.dominant) << ','
            << join_classes(s.roles.non_dominant) << ',' << join_classes(s.roles.missing) << '\n';
}

}  // namespace fedka::data
