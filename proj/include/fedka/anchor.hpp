#pragma once

// Knowledge anchors: a per-round, per-client set holding one sample for every
// class the client is likely to forget. Missing classes borrow the sample from
// a K-entry shared set; non-dominant classes use one of the client's own
// samples. The anchor regularizes local training by pulling the local model's
// logits on it (dominant-class columns removed) towards the frozen global
// model's logits.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "fedka/nn.hpp"
#include "fedka/partition.hpp"

namespace fedka::anchor {

struct SharedSample {
    std::size_t sample_id = 0;  // index into the training set
    int label = 0;
    std::size_t contributor = SIZE_MAX;  // client that provided it, if known
};

// Exactly one sample per class; entries[k].label == k.
struct SharedDataset {
    std::vector<SharedSample> entries;

    std::size_t size() const { return entries.size(); }
    const SharedSample& of_class(int k) const { return entries.at(static_cast<std::size_t>(k)); }
};

// One sample per class: the first class-k sample in a seed-shuffled order of the dataset.
SharedDataset build_shared_dataset(const data::LabeledDataset& ds, std::uint64_t seed);

// Same, but each class is contributed by a client that owns it, spreading the
// contributions over as many clients as possible.
SharedDataset build_shared_dataset(const data::LabeledDataset& ds, const std::vector<data::ClientShard>& shards,
                                   std::uint64_t seed);

enum class Source { shared, local };
enum class Selection { random, hard, proficient };
enum class Variant { full, ka_n, ka_m, none };

const char* source_name(Source s);
const char* selection_name(Selection s);
const char* variant_name(Variant v);
Selection parse_selection(const std::string& s);
Variant parse_variant(const std::string& s);

struct AnchorEntry {
    std::size_t sample_id = 0;
    int label = 0;
    Source source = Source::local;

    bool operator==(const AnchorEntry&) const = default;
};

struct KnowledgeAnchor {
    std::vector<AnchorEntry> entries;
    std::size_t owner = 0;
    std::size_t round = 0;
    std::vector<int> dominant;  // C_d snapshot used for logit discarding

    std::size_t size() const { return entries.size(); }
    bool empty() const { return entries.empty(); }
};

// Which classes an anchor covers: full = missing + non-dominant, ka_n =
// non-dominant only, ka_m = missing only, none = nothing.
struct RoleMask {
    std::vector<int> missing;
    std::vector<int> non_dominant;
};

RoleMask anchor_variant(const data::ClientShard& shard, Variant variant);

// Model used to score samples for the hard/proficient strategies.
struct Scorer {
    const nn::ModelState* state = nullptr;
    const nn::NetworkSpec* spec = nullptr;
};

// Picks one local sample for each listed class:
//   random     - uniform over the client's samples of that class
//   hard       - largest per-sample cross-entropy under the scorer
//   proficient - smallest per-sample cross-entropy under the scorer
// Loss ties go to the lowest sample index.
std::map<int, std::size_t> select_anchor_samples(const data::LabeledDataset& ds, const data::ClientShard& shard,
                                                 const std::vector<int>& classes, Selection selection,
                                                 const Scorer& scorer, Rng& rng);

struct AnchorOptions {
    Variant variant = Variant::full;
    Selection selection = Selection::random;
    Scorer scorer;  // required for hard / proficient
};

// Fresh anchor for (client, round); entries ordered by class id.
KnowledgeAnchor build_anchor(const data::LabeledDataset& ds, const data::ClientShard& shard,
                             const SharedDataset& shared, std::size_t round, std::uint64_t seed,
                             const AnchorOptions& options = {});

// Keeps a uniform random subset of mu entries (original order preserved) when
// the anchor is larger than mu.
KnowledgeAnchor downsample_anchor(const KnowledgeAnchor& anchor, std::size_t mu, std::uint64_t seed);

// Removes the columns of the given classes, keeping the rest in ascending order.
nn::Matrix discard_logits(const nn::Matrix& logits, const std::vector<int>& dominant);

// (1/m) * || discard(teacher) - discard(student) ||^2 and its gradient w.r.t.
// the student logits (zero in discarded columns). m = teacher.rows.
double ka_loss_and_dlogits(const nn::Matrix& teacher, const nn::Matrix& student, const std::vector<int>& dominant,
                           nn::Matrix& dlogits);

// Anchor regularizer with the global model as frozen teacher; the gradient is
// with respect to the local parameters only.
nn::LossGrad ka_loss_and_grad(const nn::Matrix& anchor_inputs, const nn::ModelState& global_state,
                              const nn::ModelState& local_state, const nn::NetworkSpec& spec,
                              const std::vector<int>& dominant);
nn::LossGrad ka_loss_and_grad(const data::LabeledDataset& ds, const KnowledgeAnchor& anchor,
                              const nn::ModelState& global_state, const nn::ModelState& local_state,
                              const nn::NetworkSpec& spec);

nn::Matrix anchor_inputs(const data::LabeledDataset& ds, const KnowledgeAnchor& anchor);

// Audit log: round,client,class,source,sample_id,strategy
void write_anchor_log_header(std::ostream& out);
void append_anchor_log(std::ostream& out, const KnowledgeAnchor& anchor, Selection selection);

}  // namespace fedka::anchor
