#include "fedka/anchor.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>

#include "fedka/error.hpp"

namespace fedka::anchor {

const char* source_name(Source s) { return s == Source::shared ? "shared" : "local"; }

const char* selection_name(Selection s) {
    switch (s) {
        case Selection::random: return "random";
        case Selection::hard: return "hard";
        case Selection::proficient: return "proficient";
    }
    return "?";
}

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::full: return "full";
        case Variant::ka_n: return "ka_n";
        case Variant::ka_m: return "ka_m";
        case Variant::none: return "none";
    }
    return "?";
}

Selection parse_selection(const std::string& s) {
    if (s == "random") return Selection::random;
    if (s == "hard") return Selection::hard;
    if (s == "proficient") return Selection::proficient;
    throw Error("unknown anchor selection '" + s + "' (random | hard | proficient)");
}

Variant parse_variant(const std::string& s) {
    if (s == "full") return Variant::full;
    if (s == "ka_n") return Variant::ka_n;
    if (s == "ka_m") return Variant::ka_m;
    if (s == "none") return Variant::none;
    throw Error("unknown anchor variant '" + s + "' (full | ka_n | ka_m | none)");
}

namespace {

// rank[i] = position of sample i in a seed-shuffled order of the dataset
std::vector<std::size_t> shuffled_rank(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng = make_rng(seed, "shared");
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::size_t> rank(n);
    for (std::size_t pos = 0; pos < n; ++pos) rank[order[pos]] = pos;
    return rank;
}

void require_complete(const SharedDataset& s, std::size_t class_count) {
    for (std::size_t k = 0; k < class_count; ++k)
        if (s.entries[k].sample_id == SIZE_MAX)
            throw Error("cannot build the shared set: class " + std::to_string(k) + " has no samples");
}

}  // namespace

SharedDataset build_shared_dataset(const data::LabeledDataset& ds, std::uint64_t seed) {
    ds.validate();
    const auto rank = shuffled_rank(ds.size(), seed);
    SharedDataset s;
    s.entries.resize(ds.class_count);
    std::vector<std::size_t> best(ds.class_count, SIZE_MAX);
    for (std::size_t k = 0; k < ds.class_count; ++k) s.entries[k] = {SIZE_MAX, static_cast<int>(k), SIZE_MAX};
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto k = static_cast<std::size_t>(ds.labels[i]);
        if (rank[i] < best[k]) {
            best[k] = rank[i];
            s.entries[k].sample_id = i;
        }
    }
    require_complete(s, ds.class_count);
    return s;
}

SharedDataset build_shared_dataset(const data::LabeledDataset& ds, const std::vector<data::ClientShard>& shards,
                                   std::uint64_t seed) {
    ds.validate();
    const auto rank = shuffled_rank(ds.size(), seed);
    SharedDataset s;
    s.entries.resize(ds.class_count);
    std::vector<std::size_t> contributed(shards.size(), 0);
    for (std::size_t k = 0; k < ds.class_count; ++k) {
        s.entries[k] = {SIZE_MAX, static_cast<int>(k), SIZE_MAX};
        std::size_t who = SIZE_MAX;
        for (std::size_t c = 0; c < shards.size(); ++c) {
            if (shards[c].counts[k] == 0) continue;
            if (who == SIZE_MAX || contributed[c] < contributed[who]) who = c;
        }
        if (who == SIZE_MAX) continue;
        std::size_t best = SIZE_MAX;
        for (auto i : shards[who].indices)
            if (static_cast<std::size_t>(ds.labels[i]) == k && rank[i] < best) {
                best = rank[i];
                s.entries[k].sample_id = i;
            }
        s.entries[k].contributor = shards[who].client_id;
        ++contributed[who];
    }
    require_complete(s, ds.class_count);
    return s;
}

RoleMask anchor_variant(const data::ClientShard& shard, Variant variant) {
    RoleMask m;
    if (variant == Variant::full || variant == Variant::ka_m) m.missing = shard.roles.missing;
    if (variant == Variant::full || variant == Variant::ka_n) m.non_dominant = shard.roles.non_dominant;
    return m;
}

std::map<int, std::size_t> select_anchor_samples(const data::LabeledDataset& ds, const data::ClientShard& shard,
                                                 const std::vector<int>& classes, Selection selection,
                                                 const Scorer& scorer, Rng& rng) {
    std::map<int, std::size_t> chosen;
    for (int k : classes) {
        const auto pool = shard.class_indices(ds, k);
        if (pool.empty())
            throw Error("client " + std::to_string(shard.client_id) + " has no samples of class " + std::to_string(k));
        if (selection == Selection::random) {
            std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
            chosen[k] = pool[pick(rng)];
            continue;
        }
        if (!scorer.state || !scorer.spec) throw Error("hard/proficient anchor selection needs a model to score with");
        const auto batch = data::gather(ds, pool);
        const auto losses = nn::per_sample_ce(nn::forward_logits(*scorer.state, *scorer.spec, batch.inputs), batch.labels);
        std::size_t best = 0;
        for (std::size_t j = 1; j < pool.size(); ++j) {
            const bool better = selection == Selection::hard ? losses[j] > losses[best] : losses[j] < losses[best];
            if (better) best = j;  // strict comparison keeps the lowest index on ties
        }
        chosen[k] = pool[best];
    }
    return chosen;
}

KnowledgeAnchor build_anchor(const data::LabeledDataset& ds, const data::ClientShard& shard,
                             const SharedDataset& shared, std::size_t round, std::uint64_t seed,
                             const AnchorOptions& options) {
    if (shared.size() != ds.class_count) throw Error("shared set does not cover every class");
    KnowledgeAnchor a;
    a.owner = shard.client_id;
    a.round = round;
    a.dominant = shard.roles.dominant;

    const auto mask = anchor_variant(shard, options.variant);
    Rng rng = make_rng(seed, "anchor.select", shard.client_id, round);
    const auto local = select_anchor_samples(ds, shard, mask.non_dominant, options.selection, options.scorer, rng);

    std::vector<AnchorEntry> entries;
    for (int k : mask.missing) entries.push_back({shared.of_class(k).sample_id, k, Source::shared});
    for (const auto& [k, id] : local) entries.push_back({id, k, Source::local});
    std::sort(entries.begin(), entries.end(), [](const auto& x, const auto& y) { return x.label < y.label; });
    a.entries = std::move(entries);
    return a;
}

KnowledgeAnchor downsample_anchor(const KnowledgeAnchor& anchor, std::size_t mu, std::uint64_t seed) {
    if (mu == 0) throw Error("anchor cap must be at least 1");
    if (anchor.size() <= mu) return anchor;
    std::vector<std::size_t> pos(anchor.size());
    std::iota(pos.begin(), pos.end(), 0);
    Rng rng = make_rng(seed, "anchor.downsample", anchor.owner, anchor.round);
    for (std::size_t i = 0; i < mu; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pos.size() - 1);
        std::swap(pos[i], pos[pick(rng)]);
    }
    pos.resize(mu);
    std::sort(pos.begin(), pos.end());
    KnowledgeAnchor out = anchor;
    out.entries.clear();
    for (auto p : pos) out.entries.push_back(anchor.entries[p]);
    return out;
}

namespace {

std::vector<std::size_t> kept_columns(std::size_t k, const std::vector<int>& dominant) {
    std::vector<bool> drop(k, false);
    for (int c : dominant) {
        if (c < 0 || static_cast<std::size_t>(c) >= k) throw Error("dominant class " + std::to_string(c) + " out of range");
        drop[static_cast<std::size_t>(c)] = true;
    }
    std::vector<std::size_t> kept;
    for (std::size_t c = 0; c < k; ++c)
        if (!drop[c]) kept.push_back(c);
    if (kept.empty()) throw Error("every class is dominant; no logits left after discarding");
    return kept;
}

}  // namespace

nn::Matrix discard_logits(const nn::Matrix& logits, const std::vector<int>& dominant) {
    const auto kept = kept_columns(logits.cols, dominant);
    nn::Matrix out(logits.rows, kept.size());
    for (std::size_t r = 0; r < logits.rows; ++r)
        for (std::size_t j = 0; j < kept.size(); ++j) out(r, j) = logits(r, kept[j]);
    return out;
}

double ka_loss_and_dlogits(const nn::Matrix& teacher, const nn::Matrix& student, const std::vector<int>& dominant,
                           nn::Matrix& dlogits) {
    if (teacher.rows != student.rows || teacher.cols != student.cols)
        throw ShapeError(-1, "teacher and student logits differ in shape");
    dlogits = nn::Matrix(student.rows, student.cols);
    if (student.rows == 0) return 0.0;
    const auto kept = kept_columns(student.cols, dominant);
    const double inv_m = 1.0 / static_cast<double>(student.rows);
    double sum = 0.0;
    for (std::size_t r = 0; r < student.rows; ++r)
        for (auto c : kept) {
            const double diff = teacher(r, c) - student(r, c);
            sum += diff * diff;
            dlogits(r, c) = -2.0 * diff * inv_m;
        }
    return sum * inv_m;
}

nn::LossGrad ka_loss_and_grad(const nn::Matrix& inputs, const nn::ModelState& global_state,
                              const nn::ModelState& local_state, const nn::NetworkSpec& spec,
                              const std::vector<int>& dominant) {
    nn::check_state(global_state, spec);
    nn::check_state(local_state, spec);
    if (inputs.rows == 0) return {0.0, std::vector<double>(local_state.params.size(), 0.0)};
    const auto teacher = nn::forward_logits(global_state, spec, inputs);
    const auto fwd = nn::forward_pass(local_state, spec, inputs);
    nn::Matrix dlogits;
    nn::LossGrad out;
    out.loss = ka_loss_and_dlogits(teacher, fwd.logits(), dominant, dlogits);
    out.grad = nn::backward_pass(local_state, spec, fwd, dlogits);
    return out;
}

nn::Matrix anchor_inputs(const data::LabeledDataset& ds, const KnowledgeAnchor& anchor) {
    std::vector<std::size_t> ids;
    ids.reserve(anchor.size());
    for (const auto& e : anchor.entries) ids.push_back(e.sample_id);
    return data::gather_inputs(ds, ids);
}

nn::LossGrad ka_loss_and_grad(const data::LabeledDataset& ds, const KnowledgeAnchor& anchor,
                              const nn::ModelState& global_state, const nn::ModelState& local_state,
                              const nn::NetworkSpec& spec) {
    return ka_loss_and_grad(anchor_inputs(ds, anchor), global_state, local_state, spec, anchor.dominant);
}

void write_anchor_log_header(std::ostream& out) { out << "round,client,class,source,sample_id,strategy\n"; }

void append_anchor_log(std::ostream& out, const KnowledgeAnchor& anchor, Selection selection) {
    for (const auto& e : anchor.entries)
        out << anchor.round << ',' << anchor.owner << ',' << e.label << ',' << source_name(e.source) << ','
            << e.sample_id << ',' << selection_name(selection) << '\n';
}

}  // namespace fedka::anchor
