#include "fedka/federation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedka/error.hpp"

namespace fedka::fl {

const char* strategy_name(StrategyKind k) {
    switch (k) {
        case StrategyKind::fedavg: return "fedavg";
        case StrategyKind::fedprox: return "fedprox";
        case StrategyKind::fedka: return "fedka";
    }
    return "?";
}

StrategyKind parse_strategy(const std::string& s) {
    if (s == "fedavg") return StrategyKind::fedavg;
    if (s == "fedprox") return StrategyKind::fedprox;
    if (s == "fedka") return StrategyKind::fedka;
    throw Error("unknown strategy '" + s + "' (fedavg | fedprox | fedka)");
}

std::vector<std::size_t> sample_participants(std::size_t client_count, double ratio, std::uint64_t seed,
                                             std::size_t round) {
    if (client_count == 0) throw Error("no clients to sample from");
    if (!(ratio > 0.0 && ratio <= 1.0)) throw Error("participation ratio must lie in (0, 1]");
    const double want = std::ceil(ratio * static_cast<double>(client_count) - 1e-9);
    const auto m = std::clamp<std::size_t>(static_cast<std::size_t>(want), 1, client_count);
    std::vector<std::size_t> ids(client_count);
    std::iota(ids.begin(), ids.end(), 0);
    if (m == client_count) return ids;
    Rng rng = make_rng(seed, "participants", round);
    for (std::size_t i = 0; i < m; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, client_count - 1);
        std::swap(ids[i], ids[pick(rng)]);
    }
    ids.resize(m);
    std::sort(ids.begin(), ids.end());
    return ids;
}

ClientUpdate local_train(const LocalContext& ctx, const data::ClientShard& shard, const nn::ModelState& global_state,
                         const LocalPlan& plan, const StrategyConfig& strategy, const EpochHook& hook) {
    if (!ctx.train || !ctx.spec) throw Error("local training needs a dataset and a network spec");
    const auto& ds = *ctx.train;
    const auto& spec = *ctx.spec;
    if (shard.indices.empty()) throw Error("client " + std::to_string(shard.client_id) + " has no samples");
    if (plan.batch_size == 0) throw Error("batch size must be positive");
    nn::check_state(global_state, spec);

    ClientUpdate up;
    up.client_id = shard.client_id;
    up.sample_count = shard.size();
    up.state = global_state;
    std::fill(up.state.momentum.begin(), up.state.momentum.end(), 0.0);

    // Anchor and teacher inputs. Built even when beta == 0 so the audit trail
    // does not depend on the weight; it draws only from the anchor streams.
    nn::Matrix anchor_in;
    std::optional<nn::Matrix> teacher_cache;
    const bool use_ka = strategy.kind == StrategyKind::fedka;
    if (use_ka) {
        if (!ctx.shared) throw Error("fedka needs the shared dataset");
        anchor::AnchorOptions opts;
        opts.variant = strategy.variant;
        opts.selection = strategy.selection;
        opts.scorer = {&global_state, &spec};
        auto a = anchor::build_anchor(ds, shard, *ctx.shared, ctx.round, ctx.seed, opts);
        a = anchor::downsample_anchor(a, strategy.anchor_cap, ctx.seed);
        anchor_in = anchor::anchor_inputs(ds, a);
        if (strategy.cache_teacher_logits && !a.empty())
            teacher_cache = nn::forward_logits(global_state, spec, anchor_in);
        up.anchor = std::move(a);
    }
    const bool ka_active = use_ka && strategy.beta != 0.0 && !up.anchor->empty();
    const bool prox_active = strategy.kind == StrategyKind::fedprox && strategy.prox_mu != 0.0;

    std::vector<std::size_t> order = shard.indices;
    Rng rng = make_rng(ctx.seed, "batch", shard.client_id, ctx.round);
    for (std::size_t epoch = 1; epoch <= plan.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += plan.batch_size) {
            const std::size_t end = std::min(order.size(), start + plan.batch_size);
            const auto batch = data::gather(ds, std::span(order).subspan(start, end - start));

            const auto fwd = nn::forward_pass(up.state, spec, batch.inputs);
            nn::Matrix dlogits;
            double loss = nn::ce_loss_and_dlogits(fwd.logits(), batch.labels, dlogits);
            auto grad = nn::backward_pass(up.state, spec, fwd, dlogits);

            if (prox_active) {
                double sq = 0.0;
                for (std::size_t i = 0; i < grad.size(); ++i) {
                    const double d = up.state.params[i] - global_state.params[i];
                    sq += d * d;
                    grad[i] += strategy.prox_mu * d;
                }
                loss += 0.5 * strategy.prox_mu * sq;
            }
            if (ka_active) {
                const nn::Matrix teacher =
                    teacher_cache ? *teacher_cache : nn::forward_logits(global_state, spec, anchor_in);
                const auto student = nn::forward_pass(up.state, spec, anchor_in);
                nn::Matrix dka;
                const double lka = anchor::ka_loss_and_dlogits(teacher, student.logits(), up.anchor->dominant, dka);
                const auto gka = nn::backward_pass(up.state, spec, student, dka);
                for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += strategy.beta * gka[i];
                loss += strategy.beta * lka;
            }
            nn::sgd_step(up.state, grad, plan.sgd);
            up.loss_trace.push_back(loss);
        }
        if (hook) hook(epoch, up.state);
    }
    return up;
}

std::vector<double> aggregation_weights(std::span<const ClientUpdate> updates) {
    double total = 0.0;
    for (const auto& u : updates) total += static_cast<double>(u.sample_count);
    if (!(total > 0.0)) throw Error("cannot aggregate: participants hold zero samples");
    std::vector<double> w;
    w.reserve(updates.size());
    for (const auto& u : updates) w.push_back(static_cast<double>(u.sample_count) / total);
    return w;
}

nn::ModelState aggregate(std::span<const ClientUpdate> updates) {
    if (updates.empty()) throw Error("cannot aggregate an empty set of updates");
    const auto& first = updates.front().state;
    for (const auto& u : updates)
        if (u.state.spec_hash != first.spec_hash || u.state.params.size() != first.params.size())
            throw Error("cannot aggregate: client " + std::to_string(u.client_id) + " uses a different network");

    const auto w = aggregation_weights(updates);
    const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
    if (std::abs(wsum - 1.0) > 1e-12) throw NumericError(-1, "aggregation weights do not sum to 1");

    const std::size_t n = first.params.size();
    nn::ModelState out;
    out.spec_hash = first.spec_hash;
    out.params.assign(n, 0.0);
    out.momentum.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0, lo = updates[0].state.params[i], hi = lo;
        for (std::size_t c = 0; c < updates.size(); ++c) {
            const double p = updates[c].state.params[i];
            acc += w[c] * p;
            lo = std::min(lo, p);
            hi = std::max(hi, p);
        }
        // a convex combination stays inside the participants' range; clamp away rounding
        out.params[i] = std::clamp(acc, lo, hi);
    }
    return out;
}

}  // namespace fedka::fl
