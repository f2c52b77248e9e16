#include "fedka/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "fedka/error.hpp"
#include "fedka/rng.hpp"

namespace fedka::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path);
    return out;
}

void write_text(const std::string& path, const std::string& text) {
    auto out = open_out(path);
    out << text;
}

void write_checkpoint(const std::string& path, const nn::ModelState& state) {
    auto out = open_out(path);
    nn::write_state(out, state);
}

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json per_class_json(const metrics::AccuracyReport& rep) {
    json a = json::array();
    for (const auto& v : rep.per_class) a.push_back(v ? json(*v) : json(nullptr));
    return a;
}

void write_epoch_header(std::ostream& out) { out << "round,client,epoch,class,role,acc_global,acc_local,tau\n"; }

void append_epoch(std::ostream& out, const EpochForgettingRecord& e) {
    const auto& r = e.record;
    out << r.round << ',' << r.client << ',' << e.epoch << ',' << r.cls << ',' << data::role_name(r.role) << ','
        << metrics::format_number(r.acc_global) << ',' << metrics::format_number(r.acc_local) << ','
        << metrics::format_number(r.tau) << '\n';
}

}  // namespace

std::uint64_t dataset_seed(const ExperimentConfig& cfg) {
    return cfg.dataset.seed.value_or(derive_seed(cfg.master_seed, "data"));
}

std::uint64_t partition_seed(const ExperimentConfig& cfg) {
    return cfg.partition.seed.value_or(derive_seed(cfg.master_seed, "partition"));
}

std::pair<data::LabeledDataset, data::LabeledDataset> load_datasets(const ExperimentConfig& cfg) {
    const auto& d = cfg.dataset;
    if (d.kind == "idx")
        return {data::load_idx(d.train_images, d.train_labels, d.classes),
                data::load_idx(d.test_images, d.test_labels, d.classes)};
    const auto seed = dataset_seed(cfg);
    return {data::synth_blobs(d.classes, d.per_class, d.dims, d.separation, derive_seed(seed, "train")),
            data::synth_blobs(d.classes, d.test_per_class, d.dims, d.separation, derive_seed(seed, "test"))};
}

std::vector<data::ClientShard> make_partition(const ExperimentConfig& cfg, const data::LabeledDataset& train) {
    const auto& p = cfg.partition;
    if (!p.file.empty()) {
        std::ifstream in(p.file);
        if (!in) throw Error("cannot open partition file " + p.file);
        const auto assignment = data::read_assignment_csv(in, train);
        return data::shards_from_assignment(train, assignment, p.clients, p.gamma);
    }
    data::PartitionSpec spec;
    spec.client_count = p.clients;
    spec.alpha = p.alpha;
    spec.seed = partition_seed(cfg);
    spec.min_samples_per_client = p.min_samples;
    spec.max_retries = p.max_retries;
    return data::dirichlet_partition(train, spec, p.gamma);
}

nn::NetworkSpec make_spec(const ExperimentConfig& cfg, const data::LabeledDataset& train) {
    if (cfg.model.kind == "t_cnn") return nn::t_cnn(train.input_shape, train.class_count);
    return nn::mlp(train.feature_size(), cfg.model.hidden, train.class_count);
}

Environment prepare(const ExperimentConfig& cfg) {
    Environment env;
    std::tie(env.train, env.test) = load_datasets(cfg);
    env.shards = make_partition(cfg, env.train);
    if (cfg.strategy.kind == fl::StrategyKind::fedka)
        env.shared = anchor::build_shared_dataset(env.train, env.shards, derive_seed(cfg.master_seed, "shared"));
    env.spec = make_spec(cfg, env.train);
    env.spec.validate();
    Rng rng = make_rng(cfg.master_seed, "init");
    env.initial = nn::init_state(env.spec, rng);
    return env;
}

RunResult simulate(const ExperimentConfig& cfg, const Environment& env, const RoundObserver& observer) {
    const auto& t = cfg.training;
    fl::LocalPlan plan;
    plan.epochs = t.local_epochs;
    plan.batch_size = t.batch_size;
    plan.sgd = {t.lr, t.momentum, t.weight_decay};

    fl::LocalContext ctx;
    ctx.train = &env.train;
    ctx.spec = &env.spec;
    ctx.shared = &env.shared;
    ctx.seed = cfg.master_seed;

    RunResult res;
    nn::ModelState global = env.initial;
    std::vector<data::ClientShard> shards = env.shards;
    std::optional<metrics::AccuracyReport> global_eval;  // accuracy of `global`, when known
    const bool measure = cfg.metrics.forgetting || cfg.metrics.intra_epoch;

    for (std::size_t r = 1; r <= t.rounds; ++r) {
        try {
            for (auto& s : shards) s = data::apply_reduction_schedule(env.train, s, cfg.reductions, r);

            RoundSummary sum;
            sum.round = r;
            sum.participants = fl::sample_participants(shards.size(), t.participation, cfg.master_seed, r);
            if (measure && !global_eval) global_eval = metrics::evaluate(global, env.spec, env.test);

            const std::size_t m = sum.participants.size();
            std::vector<fl::ClientUpdate> updates(m);
            std::vector<std::vector<metrics::ForgettingRecord>> records(m);
            std::vector<std::vector<EpochForgettingRecord>> epoch_records(m);
            std::vector<std::exception_ptr> errors(m);
            ctx.round = r;

            auto train_one = [&](std::size_t slot) {
                const auto& shard = shards[sum.participants[slot]];
                try {
                    fl::EpochHook hook;
                    if (cfg.metrics.intra_epoch)
                        hook = [&](std::size_t epoch, const nn::ModelState& st) {
                            const auto local = metrics::evaluate(st, env.spec, env.test);
                            for (auto& rec : metrics::measure_local_forgetting(shard, *global_eval, local, r,
                                                                               cfg.metrics.xi))
                                epoch_records[slot].push_back({epoch, rec});
                        };
                    updates[slot] = fl::local_train(ctx, shard, global, plan, cfg.strategy, hook);
                    if (cfg.metrics.forgetting) {
                        const auto local = metrics::evaluate(updates[slot].state, env.spec, env.test);
                        records[slot] = metrics::measure_local_forgetting(shard, *global_eval, local, r, cfg.metrics.xi);
                    }
                } catch (const std::exception& e) {
                    errors[slot] = std::make_exception_ptr(
                        Error("client " + std::to_string(shard.client_id) + ": " + e.what()));
                }
            };

            if (t.parallel_clients) {
#pragma omp parallel for schedule(dynamic, 1)
                for (std::size_t s = 0; s < m; ++s) train_one(s);
            } else {
                for (std::size_t s = 0; s < m; ++s) train_one(s);
            }
            for (const auto& e : errors)
                if (e) std::rethrow_exception(e);

            sum.weights = fl::aggregation_weights(updates);
            global = fl::aggregate(updates);

            global_eval.reset();
            if (r % cfg.metrics.eval_interval == 0 || r == t.rounds) {
                metrics::RoundRecord rec{r, metrics::evaluate(global, env.spec, env.test)};
                global_eval = rec.accuracy;
                sum.evaluation = rec;
                res.rounds.push_back(rec);
            }

            for (std::size_t s = 0; s < m; ++s) {
                const auto& u = updates[s];
                ClientRecord cr;
                cr.round = r;
                cr.client = u.client_id;
                cr.samples = u.sample_count;
                cr.final_loss = u.loss_trace.empty() ? std::numeric_limits<double>::quiet_NaN() : u.loss_trace.back();
                sum.clients.push_back(cr);
                if (u.anchor) sum.anchors.push_back(*u.anchor);
                sum.forgetting.insert(sum.forgetting.end(), records[s].begin(), records[s].end());
                sum.epoch_forgetting.insert(sum.epoch_forgetting.end(), epoch_records[s].begin(),
                                            epoch_records[s].end());
            }
            res.forgetting.insert(res.forgetting.end(), sum.forgetting.begin(), sum.forgetting.end());
            res.clients.insert(res.clients.end(), sum.clients.begin(), sum.clients.end());
            res.rounds_completed = r;

            sum.updates = &updates;
            sum.global = &global;
            if (observer) observer(sum);
        } catch (const std::exception& e) {
            throw Error("round " + std::to_string(r) + ": " + e.what());
        }
    }
    res.final_state = std::move(global);
    return res;
}

RunPaths run_paths(const std::string& root) {
    const fs::path p(root);
    RunPaths rp;
    rp.root = root;
    rp.manifest = (p / "manifest.json").string();
    rp.config = (p / "config.json").string();
    rp.spec = (p / "model.spec").string();
    rp.summary = (p / "summary.json").string();
    rp.rounds_csv = (p / "metrics" / "rounds.csv").string();
    rp.forgetting_csv = (p / "metrics" / "forgetting.csv").string();
    rp.clients_csv = (p / "metrics" / "clients.csv").string();
    rp.epochs_csv = (p / "metrics" / "forgetting_epochs.csv").string();
    rp.anchors_csv = (p / "anchors.csv").string();
    rp.checkpoints = (p / "checkpoints").string();
    rp.partition_dir = (p / "partition").string();
    return rp;
}

void write_partition(const std::string& dir, const data::LabeledDataset& train,
                     const std::vector<data::ClientShard>& shards) {
    fs::create_directories(dir);
    auto counts = open_out((fs::path(dir) / "counts.csv").string());
    data::write_count_matrix_csv(counts, shards, train.class_count);
    auto roles = open_out((fs::path(dir) / "roles.csv").string());
    data::write_roles_csv(roles, shards);
    auto assign = open_out((fs::path(dir) / "assignment.csv").string());
    data::write_assignment_csv(assign, train, data::assignment_of(shards, train.size()));
}

void write_clients_header(std::ostream& out) { out << "round,client,samples,final_loss\n"; }

void append_client(std::ostream& out, const ClientRecord& c) {
    out << c.round << ',' << c.client << ',' << c.samples << ','
        << metrics::format_number(c.final_loss) << '\n';
}

RunResult run_experiment(const ExperimentConfig& cfg, const std::function<void(const std::string&)>& progress) {
    const auto started = std::chrono::steady_clock::now();
    const RunPaths rp = run_paths(resolve_output_dir(cfg));
    fs::create_directories(fs::path(rp.rounds_csv).parent_path());
    fs::create_directories(rp.checkpoints);

    const json resolved = to_json(cfg);
    write_text(rp.config, resolved.dump(2) + "\n");

    json manifest = {{"name", cfg.name},
                     {"master_seed", cfg.master_seed},
                     {"version", kVersion},
                     {"started_at", utc_now()},
                     {"status", "running"},
                     {"rounds_completed", 0},
                     {"config", resolved}};
    auto save_manifest = [&] {
        manifest["wall_time_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        write_text(rp.manifest, manifest.dump(2) + "\n");
    };
    save_manifest();

    auto fail = [&](const std::exception& e) {
        manifest["status"] = "failed";
        manifest["error"] = e.what();
        save_manifest();
    };
    Environment env;
    try {
        env = prepare(cfg);
    } catch (const std::exception& e) {
        fail(e);
        throw;
    }
    manifest["train_hash"] = hex64(env.train.content_hash());
    manifest["test_hash"] = hex64(env.test.content_hash());
    manifest["spec_hash"] = hex64(env.spec.hash());
    save_manifest();

    write_text(rp.spec, nn::spec_to_text(env.spec));
    write_partition(rp.partition_dir, env.train, env.shards);
    write_checkpoint((fs::path(rp.checkpoints) / "initial.bin").string(), env.initial);

    auto rounds = open_out(rp.rounds_csv);
    auto forgetting = open_out(rp.forgetting_csv);
    auto clients = open_out(rp.clients_csv);
    metrics::write_rounds_header(rounds, env.train.class_count);
    metrics::write_forgetting_header(forgetting);
    write_clients_header(clients);
    std::ofstream epochs, anchors;
    if (cfg.metrics.intra_epoch) {
        epochs = open_out(rp.epochs_csv);
        write_epoch_header(epochs);
    }
    const bool fedka = cfg.strategy.kind == fl::StrategyKind::fedka;
    if (fedka) {
        anchors = open_out(rp.anchors_csv);
        anchor::write_anchor_log_header(anchors);
    }

    auto observer = [&](const RoundSummary& s) {
        if (s.evaluation) metrics::append_round(rounds, *s.evaluation);
        for (const auto& f : s.forgetting) metrics::append_forgetting(forgetting, f);
        for (const auto& c : s.clients) append_client(clients, c);
        for (const auto& e : s.epoch_forgetting) append_epoch(epochs, e);
        for (const auto& a : s.anchors) anchor::append_anchor_log(anchors, a, cfg.strategy.selection);
        // single writer at the round barrier; flushing keeps partial runs readable
        rounds.flush();
        forgetting.flush();
        clients.flush();
        if (epochs.is_open()) epochs.flush();
        if (anchors.is_open()) anchors.flush();

        const std::size_t every = cfg.training.checkpoint_interval;
        if (every && s.round % every == 0) {
            char name[32];
            std::snprintf(name, sizeof name, "round_%04zu.bin", s.round);
            write_checkpoint((fs::path(rp.checkpoints) / name).string(), *s.global);
        }
        if (progress) {
            double loss = 0.0;
            for (const auto& c : s.clients) loss += c.final_loss;
            std::ostringstream line;
            line << "round " << s.round << '/' << cfg.training.rounds << "  clients " << s.participants.size()
                 << "  loss " << metrics::format_number(s.clients.empty() ? 0.0 : loss / s.clients.size());
            if (s.evaluation) line << "  acc " << metrics::format_number(s.evaluation->accuracy.global);
            progress(line.str());
        }
        manifest["rounds_completed"] = s.round;
    };

    RunResult res;
    try {
        res = simulate(cfg, env, observer);
    } catch (const std::exception& e) {
        fail(e);
        throw;
    }

    write_checkpoint((fs::path(rp.checkpoints) / "final.bin").string(), res.final_state);

    const auto final_eval = metrics::evaluate(res.final_state, env.spec, env.test);
    metrics::Curve curve;
    for (const auto& r : res.rounds) curve.emplace_back(r.round, r.accuracy.global);
    json summary = {{"name", cfg.name},
                    {"strategy", fl::strategy_name(cfg.strategy.kind)},
                    {"rounds_completed", res.rounds_completed},
                    {"final_accuracy", final_eval.global},
                    {"final_per_class", per_class_json(final_eval)}};
    if (const auto hit = metrics::rounds_to_target(curve, final_eval.global))
        summary["rounds_to_final_accuracy"] = *hit;
    else
        summary["rounds_to_final_accuracy"] = nullptr;
    write_text(rp.summary, summary.dump(2) + "\n");

    manifest["status"] = "completed";
    manifest["rounds_completed"] = res.rounds_completed;
    save_manifest();
    return res;
}

}  // namespace fedka::experiment
