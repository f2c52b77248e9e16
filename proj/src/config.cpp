#include "fedka/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include "fedka/error.hpp"

namespace fedka {

using nlohmann::json;

namespace {

// Programmatically built JSON stores small literals as signed integers.
bool is_count(const json& v) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

// Reads one JSON object, recording violations instead of throwing so the user
// sees every problem at once.
class Section {
public:
    Section(const json& parent, const std::string& key, const std::string& path, std::vector<std::string>& errors,
            bool required = false)
        : errors_(errors), path_(path) {
        if (!parent.contains(key)) {
            if (required) errors_.push_back(path + ": required section is missing");
            return;
        }
        const json& v = parent.at(key);
        if (!v.is_object()) {
            errors_.push_back(path + ": must be an object");
            return;
        }
        obj_ = &v;
    }

    Section(const json& root, std::vector<std::string>& errors) : errors_(errors) {
        if (!root.is_object()) {
            errors_.push_back("config: top level must be an object");
            return;
        }
        obj_ = &root;
    }

    ~Section() {
        if (!obj_) return;
        for (const auto& [k, _] : obj_->items())
            if (!seen_.count(k)) errors_.push_back(where(k) + ": unknown key");
    }

    bool present() const { return obj_ != nullptr; }
    const json& raw() const { return *obj_; }

    // Marks a key as known without reading it (handled elsewhere).
    bool has(const std::string& key) {
        seen_.insert(key);
        return obj_ && obj_->contains(key);
    }

    std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    void require(const std::string& key) {
        if (obj_ && !obj_->contains(key)) errors_.push_back(where(key) + ": required field is missing");
    }

    void get(const std::string& key, std::size_t& out) {
        if (!has(key)) return;
        const json& v = obj_->at(key);
        if (is_count(v))
            out = v.get<std::size_t>();
        else
            errors_.push_back(where(key) + ": must be a non-negative integer");
    }

    void get(const std::string& key, std::uint64_t& out, int /*seed tag*/) {
        if (!has(key)) return;
        const json& v = obj_->at(key);
        if (is_count(v))
            out = v.get<std::uint64_t>();
        else
            errors_.push_back(where(key) + ": must be a non-negative integer");
    }

    void get(const std::string& key, std::optional<std::uint64_t>& out) {
        if (!has(key)) return;
        std::uint64_t v = 0;
        get(key, v, 0);
        out = v;
    }

    void get(const std::string& key, double& out) {
        if (!has(key)) return;
        const json& v = obj_->at(key);
        if (v.is_number())
            out = v.get<double>();
        else
            errors_.push_back(where(key) + ": must be a number");
    }

    void get(const std::string& key, bool& out) {
        if (!has(key)) return;
        const json& v = obj_->at(key);
        if (v.is_boolean())
            out = v.get<bool>();
        else
            errors_.push_back(where(key) + ": must be true or false");
    }

    void get(const std::string& key, std::string& out) {
        if (!has(key)) return;
        const json& v = obj_->at(key);
        if (v.is_string())
            out = v.get<std::string>();
        else
            errors_.push_back(where(key) + ": must be a string");
    }

    void get(const std::string& key, std::vector<std::size_t>& out) {
        if (!has(key)) return;
        const json& v = obj_->at(key);
        if (!v.is_array()) {
            errors_.push_back(where(key) + ": must be an array of non-negative integers");
            return;
        }
        out.clear();
        for (const auto& e : v) {
            if (!is_count(e)) {
                errors_.push_back(where(key) + ": must be an array of non-negative integers");
                return;
            }
            out.push_back(e.get<std::size_t>());
        }
    }

    void check(bool ok, const std::string& key, const std::string& why) {
        if (obj_ && !ok) errors_.push_back(where(key) + ": " + why);
    }

private:
    std::vector<std::string>& errors_;
    std::string path_;
    const json* obj_ = nullptr;
    std::set<std::string> seen_;
};

}  // namespace

ExperimentConfig parse_config(const json& j) {
    std::vector<std::string> errors;
    ExperimentConfig cfg;
    {
        Section top(j, errors);
        top.get("name", cfg.name);
        top.get("master_seed", cfg.master_seed, 0);
        top.get("output_dir", cfg.output_dir);
        top.require("dataset");
        top.require("partition");
        top.require("strategy");
        for (const char* known : {"dataset", "partition", "model", "strategy", "training", "reductions", "metrics"})
            top.has(known);

        if (top.present()) {
            Section ds(j, "dataset", "dataset", errors);
            auto& d = cfg.dataset;
            ds.require("kind");
            ds.get("kind", d.kind);
            ds.get("classes", d.classes);
            ds.get("per_class", d.per_class);
            ds.get("test_per_class", d.test_per_class);
            ds.get("dims", d.dims);
            ds.get("separation", d.separation);
            ds.get("train_images", d.train_images);
            ds.get("train_labels", d.train_labels);
            ds.get("test_images", d.test_images);
            ds.get("test_labels", d.test_labels);
            ds.get("seed", d.seed);
            if (ds.present()) {
                ds.check(d.kind.empty() || d.kind == "blobs" || d.kind == "idx", "kind", "must be 'blobs' or 'idx'");
                ds.check(d.classes >= 1, "classes", "must be at least 1");
                if (d.kind == "blobs") {
                    ds.check(d.per_class >= 1, "per_class", "must be at least 1");
                    ds.check(d.test_per_class >= 1, "test_per_class", "must be at least 1");
                    ds.check(d.dims >= 1, "dims", "must be at least 1");
                    ds.check(d.separation >= 0.0, "separation", "must be non-negative");
                } else if (d.kind == "idx") {
                    ds.check(!d.train_images.empty(), "train_images", "required for idx datasets");
                    ds.check(!d.train_labels.empty(), "train_labels", "required for idx datasets");
                    ds.check(!d.test_images.empty(), "test_images", "required for idx datasets");
                    ds.check(!d.test_labels.empty(), "test_labels", "required for idx datasets");
                }
            }

            Section ps(j, "partition", "partition", errors);
            auto& p = cfg.partition;
            ps.require("clients");
            ps.get("clients", p.clients);
            ps.get("alpha", p.alpha);
            ps.get("seed", p.seed);
            ps.get("min_samples", p.min_samples);
            ps.get("max_retries", p.max_retries);
            ps.get("gamma", p.gamma);
            ps.get("file", p.file);
            ps.check(p.clients >= 1, "clients", "must be at least 1");
            ps.check(p.alpha > 0.0, "alpha", "must be positive");
            ps.check(p.gamma > 0.0 && p.gamma < 1.0, "gamma", "must lie in (0, 1)");

            Section ms(j, "model", "model", errors);
            ms.get("kind", cfg.model.kind);
            ms.get("hidden", cfg.model.hidden);
            ms.check(cfg.model.kind == "mlp" || cfg.model.kind == "t_cnn", "kind", "must be 'mlp' or 't_cnn'");
            for (auto h : cfg.model.hidden) ms.check(h >= 1, "hidden", "widths must be positive");

            Section ss(j, "strategy", "strategy", errors);
            auto& s = cfg.strategy;
            std::string name, selection = "random", variant = "full";
            ss.require("name");
            ss.get("name", name);
            ss.get("mu", s.prox_mu);
            ss.get("beta", s.beta);
            ss.get("mu_anchor", s.anchor_cap);
            ss.get("selection", selection);
            ss.get("variant", variant);
            ss.get("cache_teacher_logits", s.cache_teacher_logits);
            if (ss.present()) {
                if (name == "fedavg") s.kind = fl::StrategyKind::fedavg;
                else if (name == "fedprox") s.kind = fl::StrategyKind::fedprox;
                else if (name == "fedka") s.kind = fl::StrategyKind::fedka;
                else if (!name.empty()) ss.check(false, "name", "must be 'fedavg', 'fedprox' or 'fedka'");
                if (name == "fedprox") {
                    ss.check(ss.raw().contains("mu"), "mu", "required for fedprox");
                    ss.check(s.prox_mu >= 0.0, "mu", "must be non-negative");
                }
                ss.check(s.beta >= 0.0, "beta", "must be non-negative");
                ss.check(s.anchor_cap >= 1, "mu_anchor", "must be at least 1");
                try {
                    s.selection = anchor::parse_selection(selection);
                } catch (const Error& e) {
                    ss.check(false, "selection", e.what());
                }
                try {
                    s.variant = anchor::parse_variant(variant);
                } catch (const Error& e) {
                    ss.check(false, "variant", e.what());
                }
            }

            Section ts(j, "training", "training", errors);
            auto& t = cfg.training;
            ts.get("rounds", t.rounds);
            ts.get("local_epochs", t.local_epochs);
            ts.get("batch_size", t.batch_size);
            ts.get("lr", t.lr);
            ts.get("momentum", t.momentum);
            ts.get("weight_decay", t.weight_decay);
            ts.get("participation", t.participation);
            ts.get("parallel_clients", t.parallel_clients);
            ts.get("checkpoint_interval", t.checkpoint_interval);
            ts.check(t.batch_size >= 1, "batch_size", "must be at least 1");
            ts.check(t.lr > 0.0, "lr", "must be positive");
            ts.check(t.momentum >= 0.0 && t.momentum < 1.0, "momentum", "must lie in [0, 1)");
            ts.check(t.weight_decay >= 0.0, "weight_decay", "must be non-negative");
            ts.check(t.participation > 0.0 && t.participation <= 1.0, "participation", "must lie in (0, 1]");

            Section mt(j, "metrics", "metrics", errors);
            auto& m = cfg.metrics;
            mt.get("xi", m.xi);
            mt.get("eval_interval", m.eval_interval);
            mt.get("forgetting", m.forgetting);
            mt.get("intra_epoch", m.intra_epoch);
            mt.check(m.xi > 0.0, "xi", "must be positive");
            mt.check(m.eval_interval >= 1, "eval_interval", "must be at least 1");

            if (j.contains("reductions")) {
                const json& rs = j.at("reductions");
                if (!rs.is_array()) {
                    errors.push_back("reductions: must be an array");
                } else {
                    for (std::size_t i = 0; i < rs.size(); ++i) {
                        const std::string path = "reductions[" + std::to_string(i) + "]";
                        if (!rs[i].is_object()) {
                            errors.push_back(path + ": must be an object");
                            continue;
                        }
                        json holder = {{"r", rs[i]}};
                        Section r(holder, "r", path, errors);
                        data::Reduction red;
                        std::size_t cls = 0;
                        for (const char* k : {"round", "client", "class", "keep"}) r.require(k);
                        r.get("round", red.round);
                        r.get("client", red.client);
                        r.get("class", cls);
                        r.get("keep", red.keep);
                        red.cls = static_cast<int>(cls);
                        r.check(red.round >= 1, "round", "must be at least 1");
                        r.check(red.client < cfg.partition.clients, "client", "is not a valid client id");
                        r.check(cls < cfg.dataset.classes, "class", "is not a valid class id");
                        cfg.reductions.push_back(red);
                    }
                    try {
                        data::validate_schedule(cfg.reductions);
                    } catch (const Error& e) {
                        errors.push_back(std::string("reductions: ") + e.what());
                    }
                }
            }
        }
    }
    if (!errors.empty()) throw ConfigError(std::move(errors));
    return cfg;
}

json to_json(const ExperimentConfig& c) {
    json ds = {{"kind", c.dataset.kind}, {"classes", c.dataset.classes}};
    if (c.dataset.kind == "idx") {
        ds["train_images"] = c.dataset.train_images;
        ds["train_labels"] = c.dataset.train_labels;
        ds["test_images"] = c.dataset.test_images;
        ds["test_labels"] = c.dataset.test_labels;
    } else {
        ds["per_class"] = c.dataset.per_class;
        ds["test_per_class"] = c.dataset.test_per_class;
        ds["dims"] = c.dataset.dims;
        ds["separation"] = c.dataset.separation;
    }
    ds["seed"] = c.dataset.seed.value_or(derive_seed(c.master_seed, "data"));

    json part = {{"clients", c.partition.clients},
                 {"alpha", c.partition.alpha},
                 {"seed", c.partition.seed.value_or(derive_seed(c.master_seed, "partition"))},
                 {"min_samples", c.partition.min_samples},
                 {"max_retries", c.partition.max_retries},
                 {"gamma", c.partition.gamma}};
    if (!c.partition.file.empty()) part["file"] = c.partition.file;

    json strat = {{"name", fl::strategy_name(c.strategy.kind)}};
    switch (c.strategy.kind) {
        case fl::StrategyKind::fedavg: break;
        case fl::StrategyKind::fedprox: strat["mu"] = c.strategy.prox_mu; break;
        case fl::StrategyKind::fedka:
            strat["beta"] = c.strategy.beta;
            strat["mu_anchor"] = c.strategy.anchor_cap;
            strat["selection"] = anchor::selection_name(c.strategy.selection);
            strat["variant"] = anchor::variant_name(c.strategy.variant);
            strat["cache_teacher_logits"] = c.strategy.cache_teacher_logits;
            break;
    }

    json reds = json::array();
    for (const auto& r : c.reductions)
        reds.push_back({{"round", r.round}, {"client", r.client}, {"class", r.cls}, {"keep", r.keep}});

    json model = {{"kind", c.model.kind}};
    if (c.model.kind == "mlp") model["hidden"] = c.model.hidden;

    return {{"name", c.name},
            {"master_seed", c.master_seed},
            {"output_dir", resolve_output_dir(c)},
            {"dataset", ds},
            {"partition", part},
            {"model", model},
            {"strategy", strat},
            {"training",
             {{"rounds", c.training.rounds},
              {"local_epochs", c.training.local_epochs},
              {"batch_size", c.training.batch_size},
              {"lr", c.training.lr},
              {"momentum", c.training.momentum},
              {"weight_decay", c.training.weight_decay},
              {"participation", c.training.participation},
              {"parallel_clients", c.training.parallel_clients},
              {"checkpoint_interval", c.training.checkpoint_interval}}},
            {"reductions", reds},
            {"metrics",
             {{"xi", c.metrics.xi},
              {"eval_interval", c.metrics.eval_interval},
              {"forgetting", c.metrics.forgetting},
              {"intra_epoch", c.metrics.intra_epoch}}}};
}

void apply_override(json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError({"override '" + assignment + "': expected key.path=value"});
    const std::string path = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(text);
    } catch (const json::parse_error&) {
        value = text;
    }
    json* node = &j;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty()) throw ConfigError({"override '" + assignment + "': empty key segment"});
        if (!node->is_object()) throw ConfigError({"override '" + assignment + "': '" + key + "' is not inside an object"});
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        node = &(*node)[key];
        if (node->is_null()) *node = json::object();
        start = dot + 1;
    }
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides,
                             bool require_strategy) {
    std::ifstream in(path);
    if (!in) throw ConfigError({path + ": cannot open config file"});
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError({path + ": " + e.what()});
    }
    for (const auto& o : overrides) apply_override(j, o);
    if (!require_strategy && j.is_object() && !j.contains("strategy")) j["strategy"] = {{"name", "fedavg"}};
    auto cfg = parse_config(j);
    const auto base = std::filesystem::path(path).parent_path();
    auto fix = [&](std::string& p) {
        if (!p.empty() && std::filesystem::path(p).is_relative()) p = (base / p).lexically_normal().string();
    };
    fix(cfg.dataset.train_images);
    fix(cfg.dataset.train_labels);
    fix(cfg.dataset.test_images);
    fix(cfg.dataset.test_labels);
    fix(cfg.partition.file);
    return cfg;
}

std::string resolve_output_dir(const ExperimentConfig& cfg) {
    if (!cfg.output_dir.empty()) return cfg.output_dir;
    const char* root = std::getenv("FEDKA_OUTPUT_ROOT");
    return (std::filesystem::path(root && *root ? root : "runs") / cfg.name).string();
}

}  // namespace fedka
