#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "fedka/config.hpp"
#include "fedka/error.hpp"

using namespace fedka;
using nlohmann::json;

namespace {

json minimal() {
    return json::parse(R"({
        "dataset": {"kind": "blobs"},
        "partition": {"clients": 4},
        "strategy": {"name": "fedavg"}
    })");
}

std::vector<std::string> violations_of(const json& j) {
    try {
        parse_config(j);
    } catch (const ConfigError& e) {
        return e.violations();
    }
    return {};
}

bool mentions(const std::vector<std::string>& v, const std::string& text) {
    for (const auto& s : v)
        if (s.find(text) != std::string::npos) return true;
    return false;
}

}  // namespace

TEST(Config, MinimalConfigUsesProtocolDefaults) {
    const auto cfg = parse_config(minimal());
    EXPECT_EQ(cfg.training.rounds, 100u);
    EXPECT_EQ(cfg.training.local_epochs, 10u);
    EXPECT_EQ(cfg.training.batch_size, 128u);
    EXPECT_EQ(cfg.training.lr, 0.01);
    EXPECT_EQ(cfg.training.momentum, 0.9);
    EXPECT_EQ(cfg.training.weight_decay, 1e-5);
    EXPECT_EQ(cfg.training.participation, 1.0);
    EXPECT_EQ(cfg.strategy.anchor_cap, 10u);
    EXPECT_EQ(cfg.partition.gamma, 0.05);
    EXPECT_EQ(cfg.strategy.selection, anchor::Selection::random);
}

TEST(Config, MissingRequiredFieldsAreAllReported) {
    const auto v = violations_of(json::parse(R"({"dataset": {}, "partition": {}})"));
    EXPECT_TRUE(mentions(v, "dataset.kind: required field is missing"));
    EXPECT_TRUE(mentions(v, "partition.clients: required field is missing"));
    EXPECT_TRUE(mentions(v, "strategy: required field is missing"));
}

TEST(Config, UnknownKeysRejected) {
    auto j = minimal();
    j["training"] = {{"roundz", 3}};
    j["colour"] = "red";
    const auto v = violations_of(j);
    EXPECT_TRUE(mentions(v, "training.roundz: unknown key"));
    EXPECT_TRUE(mentions(v, "colour: unknown key"));
}

TEST(Config, RangeAndTypeViolations) {
    auto j = minimal();
    j["partition"]["alpha"] = -1;
    j["partition"]["gamma"] = 1.0;
    j["training"] = {{"participation", 0.0}, {"lr", "fast"}, {"momentum", 1.0}};
    j["metrics"] = {{"xi", 0}};
    j["strategy"] = {{"name", "fedprox"}};
    const auto v = violations_of(j);
    EXPECT_TRUE(mentions(v, "partition.alpha"));
    EXPECT_TRUE(mentions(v, "partition.gamma"));
    EXPECT_TRUE(mentions(v, "training.participation"));
    EXPECT_TRUE(mentions(v, "training.lr"));
    EXPECT_TRUE(mentions(v, "training.momentum"));
    EXPECT_TRUE(mentions(v, "metrics.xi"));
    EXPECT_TRUE(mentions(v, "strategy.mu: required for fedprox"));
}

TEST(Config, StrategyNamesAndOptions) {
    auto j = minimal();
    j["strategy"] = {{"name", "fedka"}, {"beta", 0.01}, {"mu_anchor", 4}, {"selection", "hard"}, {"variant", "ka_m"}};
    const auto cfg = parse_config(j);
    EXPECT_EQ(cfg.strategy.kind, fl::StrategyKind::fedka);
    EXPECT_EQ(cfg.strategy.beta, 0.01);
    EXPECT_EQ(cfg.strategy.anchor_cap, 4u);
    EXPECT_EQ(cfg.strategy.selection, anchor::Selection::hard);
    EXPECT_EQ(cfg.strategy.variant, anchor::Variant::ka_m);
    j["strategy"] = {{"name", "fedsgd"}, {"variant", "half"}};
    const auto v = violations_of(j);
    EXPECT_TRUE(mentions(v, "strategy.name"));
    EXPECT_TRUE(mentions(v, "strategy.variant"));
}

TEST(Config, ReductionsValidated) {
    auto j = minimal();
    j["reductions"] = json::parse(R"([{"round": 5, "client": 1, "class": 0, "keep": 10},
                                      {"round": 6, "client": 9, "class": 0, "keep": 5},
                                      {"round": 7, "client": 1}])");
    const auto v = violations_of(j);
    EXPECT_TRUE(mentions(v, "reductions[1].client"));
    EXPECT_TRUE(mentions(v, "reductions[2].class: required field is missing"));
    j["reductions"] = json::parse(R"([{"round": 5, "client": 1, "class": 0, "keep": 10},
                                      {"round": 6, "client": 1, "class": 0, "keep": 5}])");
    EXPECT_EQ(parse_config(j).reductions.size(), 2u);
}

TEST(Config, IdxNeedsPaths) {
    auto j = minimal();
    j["dataset"] = {{"kind", "idx"}, {"train_images", "a"}};
    const auto v = violations_of(j);
    EXPECT_TRUE(mentions(v, "dataset.train_labels"));
    EXPECT_FALSE(mentions(v, "dataset.train_images"));
}

TEST(Config, OverridesParseJsonOrFallBackToString) {
    auto j = minimal();
    apply_override(j, "training.rounds=20");
    apply_override(j, "strategy.name=fedka");
    apply_override(j, "model.hidden=[16,8]");
    const auto cfg = parse_config(j);
    EXPECT_EQ(cfg.training.rounds, 20u);
    EXPECT_EQ(cfg.strategy.kind, fl::StrategyKind::fedka);
    EXPECT_EQ(cfg.model.hidden, (std::vector<std::size_t>{16, 8}));
    EXPECT_THROW(apply_override(j, "no-equals-sign"), ConfigError);
}

TEST(Config, ResolvedJsonRoundTrips) {
    auto j = minimal();
    j["strategy"] = {{"name", "fedka"}, {"beta", 0.5}};
    j["master_seed"] = 77;
    j["reductions"] = json::parse(R"([{"round": 2, "client": 0, "class": 1, "keep": 3}])");
    const auto cfg = parse_config(j);
    const auto resolved = to_json(cfg);
    EXPECT_TRUE(resolved["dataset"]["seed"].is_number_unsigned());
    EXPECT_TRUE(resolved["partition"]["seed"].is_number_unsigned());
    EXPECT_EQ(resolved["training"]["batch_size"], 128);
    EXPECT_EQ(to_json(parse_config(resolved)), resolved);
}

TEST(Config, LoadResolvesRelativePaths) {
    const auto dir = std::filesystem::temp_directory_path() / "fedka-config-test";
    std::filesystem::create_directories(dir);
    const auto path = (dir / "exp.json").string();
    std::ofstream(path) << R"({"dataset": {"kind": "idx", "train_images": "d/a", "train_labels": "d/b",
                               "test_images": "/abs/c", "test_labels": "d/d"},
                               "partition": {"clients": 2, "file": "p.csv"}})";
    EXPECT_THROW(load_config(path), ConfigError);  // strategy required by default
    const auto cfg = load_config(path, {"training.rounds=3"}, false);
    EXPECT_EQ(cfg.strategy.kind, fl::StrategyKind::fedavg);
    EXPECT_EQ(cfg.training.rounds, 3u);
    EXPECT_EQ(cfg.dataset.train_images, (dir / "d/a").string());
    EXPECT_EQ(cfg.dataset.test_images, "/abs/c");
    EXPECT_EQ(cfg.partition.file, (dir / "p.csv").string());
    EXPECT_THROW(load_config((dir / "absent.json").string()), ConfigError);
}

TEST(Config, OutputDirDefaultsUnderRoot) {
    auto cfg = parse_config(minimal());
    cfg.name = "demo";
    ::setenv("FEDKA_OUTPUT_ROOT", "/tmp/fk-root", 1);
    EXPECT_EQ(resolve_output_dir(cfg), "/tmp/fk-root/demo");
    ::unsetenv("FEDKA_OUTPUT_ROOT");
    EXPECT_EQ(resolve_output_dir(cfg), "runs/demo");
    cfg.output_dir = "/x/y";
    EXPECT_EQ(resolve_output_dir(cfg), "/x/y");
}
