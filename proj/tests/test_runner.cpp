#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "metastock/runner.hpp"

using namespace metastock;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_SUITE("runner") {

TEST_CASE("config json round trip") {
    const auto doc = nlohmann::json::parse(R"({
        "data": {"synthetic": {"regime": "trend", "old_series": 2, "seed": 3}, "max_old": 50},
        "backbone": {"arch": "rescnn1d", "width": 7},
        "meta": {"K": 2, "B": 3, "C": 16, "W": 32, "alpha": 0.5},
        "method": "transfer", "repeats": 2, "seed": 9
    })");
    const auto cfg = config_from_json(doc);
    CHECK(cfg.data.synth.regime == Regime::trend);
    CHECK(cfg.data.max_old == 50);
    CHECK(cfg.backbone.arch == Architecture::rescnn1d);
    CHECK(cfg.meta.inner_steps == 2);
    CHECK(cfg.meta.inner_lr == 0.5);
    CHECK(cfg.method == Method::transfer);
    CHECK(!cfg.meta.adaptive);  // only the metastock method weights tasks
    const auto again = config_from_json(nlohmann::json::parse(config_to_json(cfg).dump()));
    CHECK(config_to_json(again).dump() == config_to_json(cfg).dump());
    CHECK_THROWS(config_from_json(nlohmann::json::parse(R"({"method": "nope"})")));
}

TEST_CASE("synthetic dataset respects the split") {
    ExperimentConfig cfg;
    cfg.data.synth.old_series = 2;
    cfg.data.synth.old_days = 120;
    cfg.data.synth.subnew_series = 2;
    cfg.data.max_subnew_test = 10;
    const auto data = load_dataset(cfg);
    CHECK(!data.population.old_samples.empty());
    CHECK(data.population.subnew_test.size() == 10);
    for (const auto& s : data.population.old_samples) {
        CHECK(s.anchor_date <= cfg.split.old_range.last);
        CHECK(s.difficulty > 0.0);
    }
}

TEST_CASE("experiment writes its reports deterministically") {
    ExperimentConfig cfg;
    cfg.data.synth.old_series = 2;
    cfg.data.synth.old_days = 120;
    cfg.data.synth.subnew_series = 2;
    cfg.backbone.width = 4;
    cfg.meta.batch_size = 8;
    cfg.meta.task_size = 24;
    cfg.meta.epochs = 2;
    cfg.repeats = 2;
    const fs::path root = fs::temp_directory_path() / "metastock_runner_test";
    fs::remove_all(root);
    cfg.output = root / "a";
    const auto s1 = run_experiment(cfg);
    cfg.output = root / "b";
    run_experiment(cfg);
    CHECK(s1.seeds.size() == 2);
    const std::string a = slurp(root / "a" / "metrics.jsonl");
    CHECK(!a.empty());
    CHECK(a == slurp(root / "b" / "metrics.jsonl"));
    for (const char* f : {"config.json", "model.ckpt", "epochs.jsonl", "metrics.jsonl", "ledger.csv", "trading.json"}) {
        CHECK(fs::exists(root / "a" / "seed_0" / f));
    }
    const auto model = load_checkpoint(root / "a" / "seed_1" / "model.ckpt");
    CHECK(model->spec() == cfg.backbone);
}

TEST_CASE("probe splits the test tasks into terciles") {
    ExperimentConfig cfg;
    cfg.data.synth.old_series = 2;
    cfg.data.synth.old_days = 120;
    cfg.data.synth.subnew_series = 3;
    cfg.probe_task_size = 10;
    const auto data = load_dataset(cfg);
    auto a = make_backbone(cfg.backbone);
    auto b = make_backbone(cfg.backbone);
    a->init_glorot(1);
    b->init_glorot(2);
    const auto report = probe_difficulty(cfg, data, *a, *b);
    REQUIRE(report.rows.size() == 3);
    CHECK(report.rows[0].group == "Easy");
    CHECK(report.rows[2].group == "Hard");
    CHECK(probe_report_table(report).find("Medium") != std::string::npos);
}

TEST_CASE("signals follow predictions") {
    std::vector<Sample> s(2);
    s[0].symbol = "A";
    s[1].symbol = "B";
    const std::vector<int> pred{1, 0};
    const auto sig = signals_from_predictions(s, pred);
    REQUIRE(sig.size() == 2);
    CHECK(sig[0].up);
    CHECK(!sig[1].up);
}

}  // TEST_SUITE
