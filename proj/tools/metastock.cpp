// Command-line front end: synth, ingest, train, evaluate, backtest, probe.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <omp.h>

#include <CLI11.hpp>

#include "metastock/runner.hpp"

namespace fs = std::filesystem;
using namespace metastock;

namespace {

struct GlobalOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    int threads = 0;
};

ExperimentConfig resolve_config(const GlobalOptions& g) {
    ExperimentConfig cfg = g.config.empty() ? config_from_json(nlohmann::json::object()) : load_config(g.config);
    if (g.seed) {
        cfg.seed = *g.seed;
        cfg.meta.seed = *g.seed;
    }
    if (!g.out.empty()) cfg.output = g.out;
    return cfg;
}

fs::path out_dir(const GlobalOptions& g, const ExperimentConfig& cfg) {
    return g.out.empty() ? cfg.output : fs::path(g.out);
}

const std::vector<Sample>& split_samples(const Dataset& data, const std::string& split) {
    if (split == "train") return data.population.subnew_train;
    if (split == "val") return data.population.subnew_val;
    if (split == "test") return data.population.subnew_test;
    if (split == "old") return data.population.old_samples;
    throw std::invalid_argument("unknown split '" + split + "' (old|train|val|test)");
}

void print_metrics(const std::string& label, const ClassificationMetrics& m) {
    std::printf("%-12s ACC %.4f  MCC %.4f (x100 %.2f)  F1 %.4f  n=%zu\n", label.c_str(), m.acc, m.mcc, m.mcc * 100.0,
                m.f1, m.n);
}

int cmd_synth(const GlobalOptions& g, const std::string& regime, std::optional<std::size_t> old_series,
              std::optional<std::size_t> subnew_series, std::optional<std::size_t> old_days) {
    ExperimentConfig cfg = resolve_config(g);
    if (!regime.empty()) cfg.data.synth.regime = parse_regime(regime);
    if (old_series) cfg.data.synth.old_series = *old_series;
    if (subnew_series) cfg.data.synth.subnew_series = *subnew_series;
    if (old_days) cfg.data.synth.old_days = *old_days;
    if (g.seed) cfg.data.synth.seed = *g.seed;
    const fs::path dir = g.out.empty() ? fs::path("synthetic") : fs::path(g.out);
    fs::create_directories(dir);

    const auto series = synthesize_dataset(cfg);
    write_csv(dir / "prices.csv", series);
    write_listing_dates(dir / "listing_dates.csv", series);

    ExperimentConfig csv_cfg = cfg;
    csv_cfg.data.synthetic = false;
    csv_cfg.data.csv = {dir / "prices.csv"};
    csv_cfg.data.listing_dates = dir / "listing_dates.csv";
    csv_cfg.output = dir / "run";
    std::ofstream(dir / "config.json") << config_to_json(csv_cfg).dump(2) << '\n';
    std::printf("wrote %zu series to %s (prices.csv, listing_dates.csv, config.json)\n", series.size(),
                dir.string().c_str());
    return 0;
}

int cmd_ingest(const GlobalOptions& g) {
    const ExperimentConfig cfg = resolve_config(g);
    cfg.validate();
    const Dataset data = load_dataset(cfg);
    const Population& pop = data.population;

    nlohmann::ordered_json summary;
    summary["series"] = data.series.size();
    auto describe = [](const std::vector<Sample>& s) {
        std::size_t ups = 0;
        double diff = 0.0;
        for (const auto& x : s) {
            ups += x.label == 1 ? 1 : 0;
            diff += x.difficulty;
        }
        nlohmann::ordered_json j;
        j["samples"] = s.size();
        j["positive"] = ups;
        j["mean_difficulty"] = s.empty() ? 0.0 : diff / static_cast<double>(s.size());
        return j;
    };
    summary["old"] = describe(pop.old_samples);
    summary["train"] = describe(pop.subnew_train);
    summary["val"] = describe(pop.subnew_val);
    summary["test"] = describe(pop.subnew_test);
    const std::size_t w = cfg.meta.task_size;
    summary["old_tasks"] = pop.old_samples.size() / w;
    std::cout << summary.dump(2) << '\n';

    if (!g.out.empty()) {
        const fs::path dir = g.out;
        fs::create_directories(dir);
        std::ofstream(dir / "ingest.json") << summary.dump(2) << '\n';
        if (pop.old_samples.size() >= w) {
            std::vector<Task> tasks = build_tasks(pop.old_samples, w, cfg.seed);
            compute_weights(tasks);
            write_task_manifest(dir / "task_manifest.jsonl", tasks);
        }
    }
    return 0;
}

void apply_sweep_value(ExperimentConfig& cfg, const std::string& key, double v) {
    if (key == "alpha") cfg.meta.inner_lr = v;
    else if (key == "beta") cfg.meta.meta_lr = v;
    else if (key == "gamma") cfg.meta.adapt_lr = v;
    else if (key == "adapt_steps") cfg.meta.adapt_steps = static_cast<std::size_t>(v);
    else if (key == "epochs") cfg.meta.epochs = static_cast<std::size_t>(v);
    else throw std::invalid_argument("cannot sweep '" + key + "' (alpha|beta|gamma|adapt_steps|epochs)");
}

int cmd_train(const GlobalOptions& g, const std::string& method, std::optional<std::size_t> repeats,
              const std::string& sweep) {
    ExperimentConfig cfg = resolve_config(g);
    if (!method.empty()) {
        cfg.method = parse_method(method);
        cfg.meta.adaptive = cfg.method == Method::metastock;
    }
    if (repeats) cfg.repeats = *repeats;
    cfg.validate();
    const Dataset data = load_dataset(cfg);

    if (sweep.empty()) {
        const ExperimentSummary s = run_experiment(cfg, data);
        for (const auto& seed : s.seeds) print_metrics("test seed " + std::to_string(seed.seed), seed.test);
        print_metrics("test mean", s.mean_test);
        print_metrics("val mean", s.mean_val);
        std::printf("artifacts in %s\n", cfg.output.string().c_str());
        return 0;
    }

    const auto eq = sweep.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--sweep expects key=v1,v2,...");
    const std::string key = sweep.substr(0, eq);
    std::stringstream values(sweep.substr(eq + 1));
    std::string item;
    while (std::getline(values, item, ',')) {
        ExperimentConfig run = cfg;
        apply_sweep_value(run, key, std::stod(item));
        run.output = cfg.output / ("sweep_" + key + "_" + item);
        const ExperimentSummary s = run_experiment(run, data);
        print_metrics(key + "=" + item + " val", s.mean_val);
    }
    return 0;
}

int cmd_evaluate(const GlobalOptions& g, const std::string& checkpoint, const std::string& split) {
    const ExperimentConfig cfg = resolve_config(g);
    cfg.validate();
    const auto model = load_checkpoint(checkpoint);
    const Dataset data = load_dataset(cfg);
    const auto& samples = split_samples(data, split);
    if (samples.empty()) throw std::invalid_argument("split '" + split + "' has no samples");
    const ClassificationMetrics m = evaluate(*model, samples);
    const std::string seed = g.seed ? std::to_string(*g.seed) : std::to_string(cfg.seed);
    const auto rec = metric_record_json({split, fs::path(checkpoint).stem().string(), seed, m});
    std::cout << rec.dump() << '\n';
    if (!g.out.empty()) {
        fs::create_directories(g.out);
        std::ofstream(fs::path(g.out) / "metrics.jsonl", std::ios::app) << rec.dump() << '\n';
    }
    return 0;
}

int cmd_backtest(const GlobalOptions& g, const std::string& checkpoint, const std::string& split) {
    const ExperimentConfig cfg = resolve_config(g);
    cfg.validate();
    const auto model = load_checkpoint(checkpoint);
    const Dataset data = load_dataset(cfg);
    const auto& samples = split_samples(data, split);
    if (samples.empty()) throw std::invalid_argument("split '" + split + "' has no samples");
    const auto preds = predict_labels(forward(*model, make_batch(samples)));
    const TradeLedger ledger = run_strategy(signals_from_predictions(samples, preds), data.series, cfg.backtest);
    const TradingMetrics m = trading_metrics(ledger);
    const auto doc = trading_metrics_json(m);
    std::cout << doc.dump(2) << '\n';
    const fs::path dir = out_dir(g, cfg);
    fs::create_directories(dir);
    write_ledger_csv(dir / "ledger.csv", ledger);
    std::ofstream(dir / "trading.json") << doc.dump(2) << '\n';
    return 0;
}

int cmd_probe(const GlobalOptions& g, const std::string& a, const std::string& b) {
    const ExperimentConfig cfg = resolve_config(g);
    cfg.validate();
    const auto model_a = load_checkpoint(a);
    const auto model_b = load_checkpoint(b);
    const Dataset data = load_dataset(cfg);
    const ProbeReport report = probe_difficulty(cfg, data, *model_a, *model_b);
    std::cout << probe_report_table(report);
    if (!g.out.empty()) {
        fs::create_directories(g.out);
        std::ofstream(fs::path(g.out) / "probe.json") << probe_report_json(report).dump(2) << '\n';
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Difficulty-weighted meta-learning for sub-new stock movement prediction"};
    app.require_subcommand(1);
    GlobalOptions g;
    std::uint64_t seed_value = 0;
    auto* seed_opt = app.add_option("--seed", seed_value, "Base seed")->group("Global");
    app.add_option("--config", g.config, "Experiment config (JSON)")->group("Global");
    app.add_option("--out", g.out, "Output directory")->group("Global");
    app.add_option("--threads", g.threads, "OpenMP threads (0 = runtime default)")->group("Global");
    app.fallthrough();

    std::string regime;
    std::optional<std::size_t> old_series;
    std::optional<std::size_t> subnew_series;
    std::optional<std::size_t> old_days;
    auto* synth = app.add_subcommand("synth", "Write a synthetic dataset as CSV plus a matching config");
    synth->add_option("--regime", regime, "trend | meanrevert | planted");
    synth->add_option("--old-series", old_series);
    synth->add_option("--subnew-series", subnew_series);
    synth->add_option("--old-days", old_days);

    auto* ingest = app.add_subcommand("ingest", "Load data, build samples and report split sizes");

    std::string method;
    std::optional<std::size_t> repeats;
    std::string sweep;
    auto* train = app.add_subcommand("train", "Run the configured experiment for every repeat seed");
    train->add_option("--method", method, "metastock | reptile | transfer | scratch");
    train->add_option("--repeats", repeats);
    train->add_option("--sweep", sweep, "key=v1,v2,... over alpha|beta|gamma|adapt_steps|epochs");

    std::string checkpoint;
    std::string split = "test";
    auto* evaluate_cmd = app.add_subcommand("evaluate", "Classification metrics of a checkpoint");
    evaluate_cmd->add_option("--checkpoint", checkpoint)->required();
    evaluate_cmd->add_option("--split", split, "old | train | val | test");

    auto* backtest = app.add_subcommand("backtest", "Trade a checkpoint's predictions and report trading metrics");
    backtest->add_option("--checkpoint", checkpoint)->required();
    backtest->add_option("--split", split, "old | train | val | test");

    std::string model_a;
    std::string model_b;
    auto* probe = app.add_subcommand("probe", "Per-difficulty-tercile gains of model B over model A");
    probe->add_option("--model-a", model_a)->required();
    probe->add_option("--model-b", model_b)->required();

    CLI11_PARSE(app, argc, argv);
    if (seed_opt->count() > 0) g.seed = seed_value;
    if (g.threads > 0) omp_set_num_threads(g.threads);

    try {
        if (*synth) return cmd_synth(g, regime, old_series, subnew_series, old_days);
        if (*ingest) return cmd_ingest(g);
        if (*train) return cmd_train(g, method, repeats, sweep);
        if (*evaluate_cmd) return cmd_evaluate(g, checkpoint, split);
        if (*backtest) return cmd_backtest(g, checkpoint, split);
        if (*probe) return cmd_probe(g, model_a, model_b);
    } catch (const TrainingDiverged& e) {
        std::fprintf(stderr, "training diverged: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
