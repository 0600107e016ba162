#include "metastock/runner.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "metastock/tasking.hpp"

namespace metastock {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

Method parse_method(std::string_view name) {
    if (name == "metastock") return Method::metastock;
    if (name == "reptile") return Method::reptile;
    if (name == "transfer") return Method::transfer;
    if (name == "scratch") return Method::scratch;
    throw std::invalid_argument("unknown method '" + std::string(name) + "'");
}

std::string_view method_name(Method method) {
    switch (method) {
        case Method::metastock: return "metastock";
        case Method::reptile: return "reptile";
        case Method::transfer: return "transfer";
        case Method::scratch: return "scratch";
    }
    return "?";
}

void ExperimentConfig::validate() const {
    split.validate();
    meta.validate();
    if (repeats < 1) throw std::invalid_argument("repeats must be at least 1");
    if (samples.window < 2) throw std::invalid_argument("window length must be at least 2");
    if (samples.features.dimension() == 0) throw std::invalid_argument("at least one feature must be enabled");
    if (backbone.window != samples.window || backbone.channels != samples.features.dimension()) {
        throw std::invalid_argument("backbone input shape does not match the sample window");
    }
    if (wavelet.levels < 1) throw std::invalid_argument("wavelet levels must be at least 1");
    if (!data.synthetic) {
        if (data.csv.empty()) throw std::invalid_argument("data.csv lists no files");
        for (const auto& p : data.csv) {
            if (!fs::exists(p)) throw std::invalid_argument("data file not found: " + p.string());
        }
        if (data.listing_dates && !fs::exists(*data.listing_dates)) {
            throw std::invalid_argument("listing-date file not found: " + data.listing_dates->string());
        }
    }
}

namespace {

DateRange range_from_json(const json& j) {
    if (!j.is_array() || j.size() != 2) throw std::invalid_argument("date range must be [\"start\", \"end\"]");
    return {parse_date(j[0].get<std::string>()), parse_date(j[1].get<std::string>())};
}

ordered_json range_to_json(const DateRange& r) { return ordered_json::array({format_date(r.first), format_date(r.last)}); }

template <typename T>
void read(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace

ExperimentConfig config_from_json(const json& doc) {
    ExperimentConfig cfg;
    if (doc.contains("data")) {
        const json& d = doc.at("data");
        std::string source = "synthetic";
        read(d, "source", source);
        if (source != "synthetic" && source != "csv") throw std::invalid_argument("data.source must be synthetic or csv");
        cfg.data.synthetic = source == "synthetic";
        if (d.contains("csv")) {
            for (const auto& p : d.at("csv")) cfg.data.csv.emplace_back(p.get<std::string>());
        }
        if (d.contains("listing_dates")) cfg.data.listing_dates = d.at("listing_dates").get<std::string>();
        if (d.contains("schema")) {
            const json& s = d.at("schema");
            read(s, "symbol", cfg.data.schema.symbol);
            read(s, "date", cfg.data.schema.date);
            read(s, "open", cfg.data.schema.open);
            read(s, "high", cfg.data.schema.high);
            read(s, "low", cfg.data.schema.low);
            read(s, "close", cfg.data.schema.close);
            read(s, "adj_close", cfg.data.schema.adj_close);
            read(s, "volume", cfg.data.schema.volume);
        }
        if (d.contains("synthetic")) {
            const json& s = d.at("synthetic");
            if (s.contains("regime")) cfg.data.synth.regime = parse_regime(s.at("regime").get<std::string>());
            read(s, "old_series", cfg.data.synth.old_series);
            read(s, "old_days", cfg.data.synth.old_days);
            read(s, "subnew_series", cfg.data.synth.subnew_series);
            read(s, "motif_probability", cfg.data.synth.motif_probability);
            read(s, "reversal_probability", cfg.data.synth.reversal_probability);
            read(s, "seed", cfg.data.synth.seed);
        }
        read(d, "max_old", cfg.data.max_old);
        read(d, "max_subnew_train", cfg.data.max_subnew_train);
        read(d, "max_subnew_val", cfg.data.max_subnew_val);
        read(d, "max_subnew_test", cfg.data.max_subnew_test);
    }
    if (doc.contains("split")) {
        const json& s = doc.at("split");
        if (s.contains("old")) cfg.split.old_range = range_from_json(s.at("old"));
        if (s.contains("train")) cfg.split.subnew_train = range_from_json(s.at("train"));
        if (s.contains("val")) cfg.split.subnew_val = range_from_json(s.at("val"));
        if (s.contains("test")) cfg.split.subnew_test = range_from_json(s.at("test"));
        read(s, "pos_threshold", cfg.split.thresholds.positive_pct);
        read(s, "neg_threshold", cfg.split.thresholds.negative_pct);
    }
    cfg.samples.thresholds = cfg.split.thresholds;
    if (doc.contains("samples")) {
        const json& s = doc.at("samples");
        read(s, "window", cfg.samples.window);
        read(s, "log_return", cfg.samples.features.log_return);
        read(s, "log_volume", cfg.samples.features.log_volume);
    }
    if (doc.contains("wavelet")) {
        const json& w = doc.at("wavelet");
        if (w.contains("family")) cfg.wavelet.family = wavelet::parse_family(w.at("family").get<std::string>());
        read(w, "levels", cfg.wavelet.levels);
    }
    cfg.backbone.window = cfg.samples.window;
    cfg.backbone.channels = cfg.samples.features.dimension();
    if (doc.contains("backbone")) {
        const json& b = doc.at("backbone");
        if (b.contains("arch")) cfg.backbone.arch = parse_architecture(b.at("arch").get<std::string>());
        read(b, "width", cfg.backbone.width);
        read(b, "kernel", cfg.backbone.kernel);
    }
    if (doc.contains("meta")) {
        const json& m = doc.at("meta");
        read(m, "K", cfg.meta.inner_steps);
        read(m, "B", cfg.meta.meta_batch);
        read(m, "C", cfg.meta.batch_size);
        read(m, "W", cfg.meta.task_size);
        read(m, "epochs", cfg.meta.epochs);
        read(m, "alpha", cfg.meta.inner_lr);
        read(m, "beta", cfg.meta.meta_lr);
        read(m, "gamma", cfg.meta.adapt_lr);
        read(m, "adapt_steps", cfg.meta.adapt_steps);
        read(m, "weight_decay", cfg.meta.weight_decay);
        if (m.contains("weight_scope")) cfg.meta.weight_scope = parse_weight_scope(m.at("weight_scope").get<std::string>());
        if (m.contains("update_mode")) cfg.meta.update_mode = parse_update_mode(m.at("update_mode").get<std::string>());
        if (m.contains("inner_optimizer")) {
            cfg.meta.inner_optimizer = parse_optimizer(m.at("inner_optimizer").get<std::string>());
        }
        if (m.contains("adapt_optimizer")) {
            cfg.meta.adapt_optimizer = parse_optimizer(m.at("adapt_optimizer").get<std::string>());
        }
        if (m.contains("reduction")) cfg.meta.reduction = parse_reduction(m.at("reduction").get<std::string>());
    }
    if (doc.contains("method")) cfg.method = parse_method(doc.at("method").get<std::string>());
    read(doc, "repeats", cfg.repeats);
    read(doc, "seed", cfg.seed);
    if (doc.contains("output")) cfg.output = doc.at("output").get<std::string>();
    if (doc.contains("backtest")) read(doc.at("backtest"), "cost_bps", cfg.backtest.cost_bps);
    if (doc.contains("probe")) read(doc.at("probe"), "task_size", cfg.probe_task_size);
    cfg.meta.adaptive = cfg.method == Method::metastock;
    cfg.meta.seed = cfg.seed;
    return cfg;
}

ordered_json config_to_json(const ExperimentConfig& cfg) {
    ordered_json doc;
    ordered_json data;
    data["source"] = cfg.data.synthetic ? "synthetic" : "csv";
    if (cfg.data.synthetic) {
        const auto& s = cfg.data.synth;
        data["synthetic"] = {{"regime", regime_name(s.regime)},     {"old_series", s.old_series},
                             {"old_days", s.old_days},              {"subnew_series", s.subnew_series},
                             {"motif_probability", s.motif_probability},
                             {"reversal_probability", s.reversal_probability}, {"seed", s.seed}};
    } else {
        ordered_json paths = ordered_json::array();
        for (const auto& p : cfg.data.csv) paths.push_back(fs::absolute(p).string());
        data["csv"] = paths;
        if (cfg.data.listing_dates) data["listing_dates"] = fs::absolute(*cfg.data.listing_dates).string();
        const auto& sc = cfg.data.schema;
        data["schema"] = {{"symbol", sc.symbol}, {"date", sc.date},       {"open", sc.open},
                          {"high", sc.high},     {"low", sc.low},         {"close", sc.close},
                          {"adj_close", sc.adj_close}, {"volume", sc.volume}};
    }
    data["max_old"] = cfg.data.max_old;
    data["max_subnew_train"] = cfg.data.max_subnew_train;
    data["max_subnew_val"] = cfg.data.max_subnew_val;
    data["max_subnew_test"] = cfg.data.max_subnew_test;
    doc["data"] = data;
    doc["split"] = {{"old", range_to_json(cfg.split.old_range)},
                    {"train", range_to_json(cfg.split.subnew_train)},
                    {"val", range_to_json(cfg.split.subnew_val)},
                    {"test", range_to_json(cfg.split.subnew_test)},
                    {"pos_threshold", cfg.split.thresholds.positive_pct},
                    {"neg_threshold", cfg.split.thresholds.negative_pct}};
    doc["samples"] = {{"window", cfg.samples.window},
                      {"log_return", cfg.samples.features.log_return},
                      {"log_volume", cfg.samples.features.log_volume}};
    doc["wavelet"] = {{"family", wavelet::family_name(cfg.wavelet.family)}, {"levels", cfg.wavelet.levels}};
    doc["backbone"] = {{"arch", architecture_name(cfg.backbone.arch)},
                       {"width", cfg.backbone.width},
                       {"kernel", cfg.backbone.kernel}};
    const MetaConfig& m = cfg.meta;
    doc["meta"] = {{"K", m.inner_steps},
                   {"B", m.meta_batch},
                   {"C", m.batch_size},
                   {"W", m.task_size},
                   {"epochs", m.epochs},
                   {"alpha", m.inner_lr},
                   {"beta", m.meta_lr},
                   {"gamma", m.adapt_lr},
                   {"adapt_steps", m.adapt_steps},
                   {"weight_decay", m.weight_decay},
                   {"weight_scope", weight_scope_name(m.weight_scope)},
                   {"update_mode", update_mode_name(m.update_mode)},
                   {"inner_optimizer", optimizer_name(m.inner_optimizer)},
                   {"adapt_optimizer", optimizer_name(m.adapt_optimizer)},
                   {"reduction", reduction_name(m.reduction)}};
    doc["method"] = method_name(cfg.method);
    doc["repeats"] = cfg.repeats;
    doc["seed"] = cfg.seed;
    doc["output"] = cfg.output.string();
    doc["backtest"] = {{"cost_bps", cfg.backtest.cost_bps}};
    doc["probe"] = {{"task_size", cfg.probe_task_size}};
    return doc;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot read config " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument("config " + path.string() + " is not valid JSON: " + e.what());
    }
    // Relative data paths resolve against the config file's directory.
    const fs::path base = path.parent_path();
    if (doc.contains("data")) {
        json& d = doc["data"];
        if (d.contains("csv")) {
            for (auto& p : d["csv"]) {
                const fs::path rel = p.get<std::string>();
                if (rel.is_relative()) p = (base / rel).string();
            }
        }
        if (d.contains("listing_dates")) {
            const fs::path rel = d["listing_dates"].get<std::string>();
            if (rel.is_relative()) d["listing_dates"] = (base / rel).string();
        }
    }
    return config_from_json(doc);
}

namespace {

std::size_t weekdays_between(Date first, Date last) {
    std::size_t n = 0;
    for (Date d = first; d <= last; d += std::chrono::days{1}) {
        const std::chrono::weekday wd{d};
        if (wd != std::chrono::Saturday && wd != std::chrono::Sunday) ++n;
    }
    return n;
}

void subsample(std::vector<Sample>& samples, std::size_t cap, std::uint64_t seed) {
    if (cap == 0 || samples.size() <= cap) return;
    std::vector<std::size_t> idx(samples.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(idx);
    idx.resize(cap);
    std::sort(idx.begin(), idx.end());
    std::vector<Sample> kept;
    kept.reserve(cap);
    for (std::size_t i : idx) kept.push_back(std::move(samples[i]));
    samples = std::move(kept);
}

}  // namespace

std::vector<StockSeries> synthesize_dataset(const ExperimentConfig& cfg) {
    const SyntheticDataSpec& spec = cfg.data.synth;
    SynthOptions old_opts;
    old_opts.n_series = spec.old_series;
    old_opts.n_days = spec.old_days;
    old_opts.regime = spec.regime;
    old_opts.seed = spec.seed;
    old_opts.motif_probability = spec.motif_probability;
    old_opts.reversal_probability = spec.reversal_probability;
    old_opts.symbol_prefix = "OLD";
    // End the old histories just before the sub-new year.
    const auto span_days = static_cast<int>(spec.old_days * 7 / 5 + 7);
    old_opts.start = std::max(cfg.split.old_range.first, cfg.split.old_range.last - std::chrono::days{span_days});

    SynthOptions new_opts = old_opts;
    new_opts.n_series = spec.subnew_series;
    new_opts.seed = spec.seed + 1000003;
    new_opts.symbol_prefix = "NEW";
    new_opts.start = cfg.split.subnew_train.first;
    new_opts.n_days = std::max<std::size_t>(30, weekdays_between(cfg.split.subnew_train.first, cfg.split.subnew_test.last));

    std::vector<StockSeries> series = synthesize(old_opts);
    for (auto& s : synthesize(new_opts)) series.push_back(std::move(s));
    return series;
}

Dataset load_dataset(const ExperimentConfig& cfg) {
    Dataset ds;
    if (cfg.data.synthetic) {
        ds.series = synthesize_dataset(cfg);
    } else {
        for (const auto& path : cfg.data.csv) {
            LoadReport report = load_csv(path, cfg.data.schema);
            for (const auto& w : report.warnings) std::fprintf(stderr, "warning: %s: %s\n", path.c_str(), w.c_str());
            if (report.dropped_rows > 0) {
                std::fprintf(stderr, "warning: %s: dropped %zu rows with missing or non-positive prices\n",
                             path.c_str(), report.dropped_rows);
            }
            for (auto& s : report.series) ds.series.push_back(std::move(s));
        }
        if (cfg.data.listing_dates) apply_listing_dates(ds.series, load_listing_dates(*cfg.data.listing_dates));
    }
    for (const auto& s : ds.series) s.validate();

    ds.population = split_population(ds.series, cfg.split, cfg.samples);
    Population& pop = ds.population;
    const std::uint64_t data_seed = cfg.data.synthetic ? cfg.data.synth.seed : 0;
    subsample(pop.old_samples, cfg.data.max_old, data_seed + 11);
    subsample(pop.subnew_train, cfg.data.max_subnew_train, data_seed + 13);
    subsample(pop.subnew_val, cfg.data.max_subnew_val, data_seed + 17);
    subsample(pop.subnew_test, cfg.data.max_subnew_test, data_seed + 19);
    for (auto* pool : {&pop.old_samples, &pop.subnew_train, &pop.subnew_val, &pop.subnew_test}) {
        wavelet::assign_difficulties(*pool, cfg.wavelet);
    }
    return ds;
}

TrainingData prepare_training_data(const Population& pop, const ExperimentConfig& cfg, std::uint64_t seed) {
    TrainingData td;
    td.old_pool = SamplePool(pop.old_samples);
    td.subnew_train = SamplePool(pop.subnew_train);
    td.subnew_val = SamplePool(pop.subnew_val);
    const std::size_t w = cfg.meta.task_size;
    if (cfg.method != Method::scratch) {
        td.old_tasks = build_tasks(td.old_pool.samples(), w, seed);
    }
    if (!td.subnew_train.empty()) {
        // A sub-new split smaller than W becomes a single task.
        const std::size_t sub_w = std::min(w, td.subnew_train.size());
        td.subnew_tasks = build_tasks(td.subnew_train.samples(), sub_w, seed + 0x51);
    }
    return td;
}

ordered_json metric_record_json(const MetricRecord& rec) {
    ordered_json j;
    j["split"] = rec.split;
    j["model"] = rec.model;
    j["seed"] = rec.seed;
    j["ACC"] = rec.metrics.acc;
    j["MCC"] = rec.metrics.mcc;
    j["MCC_x100"] = rec.metrics.mcc * 100.0;
    j["F1"] = rec.metrics.f1;
    j["n"] = rec.metrics.n;
    if (rec.metrics.mcc_degenerate) j["MCC_degenerate"] = true;
    if (rec.metrics.f1_degenerate) j["F1_degenerate"] = true;
    return j;
}

ordered_json trading_metrics_json(const TradingMetrics& m) {
    ordered_json j;
    j["ARR"] = m.arr;
    j["MDD"] = m.mdd;
    j["SR"] = m.sharpe;
    j["SoR"] = m.sortino;
    j["CR"] = m.calmar;
    j["OR"] = m.omega;
    j["days"] = m.days;
    ordered_json flags = ordered_json::array();
    if (m.sharpe_degenerate) flags.push_back("SR");
    if (m.sortino_degenerate) flags.push_back("SoR");
    if (m.calmar_degenerate) flags.push_back("CR");
    if (m.omega_degenerate) flags.push_back("OR");
    j["degenerate"] = flags;
    return j;
}

ClassificationMetrics mean_metrics(const std::vector<ClassificationMetrics>& all) {
    ClassificationMetrics out;
    if (all.empty()) return out;
    for (const auto& m : all) {
        out.acc += m.acc;
        out.mcc += m.mcc;
        out.f1 += m.f1;
        out.n += m.n;
    }
    const double k = static_cast<double>(all.size());
    out.acc /= k;
    out.mcc /= k;
    out.f1 /= k;
    out.n /= all.size();
    return out;
}

std::vector<Signal> signals_from_predictions(std::span<const Sample> samples, std::span<const int> predictions) {
    if (samples.size() != predictions.size()) throw std::invalid_argument("one prediction per sample required");
    std::vector<Signal> out;
    out.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        out.push_back(Signal{samples[i].symbol, samples[i].anchor_date, predictions[i] == 1});
    }
    return out;
}

namespace {

void write_jsonl(const fs::path& path, const std::vector<ordered_json>& records) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    for (const auto& r : records) out << r.dump() << '\n';
}

void write_json(const fs::path& path, const ordered_json& doc) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << doc.dump(2) << '\n';
}

}  // namespace

SeedOutcome run_seed(const ExperimentConfig& cfg, const Dataset& data, std::uint64_t seed, const fs::path& dir) {
    fs::create_directories(dir);
    ExperimentConfig snapshot = cfg;
    snapshot.seed = seed;
    snapshot.repeats = 1;
    snapshot.output = dir;
    write_json(dir / "config.json", config_to_json(snapshot));

    MetaConfig meta = cfg.meta;
    meta.seed = seed;
    meta.adaptive = cfg.method == Method::metastock;

    TrainingData td = prepare_training_data(data.population, cfg, seed);
    SeedOutcome out;
    out.seed = seed;
    switch (cfg.method) {
        case Method::metastock: out.train = train_metastock(cfg.backbone, td, meta); break;
        case Method::reptile: out.train = train_baseline(Baseline::reptile, cfg.backbone, td, meta); break;
        case Method::transfer: out.train = train_baseline(Baseline::transfer, cfg.backbone, td, meta); break;
        case Method::scratch: out.train = train_baseline(Baseline::scratch, cfg.backbone, td, meta); break;
    }
    const Backbone& model = *out.train.model;
    const std::string name(method_name(cfg.method));
    const std::string seed_text = std::to_string(seed);

    if (!td.old_tasks.empty()) write_task_manifest(dir / "task_manifest.jsonl", td.old_tasks);
    save_checkpoint(dir / "model.ckpt", model);

    std::vector<ordered_json> epochs;
    for (const auto& e : out.train.record.epochs) {
        ordered_json j;
        j["epoch"] = e.epoch;
        j["train_loss"] = e.train_loss;
        if (e.validation) {
            j["val_ACC"] = e.validation->acc;
            j["val_MCC"] = e.validation->mcc;
            j["val_F1"] = e.validation->f1;
        }
        epochs.push_back(j);
    }
    write_jsonl(dir / "epochs.jsonl", epochs);

    std::vector<ordered_json> metrics;
    if (!data.population.subnew_val.empty()) {
        out.val = evaluate(model, data.population.subnew_val);
        metrics.push_back(metric_record_json({"val", name, seed_text, out.val}));
    }
    const auto& test = data.population.subnew_test;
    if (!test.empty()) {
        const Batch batch = make_batch(test);
        const std::vector<int> preds = predict_labels(forward(model, batch));
        std::vector<int> labels(test.size());
        for (std::size_t i = 0; i < test.size(); ++i) labels[i] = test[i].label;
        out.test = classification_metrics(confusion(preds, labels));
        metrics.push_back(metric_record_json({"test", name, seed_text, out.test}));

        const TradeLedger ledger = run_strategy(signals_from_predictions(test, preds), data.series, cfg.backtest);
        write_ledger_csv(dir / "ledger.csv", ledger);
        if (ledger.size() >= 2) {
            out.trading = trading_metrics(ledger);
            ordered_json t = trading_metrics_json(*out.trading);
            t["model"] = name;
            t["seed"] = seed_text;
            write_json(dir / "trading.json", t);
        }
    }
    write_jsonl(dir / "metrics.jsonl", metrics);

    ordered_json run;
    run["method"] = name;
    run["seed"] = seed;
    run["best_epoch"] = out.train.record.best_epoch;
    run["epochs"] = out.train.record.epochs.size();
    if (!out.train.record.pretrain_loss.empty()) run["pretrain_loss"] = out.train.record.pretrain_loss;
    run["wall_seconds"] = out.train.record.wall_seconds;
    write_json(dir / "run.json", run);
    return out;
}

ExperimentSummary run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    return run_experiment(cfg, load_dataset(cfg));
}

ExperimentSummary run_experiment(const ExperimentConfig& cfg, const Dataset& data) {
    cfg.validate();
    fs::create_directories(cfg.output);
    write_json(cfg.output / "config.json", config_to_json(cfg));

    ExperimentSummary summary;
    std::vector<ordered_json> report;
    std::vector<ClassificationMetrics> tests;
    std::vector<ClassificationMetrics> vals;
    const std::string name(method_name(cfg.method));
    for (std::size_t r = 0; r < cfg.repeats; ++r) {
        const std::uint64_t seed = cfg.seed + r;
        SeedOutcome outcome = run_seed(cfg, data, seed, cfg.output / ("seed_" + std::to_string(seed)));
        if (!data.population.subnew_val.empty()) {
            vals.push_back(outcome.val);
            report.push_back(metric_record_json({"val", name, std::to_string(seed), outcome.val}));
        }
        if (!data.population.subnew_test.empty()) {
            tests.push_back(outcome.test);
            report.push_back(metric_record_json({"test", name, std::to_string(seed), outcome.test}));
        }
        summary.seeds.push_back(std::move(outcome));
    }
    summary.mean_val = mean_metrics(vals);
    summary.mean_test = mean_metrics(tests);
    if (!vals.empty()) report.push_back(metric_record_json({"val", name, "mean", summary.mean_val}));
    if (!tests.empty()) report.push_back(metric_record_json({"test", name, "mean", summary.mean_test}));
    write_jsonl(cfg.output / "metrics.jsonl", report);
    return summary;
}

ProbeReport probe_difficulty(const ExperimentConfig& cfg, const Dataset& data, const Backbone& model_a,
                             const Backbone& model_b) {
    const auto& pool = data.population.subnew_test;
    if (pool.size() < 3) throw std::invalid_argument("probe needs at least 3 test samples");
    std::size_t w = cfg.probe_task_size > 0 ? cfg.probe_task_size : cfg.meta.task_size;
    w = std::min(w, pool.size() / 3);
    ProbeReport report;
    report.task_size = w;
    const std::vector<Task> tasks = build_tasks(pool, w, cfg.seed);
    report.rows = tercile_report(model_a, model_b, tercile_partition(tasks), pool);
    return report;
}

namespace {

ordered_json gain_json(const std::optional<double>& g) { return g ? ordered_json(*g) : ordered_json(nullptr); }

ordered_json metrics_json(const ClassificationMetrics& m) {
    return {{"ACC", m.acc}, {"MCC", m.mcc}, {"F1", m.f1}, {"n", m.n}};
}

}  // namespace

ordered_json probe_report_json(const ProbeReport& report) {
    ordered_json doc;
    doc["task_size"] = report.task_size;
    ordered_json groups = ordered_json::array();
    for (const auto& row : report.rows) {
        ordered_json g;
        g["group"] = row.group;
        g["tasks"] = row.tasks;
        g["samples"] = row.samples;
        g["model_a"] = metrics_json(row.baseline);
        g["model_b"] = metrics_json(row.candidate);
        g["gain_pct"] = {{"ACC", gain_json(row.acc_gain)}, {"MCC", gain_json(row.mcc_gain)}, {"F1", gain_json(row.f1_gain)}};
        groups.push_back(g);
    }
    doc["groups"] = groups;
    return doc;
}

std::string probe_report_table(const ProbeReport& report) {
    std::ostringstream out;
    auto cell = [](const std::optional<double>& g) {
        char buf[32];
        if (g) std::snprintf(buf, sizeof buf, "%9.2f%%", *g);
        else std::snprintf(buf, sizeof buf, "%10s", "n/a");
        return std::string(buf);
    };
    out << "Relative gains of model_b over model_a (task size " << report.task_size << ")\n";
    out << "metric ";
    for (const auto& row : report.rows) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%10s", row.group.c_str());
        out << buf;
    }
    out << '\n';
    const char* names[] = {"ACC   ", "MCC   ", "F1    "};
    for (int k = 0; k < 3; ++k) {
        out << names[k] << ' ';
        for (const auto& row : report.rows) {
            out << cell(k == 0 ? row.acc_gain : k == 1 ? row.mcc_gain : row.f1_gain);
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace metastock
