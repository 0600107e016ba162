#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "metastock/backtest.hpp"
#include "metastock/evaluation.hpp"
#include "metastock/market_data.hpp"
#include "metastock/meta_train.hpp"
#include "metastock/model.hpp"
#include "metastock/wavelet.hpp"

namespace metastock {

enum class Method { metastock, reptile, transfer, scratch };

Method parse_method(std::string_view name);
std::string_view method_name(Method method);

struct SyntheticDataSpec {
    Regime regime = Regime::planted;
    std::size_t old_series = 8;
    std::size_t old_days = 400;
    std::size_t subnew_series = 4;
    double motif_probability = 0.9;
    double reversal_probability = 0.8;
    std::uint64_t seed = 7;
};

struct DataSpec {
    bool synthetic = true;
    SyntheticDataSpec synth;
    std::vector<std::filesystem::path> csv;
    std::optional<std::filesystem::path> listing_dates;
    CsvSchema schema;
    // Caps applied by seeded subsampling; 0 means keep everything.
    std::size_t max_old = 0;
    std::size_t max_subnew_train = 0;
    std::size_t max_subnew_val = 0;
    std::size_t max_subnew_test = 0;
};

struct ExperimentConfig {
    DataSpec data;
    SplitConfig split = SplitConfig::default_ranges();
    SampleOptions samples;
    wavelet::Options wavelet;
    BackboneSpec backbone;
    MetaConfig meta;
    Method method = Method::metastock;
    std::size_t repeats = 5;
    std::uint64_t seed = 0;
    std::filesystem::path output = "runs/experiment";
    BacktestOptions backtest;
    std::size_t probe_task_size = 0;  // 0: use meta.task_size, shrunk if the test split is too small

    void validate() const;
};

/// Every field is optional in the document; missing keys keep their defaults.
ExperimentConfig config_from_json(const nlohmann::json& doc);
nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

struct Dataset {
    std::vector<StockSeries> series;
    Population population;
};

/// Reads CSVs or synthesizes series, builds samples, splits, applies caps and
/// scores every sample's wavelet difficulty.
Dataset load_dataset(const ExperimentConfig& cfg);

/// The series a synthetic DataSpec describes, aligned to the split ranges.
std::vector<StockSeries> synthesize_dataset(const ExperimentConfig& cfg);

/// Copies the pools and builds old/sub-new tasks for one seed.
TrainingData prepare_training_data(const Population& pop, const ExperimentConfig& cfg, std::uint64_t seed);

struct MetricRecord {
    std::string split;
    std::string model;
    std::string seed;  // number, or "mean"
    ClassificationMetrics metrics;
};

nlohmann::ordered_json metric_record_json(const MetricRecord& rec);

struct SeedOutcome {
    std::uint64_t seed = 0;
    TrainResult train;
    ClassificationMetrics val;
    ClassificationMetrics test;
    std::optional<TradingMetrics> trading;
};

/// Trains and evaluates one seed, writing its artifacts under `dir`.
SeedOutcome run_seed(const ExperimentConfig& cfg, const Dataset& data, std::uint64_t seed,
                     const std::filesystem::path& dir);

struct ExperimentSummary {
    std::vector<SeedOutcome> seeds;
    ClassificationMetrics mean_test;
    ClassificationMetrics mean_val;
};

/// Runs cfg.repeats seeds (cfg.seed, cfg.seed + 1, ...) into cfg.output/seed_<s>
/// and writes the aggregate report cfg.output/metrics.jsonl.
ExperimentSummary run_experiment(const ExperimentConfig& cfg);
ExperimentSummary run_experiment(const ExperimentConfig& cfg, const Dataset& data);

ClassificationMetrics mean_metrics(const std::vector<ClassificationMetrics>& all);

std::vector<Signal> signals_from_predictions(std::span<const Sample> samples, std::span<const int> predictions);

struct ProbeReport {
    std::size_t task_size = 0;
    std::vector<GroupComparison> rows;
};

/// Splits the sub-new test split into difficulty terciles and compares two models on each.
ProbeReport probe_difficulty(const ExperimentConfig& cfg, const Dataset& data, const Backbone& model_a,
                             const Backbone& model_b);

nlohmann::ordered_json probe_report_json(const ProbeReport& report);
std::string probe_report_table(const ProbeReport& report);

nlohmann::ordered_json trading_metrics_json(const TradingMetrics& m);

}  // namespace metastock
