#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "metastock/common.hpp"

namespace metastock {

struct Bar {
    Date date;
    double open = 0.0;
    double high = 0.0;
    double low = 0.0;
    double close = 0.0;
    double adj_close = 0.0;
    double volume = 0.0;
};

/// One instrument's daily OHLCV history, strictly increasing by date.
struct StockSeries {
    std::string symbol;
    Date listing_date;
    std::vector<Bar> rows;

    /// Throws DataError when dates are not strictly increasing or a price/volume is out of range.
    void validate() const;
};

/// A U x d window of per-day features with its next-day movement label.
struct Sample {
    std::string symbol;
    Date anchor_date;
    Matrix features;
    int label = 0;
    double movement_pct = 0.0;
    double difficulty = 0.0;
};

struct LabelThresholds {
    double positive_pct = 0.55;
    double negative_pct = -0.5;

    void validate() const;
};

struct SplitConfig {
    DateRange old_range;
    DateRange subnew_train;
    DateRange subnew_val;
    DateRange subnew_test;
    LabelThresholds thresholds;

    /// Ranges as used for the 2000-2022 markets: old through 2021-02-22, then a 6:2:2 sub-new year.
    static SplitConfig default_ranges();

    DateRange subnew_year() const { return {subnew_train.first, subnew_test.last}; }
    void validate() const;
};

/// Column names looked up in the CSV header. An empty symbol column means the
/// file holds one instrument named after the file stem.
struct CsvSchema {
    std::string symbol = "symbol";
    std::string date = "date";
    std::string open = "open";
    std::string high = "high";
    std::string low = "low";
    std::string close = "close";
    std::string adj_close = "adj_close";
    std::string volume = "volume";
};

struct LoadReport {
    std::vector<StockSeries> series;
    std::size_t dropped_rows = 0;
    std::vector<std::string> warnings;
};

/// Reads one CSV into per-symbol series sorted by date. Rows with a missing or
/// non-positive price are dropped and counted. Listing dates default to the
/// first surviving row and may be overridden with apply_listing_dates().
LoadReport load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});

/// Sidecar file with header `symbol,listing_date`.
std::map<std::string, Date> load_listing_dates(const std::filesystem::path& path);
void apply_listing_dates(std::vector<StockSeries>& series, const std::map<std::string, Date>& listing);

void write_csv(const std::filesystem::path& path, const std::vector<StockSeries>& series);
void write_listing_dates(const std::filesystem::path& path, const std::vector<StockSeries>& series);

struct FeatureOptions {
    bool log_return = true;
    bool log_volume = true;

    std::size_t dimension() const { return (log_return ? 1 : 0) + (log_volume ? 1 : 0); }
};

/// Per-day features for rows 1..n-1; dates[k] is the date of row k+1.
struct FeatureSeries {
    std::vector<Date> dates;
    Matrix values;
};

/// f1 = ln(adj_close_t / adj_close_{t-1}), f2 = ln((volume_t + 1) / (volume_{t-1} + 1)).
FeatureSeries compute_features(const StockSeries& series, const FeatureOptions& options = {});

struct SampleOptions {
    std::size_t window = 5;
    LabelThresholds thresholds;
    FeatureOptions features;
};

/// Next-day movement in percent, quantized to 1e-10 so threshold comparisons
/// against decimal literals such as 0.55 behave as written.
double movement_percent(double today, double tomorrow);

/// Sliding windows of `window` feature days ending at each anchor day t, labeled by
/// the move from t to t+1. Each feature column is z-scored within the window.
std::vector<Sample> make_samples(const StockSeries& series, const SampleOptions& options);

/// Z-scores each column in place using the sample standard deviation; columns
/// with (numerically) zero spread become all zeros.
void zscore_columns(Matrix& window);

struct Population {
    std::vector<Sample> old_samples;
    std::vector<Sample> subnew_train;
    std::vector<Sample> subnew_val;
    std::vector<Sample> subnew_test;
};

/// Sub-new series are those listed inside the sub-new year; their samples go to
/// train/val/test by anchor date. Old samples come from series listed before it,
/// restricted to anchors inside the old range.
Population split_population(const std::vector<StockSeries>& all, const SplitConfig& config,
                            const SampleOptions& options);

enum class Regime { trend, meanrevert, planted };

Regime parse_regime(std::string_view name);
std::string_view regime_name(Regime regime);

struct SynthOptions {
    std::size_t n_series = 1;
    std::size_t n_days = 250;
    Regime regime = Regime::trend;
    std::uint64_t seed = 0;
    Date start = parse_date("2000-01-03");
    std::string symbol_prefix = "SYN";
    double motif_probability = 0.9;
    double reversal_probability = 0.8;
};

/// Deterministic artificial series on a weekday calendar.
///
/// trend: i.i.d. normal log-returns with positive drift.
/// meanrevert: log-price pulled back toward its starting level.
/// planted: every daily move is at least 0.6% in size; after two up days the next
/// day is up with probability motif_probability, after two down days it is down
/// with that probability. After a mixed pair the last move reverses with
/// reversal_probability, which keeps windows sign-mixed so the motif survives
/// per-window standardization. Volume is uninformative noise.
std::vector<StockSeries> synthesize(const SynthOptions& options);

}  // namespace metastock
