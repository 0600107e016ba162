#include "metastock/market_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace metastock {

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            fields.push_back(line.substr(start));
            return fields;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

bool parse_double(std::string_view text, double& out) {
    text = trim(text);
    if (text.empty()) return false;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    return ec == std::errc{} && ptr == text.data() + text.size();
}

std::size_t column_index(const std::vector<std::string_view>& header, const std::string& name,
                         const std::filesystem::path& path) {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (trim(header[i]) == name) return i;
    }
    throw DataError(path.string() + ": missing mandatory column '" + name + "'");
}

void sort_and_check(StockSeries& series) {
    std::stable_sort(series.rows.begin(), series.rows.end(),
                     [](const Bar& a, const Bar& b) { return a.date < b.date; });
    for (std::size_t i = 1; i < series.rows.size(); ++i) {
        if (series.rows[i].date == series.rows[i - 1].date) {
            throw DataError("duplicate date " + format_date(series.rows[i].date) + " for symbol " +
                            series.symbol);
        }
    }
}

}  // namespace

void StockSeries::validate() const {
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const Bar& b = rows[i];
        if (i > 0 && !(rows[i - 1].date < b.date)) {
            throw DataError(symbol + ": dates not strictly increasing at " + format_date(b.date));
        }
        const bool prices_ok = b.open > 0 && b.high > 0 && b.low > 0 && b.close > 0 && b.adj_close > 0;
        if (!prices_ok || !(b.volume >= 0) || !std::isfinite(b.volume)) {
            throw DataError(symbol + ": invalid price or volume on " + format_date(b.date));
        }
    }
}

void LabelThresholds::validate() const {
    if (!(positive_pct > 0.0) || !(negative_pct < 0.0)) {
        throw std::invalid_argument("label thresholds must satisfy positive > 0 > negative");
    }
}

SplitConfig SplitConfig::default_ranges() {
    SplitConfig cfg;
    cfg.old_range = {parse_date("2000-01-01"), parse_date("2021-02-22")};
    cfg.subnew_train = {parse_date("2021-02-23"), parse_date("2021-09-22")};
    cfg.subnew_val = {parse_date("2021-09-23"), parse_date("2021-12-02")};
    cfg.subnew_test = {parse_date("2021-12-03"), parse_date("2022-02-22")};
    return cfg;
}

void SplitConfig::validate() const {
    thresholds.validate();
    const DateRange ranges[] = {old_range, subnew_train, subnew_val, subnew_test};
    for (const auto& r : ranges) {
        if (r.last < r.first) throw std::invalid_argument("split range ends before it starts");
    }
    for (std::size_t i = 1; i < 4; ++i) {
        if (!(ranges[i - 1].last < ranges[i].first)) {
            throw std::invalid_argument("split ranges must be ordered old < train < val < test without overlap");
        }
    }
}

LoadReport load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path.string());

    std::string header_line;
    if (!std::getline(in, header_line)) throw DataError(path.string() + ": empty file");
    if (header_line.size() >= 3 && header_line.compare(0, 3, "\xEF\xBB\xBF") == 0) header_line.erase(0, 3);
    const auto header = split_fields(header_line);

    const bool has_symbol = !schema.symbol.empty() &&
                            std::any_of(header.begin(), header.end(),
                                        [&](std::string_view h) { return trim(h) == schema.symbol; });
    const std::size_t sym_col = has_symbol ? column_index(header, schema.symbol, path) : 0;
    const std::size_t date_col = column_index(header, schema.date, path);
    const std::size_t price_cols[] = {
        column_index(header, schema.open, path), column_index(header, schema.high, path),
        column_index(header, schema.low, path), column_index(header, schema.close, path),
        column_index(header, schema.adj_close, path)};
    const std::size_t vol_col = column_index(header, schema.volume, path);
    const std::string default_symbol = path.stem().string();

    LoadReport report;
    std::vector<StockSeries> by_symbol;
    std::unordered_map<std::string, std::size_t> index;
    std::unordered_map<std::string, std::size_t> seen_rows;

    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        const auto fields = split_fields(line);
        std::string symbol = has_symbol && sym_col < fields.size() ? std::string(trim(fields[sym_col]))
                                                                     : default_symbol;
        ++seen_rows[symbol];

        Bar bar;
        bool ok = date_col < fields.size() && vol_col < fields.size();
        if (ok) bar.date = parse_date(trim(fields[date_col]));
        double* prices[] = {&bar.open, &bar.high, &bar.low, &bar.close, &bar.adj_close};
        for (std::size_t k = 0; ok && k < 5; ++k) {
            ok = price_cols[k] < fields.size() && parse_double(fields[price_cols[k]], *prices[k]) &&
                 std::isfinite(*prices[k]) && *prices[k] > 0.0;
        }
        if (ok) ok = parse_double(fields[vol_col], bar.volume) && std::isfinite(bar.volume) && bar.volume >= 0.0;
        if (!ok) {
            ++report.dropped_rows;
            continue;
        }

        auto [it, inserted] = index.try_emplace(symbol, by_symbol.size());
        if (inserted) by_symbol.push_back(StockSeries{symbol, {}, {}});
        by_symbol[it->second].rows.push_back(bar);
    }

    for (const auto& [symbol, count] : seen_rows) {
        if (!index.contains(symbol)) {
            report.warnings.push_back("symbol " + symbol + " skipped: none of its " + std::to_string(count) +
                                      " rows survived");
        }
    }
    std::sort(report.warnings.begin(), report.warnings.end());

    for (auto& s : by_symbol) {
        sort_and_check(s);
        s.listing_date = s.rows.front().date;
    }
    std::sort(by_symbol.begin(), by_symbol.end(),
              [](const StockSeries& a, const StockSeries& b) { return a.symbol < b.symbol; });
    report.series = std::move(by_symbol);
    return report;
}

std::map<std::string, Date> load_listing_dates(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
    const auto header = split_fields(line);
    const auto sym_col = column_index(header, "symbol", path);
    const auto date_col = column_index(header, "listing_date", path);
    std::map<std::string, Date> out;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        const auto fields = split_fields(line);
        if (std::max(sym_col, date_col) >= fields.size()) {
            throw DataError(path.string() + ": short row '" + line + "'");
        }
        out[std::string(trim(fields[sym_col]))] = parse_date(trim(fields[date_col]));
    }
    return out;
}

void apply_listing_dates(std::vector<StockSeries>& series, const std::map<std::string, Date>& listing) {
    for (auto& s : series) {
        if (auto it = listing.find(s.symbol); it != listing.end()) s.listing_date = it->second;
    }
}

void write_csv(const std::filesystem::path& path, const std::vector<StockSeries>& series) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "symbol,date,open,high,low,close,adj_close,volume\n";
    char buf[256];
    for (const auto& s : series) {
        for (const auto& b : s.rows) {
            std::snprintf(buf, sizeof buf, "%s,%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", s.symbol.c_str(),
                          format_date(b.date).c_str(), b.open, b.high, b.low, b.close, b.adj_close, b.volume);
            out << buf;
        }
    }
}

void write_listing_dates(const std::filesystem::path& path, const std::vector<StockSeries>& series) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "symbol,listing_date\n";
    for (const auto& s : series) out << s.symbol << ',' << format_date(s.listing_date) << '\n';
}

FeatureSeries compute_features(const StockSeries& series, const FeatureOptions& options) {
    FeatureSeries out;
    const std::size_t n = series.rows.size();
    const std::size_t d = options.dimension();
    if (n < 2 || d == 0) return out;
    out.values = Matrix(n - 1, d);
    out.dates.reserve(n - 1);
    for (std::size_t t = 1; t < n; ++t) {
        const Bar& prev = series.rows[t - 1];
        const Bar& cur = series.rows[t];
        std::size_t c = 0;
        if (options.log_return) out.values(t - 1, c++) = std::log(cur.adj_close / prev.adj_close);
        if (options.log_volume) out.values(t - 1, c++) = std::log((cur.volume + 1.0) / (prev.volume + 1.0));
        out.dates.push_back(cur.date);
    }
    return out;
}

double movement_percent(double today, double tomorrow) {
    const double raw = 100.0 * (tomorrow - today) / today;
    return std::round(raw * 1e10) / 1e10;
}

void zscore_columns(Matrix& window) {
    const std::size_t n = window.rows();
    if (n < 2) return;
    for (std::size_t c = 0; c < window.cols(); ++c) {
        double mean = 0.0;
        double scale = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            mean += window(r, c);
            scale = std::max(scale, std::abs(window(r, c)));
        }
        mean /= static_cast<double>(n);
        double ss = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            const double dev = window(r, c) - mean;
            ss += dev * dev;
        }
        const double sd = std::sqrt(ss / static_cast<double>(n - 1));
        if (!(sd > 1e-12 * std::max(scale, 1e-300))) {
            for (std::size_t r = 0; r < n; ++r) window(r, c) = 0.0;
            continue;
        }
        for (std::size_t r = 0; r < n; ++r) window(r, c) = (window(r, c) - mean) / sd;
    }
}

std::vector<Sample> make_samples(const StockSeries& series, const SampleOptions& options) {
    if (options.window < 2) throw std::invalid_argument("window length must be at least 2");
    options.thresholds.validate();
    std::vector<Sample> out;
    const std::size_t n = series.rows.size();
    const std::size_t window = options.window;
    if (n < window + 2) return out;

    const FeatureSeries feats = compute_features(series, options.features);
    const std::size_t d = feats.values.cols();
    if (d == 0) return out;

    // Feature row k belongs to series row k + 1; anchor row t uses feature rows t-window..t-1.
    for (std::size_t t = window; t + 1 < n; ++t) {
        const double move = movement_percent(series.rows[t].adj_close, series.rows[t + 1].adj_close);
        int label;
        if (move >= options.thresholds.positive_pct) {
            label = 1;
        } else if (move <= options.thresholds.negative_pct) {
            label = 0;
        } else {
            continue;
        }
        Matrix window_values(window, d);
        for (std::size_t r = 0; r < window; ++r) {
            const auto src = feats.values.row(t - window + r);
            std::copy(src.begin(), src.end(), window_values.row(r).begin());
        }
        zscore_columns(window_values);
        out.push_back(Sample{series.symbol, series.rows[t].date, std::move(window_values), label, move, 0.0});
    }
    return out;
}

Population split_population(const std::vector<StockSeries>& all, const SplitConfig& config,
                            const SampleOptions& options) {
    config.validate();
    Population pop;
    const DateRange subnew_year = config.subnew_year();
    for (const auto& series : all) {
        const bool is_subnew = subnew_year.contains(series.listing_date);
        const bool is_old = series.listing_date < subnew_year.first;
        if (!is_subnew && !is_old) continue;
        for (auto& sample : make_samples(series, options)) {
            if (is_old) {
                if (config.old_range.contains(sample.anchor_date)) pop.old_samples.push_back(std::move(sample));
            } else if (config.subnew_train.contains(sample.anchor_date)) {
                pop.subnew_train.push_back(std::move(sample));
            } else if (config.subnew_val.contains(sample.anchor_date)) {
                pop.subnew_val.push_back(std::move(sample));
            } else if (config.subnew_test.contains(sample.anchor_date)) {
                pop.subnew_test.push_back(std::move(sample));
            }
        }
    }
    if (pop.old_samples.empty()) {
        throw DataError("no old-stock samples: widen the old date range or add series listed before " +
                        format_date(subnew_year.first));
    }
    if (pop.subnew_train.empty() && pop.subnew_val.empty() && pop.subnew_test.empty()) {
        throw DataError("no sub-new samples: widen the sub-new ranges or add series listed between " +
                        format_date(subnew_year.first) + " and " + format_date(subnew_year.last));
    }
    return pop;
}

Regime parse_regime(std::string_view name) {
    if (name == "trend") return Regime::trend;
    if (name == "meanrevert") return Regime::meanrevert;
    if (name == "planted") return Regime::planted;
    throw std::invalid_argument("unknown regime '" + std::string(name) + "'");
}

std::string_view regime_name(Regime regime) {
    switch (regime) {
        case Regime::trend: return "trend";
        case Regime::meanrevert: return "meanrevert";
        case Regime::planted: return "planted";
    }
    return "?";
}

namespace {

Date next_weekday(Date d) {
    do {
        d += std::chrono::days{1};
    } while (std::chrono::weekday{d} == std::chrono::Saturday || std::chrono::weekday{d} == std::chrono::Sunday);
    return d;
}

}  // namespace

std::vector<StockSeries> synthesize(const SynthOptions& options) {
    if (options.n_days < 30) throw std::invalid_argument("synthesize needs at least 30 days");
    Date start = options.start;
    while (std::chrono::weekday{start} == std::chrono::Saturday || std::chrono::weekday{start} == std::chrono::Sunday) {
        start += std::chrono::days{1};
    }

    std::vector<StockSeries> out;
    out.reserve(options.n_series);
    for (std::size_t s = 0; s < options.n_series; ++s) {
        // Independent stream per series so adding series never perturbs earlier ones.
        Rng rng(options.seed * 0x9E3779B97F4A7C15ULL + s + 1);
        char name[64];
        std::snprintf(name, sizeof name, "%s%04zu", options.symbol_prefix.c_str(), s);

        StockSeries series{name, start, {}};
        series.rows.reserve(options.n_days);
        double log_price = std::log(rng.uniform(20.0, 200.0));
        const double anchor_level = log_price;
        double log_volume = std::log(rng.uniform(1e5, 1e7));
        int prev1 = 0;  // +1 up, -1 down, 0 unknown
        int prev2 = 0;
        Date date = start;

        for (std::size_t day = 0; day < options.n_days; ++day) {
            if (day > 0) {
                double r = 0.0;
                switch (options.regime) {
                    case Regime::trend:
                        r = 0.0008 + 0.012 * rng.normal();
                        break;
                    case Regime::meanrevert:
                        r = -0.1 * (log_price - anchor_level) + 0.012 * rng.normal();
                        break;
                    case Regime::planted: {
                        double p_up = 0.5;
                        if (prev1 == 1 && prev2 == 1) p_up = options.motif_probability;
                        if (prev1 == -1 && prev2 == -1) p_up = 1.0 - options.motif_probability;
                        if (prev1 == 1 && prev2 == -1) p_up = 1.0 - options.reversal_probability;
                        if (prev1 == -1 && prev2 == 1) p_up = options.reversal_probability;
                        const int dir = rng.uniform() < p_up ? 1 : -1;
                        // |move| >= 0.6% in price terms keeps every day past the default labeling thresholds.
                        const double size = rng.uniform(0.006, 0.025);
                        r = dir > 0 ? std::log1p(size) : std::log1p(-size);
                        prev2 = prev1;
                        prev1 = dir;
                        break;
                    }
                }
                log_price += r;
                log_volume += 0.3 * rng.normal() - 0.05 * (log_volume - std::log(1e6));
                date = next_weekday(date);
            }
            const double close = std::exp(log_price);
            const double spread = std::abs(rng.normal()) * 0.005;
            Bar bar;
            bar.date = date;
            bar.open = close * (1.0 + 0.002 * rng.normal());
            bar.high = std::max(bar.open, close) * (1.0 + spread);
            bar.low = std::min(bar.open, close) * (1.0 - spread);
            bar.close = close;
            bar.adj_close = close;
            bar.volume = std::round(std::exp(log_volume));
            series.rows.push_back(bar);
        }
        out.push_back(std::move(series));
    }
    return out;
}

}  // namespace metastock
