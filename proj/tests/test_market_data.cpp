#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "metastock/market_data.hpp"

using namespace metastock;
namespace fs = std::filesystem;

namespace {

StockSeries series_from_closes(const std::vector<double>& closes, const std::vector<double>& volumes = {}) {
    StockSeries s{"T", parse_date("2020-01-01"), {}};
    Date d = parse_date("2020-01-01");
    for (std::size_t i = 0; i < closes.size(); ++i) {
        Bar b;
        b.date = d + std::chrono::days{static_cast<int>(i)};
        b.open = b.high = b.low = b.close = b.adj_close = closes[i];
        b.volume = volumes.empty() ? 1000.0 : volumes[i];
        s.rows.push_back(b);
    }
    return s;
}

fs::path temp_file(const std::string& name, const std::string& body) {
    const fs::path dir = fs::temp_directory_path() / "metastock_tests";
    fs::create_directories(dir);
    const fs::path p = dir / name;
    std::ofstream(p) << body;
    return p;
}

}  // namespace

TEST_SUITE("market_data") {

TEST_CASE("doubling close and volume gives ln 2 features") {
    const auto s = series_from_closes({10.0, 20.0}, {99.0, 199.0});
    const auto f = compute_features(s);
    REQUIRE(f.values.rows() == 1);
    CHECK(f.values(0, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(f.values(0, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(f.dates[0] == s.rows[1].date);
}

TEST_CASE("labels at the exact thresholds") {
    CHECK(movement_percent(100.0, 100.55) == 0.55);
    CHECK(movement_percent(100.0, 99.5) == -0.5);

    // Seven flat days, then a +0.55% move, a -0.5% move and a +0.3% move.
    std::vector<double> closes(7, 100.0);
    closes.push_back(100.55);
    closes.push_back(100.55 * 0.995);
    closes.push_back(100.55 * 0.995 * 1.003);
    const auto samples = make_samples(series_from_closes(closes), SampleOptions{});
    // Anchors 5..8; anchor 5 (flat next day) and 8 (+0.3%) are filtered out.
    REQUIRE(samples.size() == 2);
    CHECK(samples[0].label == 1);
    CHECK(samples[0].movement_pct == 0.55);
    CHECK(samples[1].label == 0);
    CHECK(samples[1].movement_pct == -0.5);
}

TEST_CASE("samples are windowed, z-scored and strictly causal") {
    SynthOptions o;
    o.n_days = 60;
    o.regime = Regime::trend;
    const auto series = synthesize(o).front();
    SampleOptions opts;
    const auto samples = make_samples(series, opts);
    REQUIRE(!samples.empty());
    std::set<Date> anchors;
    for (const auto& s : samples) {
        CHECK(s.features.rows() == opts.window);
        CHECK(s.features.cols() == 2);
        anchors.insert(s.anchor_date);
        for (std::size_t c = 0; c < 2; ++c) {
            double mean = 0.0, ss = 0.0;
            for (std::size_t r = 0; r < opts.window; ++r) mean += s.features(r, c);
            mean /= opts.window;
            for (std::size_t r = 0; r < opts.window; ++r) ss += (s.features(r, c) - mean) * (s.features(r, c) - mean);
            CHECK(std::abs(mean) < 1e-12);
            CHECK(std::sqrt(ss / (opts.window - 1)) == doctest::Approx(1.0).epsilon(1e-12));
        }
        CHECK(s.label == (s.movement_pct >= 0.55 ? 1 : 0));
    }
    CHECK(anchors.size() == samples.size());

    // Changing a price after the anchor must not change that sample's features.
    auto altered = series;
    const std::size_t t = 20;
    for (std::size_t i = t + 1; i < altered.rows.size(); ++i) altered.rows[i].adj_close *= 1.5;
    const auto again = make_samples(altered, opts);
    for (const auto& s : samples) {
        if (s.anchor_date > series.rows[t].date) continue;
        for (const auto& a : again) {
            if (a.anchor_date == s.anchor_date) CHECK(a.features == s.features);
        }
    }
}

TEST_CASE("short series yield no samples") {
    CHECK(make_samples(series_from_closes({1, 2, 3, 4, 5, 6}), SampleOptions{}).empty());
    CHECK(make_samples(series_from_closes({1, 2, 3, 4, 5, 6, 7}), SampleOptions{}).size() == 1);
}

TEST_CASE("constant window columns become zeros") {
    Matrix m(5, 2, 3.0);
    for (std::size_t r = 0; r < 5; ++r) m(r, 1) = static_cast<double>(r);
    zscore_columns(m);
    for (std::size_t r = 0; r < 5; ++r) CHECK(m(r, 0) == 0.0);
    CHECK(m(0, 1) == doctest::Approx(-2.0 / std::sqrt(2.5)));
}

TEST_CASE("csv loading sorts rows, drops bad ones and rejects duplicates") {
    const auto good = temp_file("good.csv",
                                "symbol,date,open,high,low,close,adj_close,volume\n"
                                "AAA,2020-01-03,1,1,1,1,1,10\n"
                                "AAA,2020-01-02,1,1,1,1,1,10\n"
                                "BBB,2020-01-02,1,1,1,-1,1,10\n"
                                "AAA,2020-01-06,1,1,1,,1,10\n");
    const auto report = load_csv(good);
    REQUIRE(report.series.size() == 1);
    CHECK(report.series[0].symbol == "AAA");
    CHECK(report.series[0].rows.size() == 2);
    CHECK(report.series[0].rows[0].date == parse_date("2020-01-02"));
    CHECK(report.series[0].listing_date == parse_date("2020-01-02"));
    CHECK(report.dropped_rows == 2);
    REQUIRE(report.warnings.size() == 1);
    CHECK(report.warnings[0].find("BBB") != std::string::npos);

    const auto dup = temp_file("dup.csv",
                               "symbol,date,open,high,low,close,adj_close,volume\n"
                               "AAA,2020-01-02,1,1,1,1,1,10\n"
                               "AAA,2020-01-02,1,1,1,1,1,10\n");
    try {
        load_csv(dup);
        FAIL("duplicate date accepted");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("AAA") != std::string::npos);
        CHECK(msg.find("2020-01-02") != std::string::npos);
    }

    const auto single = temp_file("ZZZ.csv",
                                  "date,open,high,low,close,adj_close,volume\n"
                                  "2020-01-02,1,1,1,1,1,10\n");
    const auto one = load_csv(single);
    REQUIRE(one.series.size() == 1);
    CHECK(one.series[0].symbol == "ZZZ");
}

TEST_CASE("csv round trip with listing dates") {
    SynthOptions o;
    o.n_series = 2;
    o.n_days = 40;
    auto series = synthesize(o);
    series[1].listing_date = parse_date("2001-05-01");
    const fs::path dir = fs::temp_directory_path() / "metastock_tests";
    fs::create_directories(dir);
    write_csv(dir / "rt.csv", series);
    write_listing_dates(dir / "rt_listing.csv", series);
    auto back = load_csv(dir / "rt.csv").series;
    apply_listing_dates(back, load_listing_dates(dir / "rt_listing.csv"));
    REQUIRE(back.size() == 2);
    CHECK(back[1].listing_date == parse_date("2001-05-01"));
    CHECK(back[0].rows.size() == 40);
    CHECK(back[0].rows[7].adj_close == doctest::Approx(series[0].rows[7].adj_close).epsilon(1e-12));
}

TEST_CASE("split membership follows listing and anchor dates") {
    SplitConfig cfg = SplitConfig::default_ranges();
    SynthOptions old_o;
    old_o.n_series = 2;
    old_o.n_days = 300;
    old_o.start = parse_date("2020-01-06");
    SynthOptions new_o = old_o;
    new_o.symbol_prefix = "NEW";
    new_o.start = cfg.subnew_train.first;
    new_o.n_days = 260;
    auto all = synthesize(old_o);
    for (auto& s : synthesize(new_o)) all.push_back(s);
    // Listed after the sub-new year: ignored entirely.
    SynthOptions late = new_o;
    late.symbol_prefix = "LATE";
    late.start = parse_date("2022-03-01");
    late.n_days = 40;
    for (auto& s : synthesize(late)) all.push_back(s);

    const auto pop = split_population(all, cfg, SampleOptions{});
    CHECK(!pop.old_samples.empty());
    CHECK(!pop.subnew_train.empty());
    CHECK(!pop.subnew_val.empty());
    CHECK(!pop.subnew_test.empty());
    for (const auto& s : pop.old_samples) {
        CHECK(s.symbol.rfind("SYN", 0) == 0);
        CHECK(cfg.old_range.contains(s.anchor_date));
    }
    for (const auto* part : {&pop.subnew_train, &pop.subnew_val, &pop.subnew_test}) {
        for (const auto& s : *part) CHECK(s.symbol.rfind("NEW", 0) == 0);
    }
    for (const auto& s : pop.subnew_val) CHECK(cfg.subnew_val.contains(s.anchor_date));

    std::vector<StockSeries> only_new(all.begin() + 2, all.begin() + 4);
    CHECK_THROWS_AS(split_population(only_new, cfg, SampleOptions{}), DataError);
}

TEST_CASE("split ranges must not overlap") {
    SplitConfig cfg = SplitConfig::default_ranges();
    cfg.subnew_val.first = cfg.subnew_train.last;
    CHECK_THROWS(cfg.validate());
}

TEST_CASE("synthesis is deterministic per seed") {
    SynthOptions o;
    o.n_series = 3;
    o.n_days = 50;
    o.regime = Regime::planted;
    o.seed = 11;
    const auto a = synthesize(o);
    const auto b = synthesize(o);
    for (std::size_t s = 0; s < 3; ++s) {
        for (std::size_t i = 0; i < 50; ++i) CHECK(a[s].rows[i].adj_close == b[s].rows[i].adj_close);
    }
    o.seed = 12;
    CHECK(synthesize(o)[0].rows[10].adj_close != a[0].rows[10].adj_close);
    for (const auto& s : a) CHECK_NOTHROW(s.validate());
}

TEST_CASE("planted motif frequency") {
    SynthOptions o;
    o.n_series = 10;
    o.n_days = 3000;
    o.regime = Regime::planted;
    o.seed = 3;
    std::size_t after_uu = 0, up_after_uu = 0;
    for (const auto& s : synthesize(o)) {
        for (std::size_t t = 3; t < s.rows.size(); ++t) {
            const bool u1 = s.rows[t - 1].adj_close > s.rows[t - 2].adj_close;
            const bool u2 = s.rows[t - 2].adj_close > s.rows[t - 3].adj_close;
            if (u1 && u2) {
                ++after_uu;
                if (s.rows[t].adj_close > s.rows[t - 1].adj_close) ++up_after_uu;
            }
        }
    }
    REQUIRE(after_uu > 5000);
    const double freq = static_cast<double>(up_after_uu) / static_cast<double>(after_uu);
    CHECK(std::abs(freq - 0.9) <= 0.02);
}

TEST_CASE("trend regime drifts upward") {
    SynthOptions o;
    o.n_series = 20;
    o.n_days = 500;
    o.regime = Regime::trend;
    double mean = 0.0;
    std::size_t n = 0;
    for (const auto& s : synthesize(o)) {
        const auto f = compute_features(s);
        for (std::size_t i = 0; i < f.values.rows(); ++i, ++n) mean += f.values(i, 0);
    }
    CHECK(mean / static_cast<double>(n) > 0.0);
}

}  // TEST_SUITE
