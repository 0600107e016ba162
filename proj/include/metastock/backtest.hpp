#pragma once

#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "metastock/market_data.hpp"

namespace metastock {

/// Model call for one symbol on one date: up = expect a rise the next day.
struct Signal {
    std::string symbol;
    Date date;
    bool up = false;
};

struct TradeLedger {
    std::vector<Date> dates;
    std::vector<double> equity;        // starts at 1.0
    std::vector<double> returns;       // returns[0] = 0, then equity[t]/equity[t-1] - 1
    std::vector<std::set<std::string>> positions;  // held at the close of each date

    std::size_t size() const { return dates.size(); }
};

struct BacktestOptions {
    double cost_bps = 0.0;  // charged on each entry and exit, pro rata to the traded capital share
};

/// Long-only: buy at the close of an up-signal date when flat, sell at the close
/// of a down-signal date when held. Held symbols share capital equally; each day's
/// portfolio return is the mean close-to-close (adjusted) return of the positions
/// held overnight. The calendar is every trading date of the signalled symbols
/// between the first and last signal date.
TradeLedger run_strategy(std::span<const Signal> signals, std::span<const StockSeries> prices,
                         const BacktestOptions& options = {});

struct TradingMetrics {
    double arr = 0.0;
    double sharpe = 0.0;
    double mdd = 0.0;
    double sortino = 0.0;
    double calmar = 0.0;
    double omega = 0.0;
    bool sharpe_degenerate = false;
    bool sortino_degenerate = false;
    bool calmar_degenerate = false;
    bool omega_degenerate = false;
    std::size_t days = 0;
};

inline constexpr double kTradingDaysPerYear = 252.0;

TradingMetrics trading_metrics(const TradeLedger& ledger);

/// Builds a ledger from an equity path alone (positions left empty).
TradeLedger ledger_from_equity(std::span<const Date> dates, std::span<const double> equity);

/// CSV with header date,equity,daily_return,n_positions.
void write_ledger_csv(const std::filesystem::path& path, const TradeLedger& ledger);

}  // namespace metastock
