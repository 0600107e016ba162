#include "metastock/backtest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>

namespace metastock {

TradeLedger run_strategy(std::span<const Signal> signals, std::span<const StockSeries> prices,
                         const BacktestOptions& options) {
    TradeLedger ledger;
    if (signals.empty()) return ledger;

    std::map<std::string, std::map<Date, double>> closes;
    for (const auto& s : prices) {
        auto& m = closes[s.symbol];
        for (const auto& b : s.rows) m.emplace(b.date, b.adj_close);
    }

    std::map<Date, std::vector<const Signal*>> by_date;
    for (const auto& sig : signals) {
        auto it = closes.find(sig.symbol);
        if (it == closes.end() || !it->second.contains(sig.date)) {
            throw DataError("no close price for " + sig.symbol + " on signal date " + format_date(sig.date));
        }
        by_date[sig.date].push_back(&sig);
    }
    const Date first = by_date.begin()->first;
    const Date last = by_date.rbegin()->first;

    std::set<Date> calendar;
    for (const auto& [symbol, m] : closes) {
        const bool signalled = std::any_of(signals.begin(), signals.end(),
                                           [&](const Signal& s) { return s.symbol == symbol; });
        if (!signalled) continue;
        for (auto it = m.lower_bound(first); it != m.end() && it->first <= last; ++it) calendar.insert(it->first);
    }

    std::set<std::string> held;
    std::map<std::string, double> last_close;
    double equity = 1.0;
    const double cost = options.cost_bps / 1e4;

    for (const Date date : calendar) {
        double day_return = 0.0;
        if (!ledger.dates.empty() && !held.empty()) {
            double sum = 0.0;
            for (const auto& symbol : held) {
                const auto& m = closes.at(symbol);
                auto it = m.find(date);
                if (it == m.end()) continue;  // no print today: flat for this symbol
                sum += it->second / last_close.at(symbol) - 1.0;
            }
            day_return = sum / static_cast<double>(held.size());
        }
        for (auto& [symbol, close] : last_close) {
            if (auto it = closes.at(symbol).find(date); it != closes.at(symbol).end()) close = it->second;
        }

        std::size_t trades = 0;
        const std::size_t before = held.size();
        if (auto it = by_date.find(date); it != by_date.end()) {
            for (const Signal* sig : it->second) {
                if (sig->up && !held.contains(sig->symbol)) {
                    held.insert(sig->symbol);
                    last_close[sig->symbol] = closes.at(sig->symbol).at(date);
                    ++trades;
                } else if (!sig->up && held.erase(sig->symbol) > 0) {
                    last_close.erase(sig->symbol);
                    ++trades;
                }
            }
        }
        if (trades > 0 && cost > 0.0) {
            const double share = static_cast<double>(trades) / static_cast<double>(std::max(before, held.size()));
            day_return = (1.0 + day_return) * (1.0 - cost * share) - 1.0;
        }

        if (!ledger.dates.empty()) equity *= 1.0 + day_return;
        ledger.dates.push_back(date);
        ledger.equity.push_back(equity);
        ledger.returns.push_back(ledger.dates.size() == 1 ? 0.0 : day_return);
        ledger.positions.push_back(held);
    }
    return ledger;
}

TradeLedger ledger_from_equity(std::span<const Date> dates, std::span<const double> equity) {
    if (dates.size() != equity.size()) throw std::invalid_argument("ledger_from_equity: length mismatch");
    TradeLedger ledger;
    ledger.dates.assign(dates.begin(), dates.end());
    ledger.equity.assign(equity.begin(), equity.end());
    ledger.positions.resize(dates.size());
    ledger.returns.resize(dates.size(), 0.0);
    for (std::size_t t = 1; t < equity.size(); ++t) ledger.returns[t] = equity[t] / equity[t - 1] - 1.0;
    return ledger;
}

TradingMetrics trading_metrics(const TradeLedger& ledger) {
    if (ledger.size() < 2) throw std::invalid_argument("trading metrics need at least 2 dates");
    TradingMetrics m;
    const std::size_t n = ledger.size() - 1;
    m.days = n;
    const std::span<const double> r(ledger.returns.data() + 1, n);

    m.arr = std::pow(ledger.equity.back() / ledger.equity.front(), kTradingDaysPerYear / static_cast<double>(n)) - 1.0;

    double mean = 0.0;
    for (double x : r) mean += x;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    double downside = 0.0;
    double gains = 0.0;
    double losses = 0.0;
    for (double x : r) {
        ss += (x - mean) * (x - mean);
        if (x < 0.0) downside += x * x;
        gains += std::max(x, 0.0);
        losses += std::max(-x, 0.0);
    }
    const double annual = std::sqrt(kTradingDaysPerYear);
    const double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    if (sd > 0.0) m.sharpe = mean / sd * annual;
    else m.sharpe_degenerate = true;

    const double dd = std::sqrt(downside / static_cast<double>(n));
    if (dd > 0.0) m.sortino = mean / dd * annual;
    else m.sortino_degenerate = true;

    double peak = ledger.equity.front();
    for (double e : ledger.equity) {
        peak = std::max(peak, e);
        m.mdd = std::min(m.mdd, (e - peak) / peak);
    }
    if (m.mdd < 0.0) m.calmar = m.arr / std::abs(m.mdd);
    else m.calmar_degenerate = true;

    if (losses > 0.0) m.omega = gains / losses;
    else m.omega_degenerate = true;
    return m;
}

void write_ledger_csv(const std::filesystem::path& path, const TradeLedger& ledger) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "date,equity,daily_return,n_positions\n";
    char buf[128];
    for (std::size_t t = 0; t < ledger.size(); ++t) {
        std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%zu\n", format_date(ledger.dates[t]).c_str(), ledger.equity[t],
                      ledger.returns[t], ledger.positions[t].size());
        out << buf;
    }
}

}  // namespace metastock
