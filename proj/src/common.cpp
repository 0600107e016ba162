#include "metastock/common.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace metastock {

namespace {

int parse_int(std::string_view text, std::string_view whole) {
    int value = 0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end) {
        throw std::invalid_argument("bad date '" + std::string(whole) + "', expected YYYY-MM-DD");
    }
    return value;
}

}  // namespace

Date parse_date(std::string_view text) {
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
        throw std::invalid_argument("bad date '" + std::string(text) + "', expected YYYY-MM-DD");
    }
    using namespace std::chrono;
    const year_month_day ymd{year{parse_int(text.substr(0, 4), text)},
                             month{static_cast<unsigned>(parse_int(text.substr(5, 2), text))},
                             day{static_cast<unsigned>(parse_int(text.substr(8, 2), text))}};
    if (!ymd.ok()) {
        throw std::invalid_argument("invalid calendar date '" + std::string(text) + "'");
    }
    return sys_days{ymd};
}

std::string format_date(Date date) {
    const std::chrono::year_month_day ymd{date};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

Rng::Rng(std::uint64_t seed) : engine_(seed) {}

std::uint64_t Rng::next_u64() { return engine_(); }

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

std::size_t Rng::below(std::size_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below(0)");
    const std::uint64_t bound = n;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return static_cast<std::size_t>(x % bound);
}

}  // namespace metastock
