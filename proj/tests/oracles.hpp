#pragma once

// Independent reference computations used by the unit and acceptance tests.
// None of these call into the library code they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "metastock/model.hpp"

namespace oracle {

// Direct convolution followed by keeping every second output, with periodic
// extension of the input. `low` is the analysis low-pass filter; the high-pass
// is written out explicitly for the two families we test.
inline void conv_downsample(std::span<const double> x, std::span<const double> filter, std::vector<double>& out) {
    const std::size_t n = x.size();
    std::vector<double> full(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t m = 0; m < filter.size(); ++m) s += filter[m] * x[(i + m) % n];
        full[i] = s;
    }
    out.clear();
    for (std::size_t i = 0; i < n; i += 2) out.push_back(full[i]);
}

inline std::vector<double> haar_low() { return {1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0)}; }
inline std::vector<double> haar_high() { return {1.0 / std::sqrt(2.0), -1.0 / std::sqrt(2.0)}; }

inline std::vector<double> db2_low() {
    const double s3 = std::sqrt(3.0), d = 4.0 * std::sqrt(2.0);
    return {(1 + s3) / d, (3 + s3) / d, (3 - s3) / d, (1 - s3) / d};
}
inline std::vector<double> db2_high() {
    const auto h = db2_low();
    return {h[3], -h[2], h[1], -h[0]};
}

// Central differences of the summed BCE loss with respect to parameter `k`.
inline double fd_partial(const metastock::Backbone& model, const metastock::Batch& batch, std::size_t k,
                         double step) {
    auto probe = model.clone();
    std::vector<double> p = model.get_params();
    const double orig = p[k];
    p[k] = orig + step;
    probe->set_params(p);
    const double up = metastock::batch_loss(*probe, batch);
    p[k] = orig - step;
    probe->set_params(p);
    const double down = metastock::batch_loss(*probe, batch);
    return (up - down) / (2.0 * step);
}

// Two-sided signed-rank p-value by listing all 2^n sign assignments of the
// given (doubled, integer) ranks. P = min(1, 2 * P(T+ <= t) or P(T+ >= t)).
inline double wilcoxon_enumerate(const std::vector<int>& doubled_ranks, int doubled_t_plus) {
    const std::size_t n = doubled_ranks.size();
    const int total = std::accumulate(doubled_ranks.begin(), doubled_ranks.end(), 0);
    const std::uint64_t count = std::uint64_t{1} << n;
    std::uint64_t le = 0, ge = 0;
    for (std::uint64_t mask = 0; mask < count; ++mask) {
        int t = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (mask & (std::uint64_t{1} << i)) t += doubled_ranks[i];
        }
        if (t <= doubled_t_plus) ++le;
        if (t >= doubled_t_plus) ++ge;
    }
    // Symmetric null: use the tail on the side of the observed value.
    const std::uint64_t tail = 2 * doubled_t_plus <= total ? le : ge;
    return std::min(1.0, 2.0 * static_cast<double>(tail) / static_cast<double>(count));
}

// Mid-ranks (doubled so they stay integers) of |d| for non-zero d.
inline std::vector<int> doubled_midranks(const std::vector<double>& diffs) {
    std::vector<double> mags;
    for (double d : diffs) {
        if (d != 0.0) mags.push_back(std::abs(d));
    }
    std::vector<int> out(mags.size());
    for (std::size_t i = 0; i < mags.size(); ++i) {
        int less = 0, equal = 0;
        for (double m : mags) {
            if (m < mags[i]) ++less;
            if (m == mags[i]) ++equal;
        }
        // Ranks less+1 .. less+equal, average doubled.
        out[i] = 2 * less + equal + 1;
    }
    return out;
}

struct Counts {
    double tp = 0, fp = 0, tn = 0, fn = 0;
};

inline Counts recount(const std::vector<int>& pred, const std::vector<int>& truth) {
    Counts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] == 1 && truth[i] == 1) c.tp += 1;
        if (pred[i] == 1 && truth[i] == 0) c.fp += 1;
        if (pred[i] == 0 && truth[i] == 0) c.tn += 1;
        if (pred[i] == 0 && truth[i] == 1) c.fn += 1;
    }
    return c;
}

inline double mcc(const Counts& c) {
    const double den = (c.tp + c.fp) * (c.tp + c.fn) * (c.tn + c.fp) * (c.tn + c.fn);
    if (den == 0.0) return 0.0;
    return (c.tp * c.tn - c.fp * c.fn) / std::sqrt(den);
}

inline double f1(const Counts& c) {
    const double den = 2 * c.tp + c.fp + c.fn;
    return den == 0.0 ? 0.0 : 2 * c.tp / den;
}

inline double max_drawdown(const std::vector<double>& equity) {
    double peak = equity.front(), worst = 0.0;
    for (double e : equity) {
        peak = std::max(peak, e);
        worst = std::min(worst, e / peak - 1.0);
    }
    return worst;
}

}  // namespace oracle
