#include "metastock/wavelet.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace metastock::wavelet {

Family parse_family(std::string_view name) {
    if (name == "haar") return Family::haar;
    if (name == "db2") return Family::db2;
    throw std::invalid_argument("unknown wavelet family '" + std::string(name) + "'");
}

std::string_view family_name(Family family) {
    return family == Family::haar ? "haar" : "db2";
}

namespace {

FilterBank make_bank(std::vector<double> low) {
    // Quadrature mirror: high[m] = (-1)^m low[L-1-m].
    const std::size_t len = low.size();
    std::vector<double> high(len);
    for (std::size_t m = 0; m < len; ++m) {
        high[m] = (m % 2 == 0 ? 1.0 : -1.0) * low[len - 1 - m];
    }
    return {std::move(low), std::move(high)};
}

std::vector<double> pad_even(std::span<const double> signal) {
    std::vector<double> x(signal.begin(), signal.end());
    if (x.size() % 2 == 1) x.push_back(x.back());
    return x;
}

}  // namespace

const FilterBank& filters(Family family) {
    static const FilterBank haar = [] {
        const double h = 1.0 / std::sqrt(2.0);
        FilterBank b = make_bank({h, h});
        return b;
    }();
    static const FilterBank db2 = [] {
        const double s3 = std::sqrt(3.0);
        const double norm = 4.0 * std::sqrt(2.0);
        return make_bank({(1 + s3) / norm, (3 + s3) / norm, (3 - s3) / norm, (1 - s3) / norm});
    }();
    return family == Family::haar ? haar : db2;
}

Coefficients dwt_single_level(std::span<const double> signal, Family family) {
    if (signal.size() < 2) throw std::invalid_argument("dwt needs a signal of length >= 2");
    const FilterBank& bank = filters(family);
    const std::vector<double> x = pad_even(signal);
    const std::size_t n = x.size();
    if (n < bank.low.size()) {
        throw std::invalid_argument("signal of length " + std::to_string(signal.size()) + " too short for " +
                                    std::string(family_name(family)));
    }
    const std::size_t half = n / 2;
    Coefficients out{std::vector<double>(half), std::vector<double>(half)};
    for (std::size_t k = 0; k < half; ++k) {
        double lo = 0.0;
        double hi = 0.0;
        for (std::size_t m = 0; m < bank.low.size(); ++m) {
            const double v = x[(2 * k + m) % n];
            lo += bank.low[m] * v;
            hi += bank.high[m] * v;
        }
        out.smooth[k] = lo;
        out.detail[k] = hi;
    }
    return out;
}

std::vector<double> idwt_single_level(const Coefficients& coeffs, Family family) {
    if (coeffs.smooth.size() != coeffs.detail.size() || coeffs.smooth.empty()) {
        throw std::invalid_argument("idwt needs equal, non-empty coefficient vectors");
    }
    const FilterBank& bank = filters(family);
    const std::size_t n = 2 * coeffs.smooth.size();
    std::vector<double> x(n, 0.0);
    for (std::size_t k = 0; k < coeffs.smooth.size(); ++k) {
        for (std::size_t m = 0; m < bank.low.size(); ++m) {
            x[(2 * k + m) % n] += bank.low[m] * coeffs.smooth[k] + bank.high[m] * coeffs.detail[k];
        }
    }
    return x;
}

DwtResult decompose(const Matrix& series, const Options& options) {
    if (options.levels < 1) throw std::invalid_argument("wavelet levels must be >= 1");
    DwtResult out;
    std::vector<double> column(series.rows());
    for (std::size_t c = 0; c < series.cols(); ++c) {
        for (std::size_t r = 0; r < series.rows(); ++r) column[r] = series(r, c);
        std::vector<double> smooth = column;
        std::vector<double> detail;
        for (int level = 0; level < options.levels; ++level) {
            if (level > 0 && smooth.size() < 2) break;
            Coefficients step = dwt_single_level(smooth, options.family);
            detail.insert(detail.end(), step.detail.begin(), step.detail.end());
            smooth = std::move(step.smooth);
        }
        out.smooth.push_back(std::move(smooth));
        out.detail.push_back(std::move(detail));
    }
    return out;
}

double sample_difficulty(const Matrix& features, const Options& options) {
    const DwtResult dwt = decompose(features, options);
    double ss = 0.0;
    for (const auto& channel : dwt.detail) {
        for (double v : channel) ss += v * v;
    }
    return std::sqrt(ss);
}

double sample_difficulty(const Sample& sample, const Options& options) {
    return sample_difficulty(sample.features, options);
}

double task_difficulty(std::span<const double> sample_difficulties) {
    if (sample_difficulties.empty()) throw std::invalid_argument("task difficulty of an empty task");
    double ss = 0.0;
    for (double c : sample_difficulties) ss += c * c;
    return std::sqrt(ss);
}

void assign_difficulties(std::span<Sample> samples, const Options& options) {
    const auto n = static_cast<std::ptrdiff_t>(samples.size());
    #pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        samples[i].difficulty = sample_difficulty(samples[i].features, options);
    }
}

void assign_difficulties_serial(std::span<Sample> samples, const Options& options) {
    for (auto& s : samples) s.difficulty = sample_difficulty(s.features, options);
}

}  // namespace metastock::wavelet
