#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "metastock/market_data.hpp"

namespace metastock::wavelet {

enum class Family { haar, db2 };

Family parse_family(std::string_view name);
std::string_view family_name(Family family);

struct Options {
    Family family = Family::haar;
    int levels = 1;
};

/// Analysis filter pair (low-pass, high-pass) of an orthonormal wavelet.
struct FilterBank {
    std::vector<double> low;
    std::vector<double> high;
};

const FilterBank& filters(Family family);

struct Coefficients {
    std::vector<double> smooth;
    std::vector<double> detail;
};

/// One analysis step: odd-length input is padded by repeating the last value,
/// then smooth_k = sum_m low[m] x[2k+m], detail_k = sum_m high[m] x[2k+m] with
/// periodic wrap. For Haar this is smooth_k = (x_2k + x_2k+1)/sqrt2 and
/// detail_k = (x_2k - x_2k+1)/sqrt2. Throws std::invalid_argument for length < 2.
Coefficients dwt_single_level(std::span<const double> signal, Family family = Family::haar);

/// Synthesis step; recovers the (padded) signal exactly up to rounding.
std::vector<double> idwt_single_level(const Coefficients& coeffs, Family family = Family::haar);

/// Per-channel decomposition of a multichannel series.
struct DwtResult {
    std::vector<std::vector<double>> smooth;
    std::vector<std::vector<double>> detail;

    std::size_t channel_count() const { return smooth.size(); }
};

/// Transforms every column of `series` (rows are time steps). With levels > 1 the
/// smooth part is decomposed again and every level's detail is concatenated.
DwtResult decompose(const Matrix& series, const Options& options = {});

/// Euclidean norm of all detail coefficients across channels.
double sample_difficulty(const Sample& sample, const Options& options = {});
double sample_difficulty(const Matrix& features, const Options& options = {});

/// Root sum of squares of per-sample scores. Throws on an empty list.
double task_difficulty(std::span<const double> sample_difficulties);

/// Fills Sample::difficulty for every sample. OpenMP-parallel over samples.
void assign_difficulties(std::span<Sample> samples, const Options& options = {});

/// Serial reference for assign_difficulties.
void assign_difficulties_serial(std::span<Sample> samples, const Options& options = {});

}  // namespace metastock::wavelet
