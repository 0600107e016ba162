#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "metastock/model.hpp"
#include "metastock/tasking.hpp"

namespace metastock {

struct ConfusionMatrix {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;

    std::size_t total() const { return tp + fp + tn + fn; }
    /// Relabels class 0 as 1 and vice versa.
    ConfusionMatrix swapped() const { return {tn, fn, tp, fp}; }
    bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> labels);

struct ClassificationMetrics {
    double acc = 0.0;
    double mcc = 0.0;
    double f1 = 0.0;
    bool mcc_degenerate = false;  // a denominator factor was zero
    bool f1_degenerate = false;
    std::size_t n = 0;
};

ClassificationMetrics classification_metrics(const ConfusionMatrix& cm);

ClassificationMetrics evaluate(const Backbone& model, const Batch& batch);
ClassificationMetrics evaluate(const Backbone& model, std::span<const Sample> samples);

struct WilcoxonResult {
    double statistic = 0.0;  // min(T+, T-)
    double t_plus = 0.0;
    double p_value = 1.0;
    std::size_t n = 0;       // pairs with a non-zero difference
    bool exact = true;
};

/// Two-sided signed-rank test on paired scores. Zero differences are dropped,
/// tied magnitudes get average ranks. Exact null distribution for n <= 20,
/// tie-corrected normal approximation above. Needs at least 6 non-zero pairs.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b);

/// (new - old) / |old| * 100; nullopt when old is 0 and new is not.
std::optional<double> relative_gain(double new_value, double old_value);

struct GroupComparison {
    std::string group;
    std::size_t tasks = 0;
    std::size_t samples = 0;
    ClassificationMetrics baseline;
    ClassificationMetrics candidate;
    std::optional<double> acc_gain;
    std::optional<double> mcc_gain;
    std::optional<double> f1_gain;
};

/// Per-tercile metrics for a baseline and a candidate model and the candidate's relative gains.
std::vector<GroupComparison> tercile_report(const Backbone& baseline, const Backbone& candidate,
                                            const Terciles& groups, std::span<const Sample> pool);

}  // namespace metastock
