#include "metastock/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace metastock {

ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> labels) {
    if (predictions.size() != labels.size()) {
        throw std::invalid_argument("confusion: " + std::to_string(predictions.size()) + " predictions vs " +
                                    std::to_string(labels.size()) + " labels");
    }
    if (labels.empty()) throw std::invalid_argument("confusion: no samples");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool pred = predictions[i] == 1;
        const bool truth = labels[i] == 1;
        if (pred && truth) ++cm.tp;
        else if (pred) ++cm.fp;
        else if (truth) ++cm.fn;
        else ++cm.tn;
    }
    return cm;
}

ClassificationMetrics classification_metrics(const ConfusionMatrix& cm) {
    const std::size_t total = cm.total();
    if (total == 0) throw std::invalid_argument("classification metrics of an empty confusion matrix");
    ClassificationMetrics m;
    m.n = total;
    const double tp = static_cast<double>(cm.tp);
    const double fp = static_cast<double>(cm.fp);
    const double tn = static_cast<double>(cm.tn);
    const double fn = static_cast<double>(cm.fn);
    m.acc = (tp + tn) / static_cast<double>(total);

    const double denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
    if (denom == 0.0) {
        m.mcc = 0.0;
        m.mcc_degenerate = true;
    } else {
        m.mcc = (tp * tn - fp * fn) / std::sqrt(denom);
    }
    const double f1_denom = 2.0 * tp + fp + fn;
    if (f1_denom == 0.0) {
        m.f1 = 0.0;
        m.f1_degenerate = true;
    } else {
        m.f1 = 2.0 * tp / f1_denom;
    }
    return m;
}

ClassificationMetrics evaluate(const Backbone& model, const Batch& batch) {
    const std::vector<double> probs = forward(model, batch);
    const std::vector<int> preds = predict_labels(probs);
    std::vector<int> labels(batch.labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = batch.labels[i] >= 0.5 ? 1 : 0;
    return classification_metrics(confusion(preds, labels));
}

ClassificationMetrics evaluate(const Backbone& model, std::span<const Sample> samples) {
    return evaluate(model, make_batch(samples));
}

namespace {

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace

WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("wilcoxon: paired lists differ in length");
    std::vector<double> diffs;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        if (d != 0.0) diffs.push_back(d);
    }
    const std::size_t n = diffs.size();
    if (n < 6) {
        throw std::invalid_argument("wilcoxon: need at least 6 non-zero differences, got " + std::to_string(n));
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t i, std::size_t j) { return std::abs(diffs[i]) < std::abs(diffs[j]); });

    // Doubled ranks stay integral under averaging of ties.
    std::vector<std::size_t> rank2(n);
    double tie_term = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && std::abs(diffs[order[j + 1]]) == std::abs(diffs[order[i]])) ++j;
        const std::size_t doubled = (i + 1) + (j + 1);
        for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = doubled;
        const double t = static_cast<double>(j - i + 1);
        tie_term += t * t * t - t;
        i = j + 1;
    }

    std::size_t t_plus2 = 0;
    std::size_t total2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        total2 += rank2[i];
        if (diffs[i] > 0) t_plus2 += rank2[i];
    }

    WilcoxonResult out;
    out.n = n;
    out.t_plus = static_cast<double>(t_plus2) / 2.0;
    out.statistic = std::min(out.t_plus, static_cast<double>(total2 - t_plus2) / 2.0);

    if (n <= 20) {
        // counts[s] = number of sign assignments whose doubled positive-rank sum is s.
        std::vector<double> counts(total2 + 1, 0.0);
        counts[0] = 1.0;
        std::size_t reach = 0;
        for (std::size_t r : rank2) {
            for (std::size_t s = reach + 1; s-- > 0;) {
                if (counts[s] != 0.0) counts[s + r] += counts[s];
            }
            reach += r;
        }
        const double all = std::ldexp(1.0, static_cast<int>(n));
        double lower = 0.0;
        double upper = 0.0;
        for (std::size_t s = 0; s <= total2; ++s) {
            if (s <= t_plus2) lower += counts[s];
            if (s >= t_plus2) upper += counts[s];
        }
        out.p_value = std::min(1.0, 2.0 * std::min(lower, upper) / all);
        out.exact = true;
    } else {
        const double nn = static_cast<double>(n);
        const double mean = nn * (nn + 1.0) / 4.0;
        const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
        const double z = var > 0.0 ? (out.t_plus - mean) / std::sqrt(var) : 0.0;
        out.p_value = std::min(1.0, 2.0 * normal_sf(std::abs(z)));
        out.exact = false;
    }
    return out;
}

std::optional<double> relative_gain(double new_value, double old_value) {
    if (old_value == 0.0) {
        if (new_value == 0.0) return 0.0;
        return std::nullopt;
    }
    return (new_value - old_value) / std::abs(old_value) * 100.0;
}

std::vector<GroupComparison> tercile_report(const Backbone& baseline, const Backbone& candidate,
                                            const Terciles& groups, std::span<const Sample> pool) {
    const std::pair<const char*, const std::vector<Task>*> named[] = {
        {"Easy", &groups.easy}, {"Medium", &groups.medium}, {"Hard", &groups.hard}};
    std::vector<GroupComparison> rows;
    for (const auto& [name, tasks] : named) {
        if (tasks->empty()) throw std::invalid_argument(std::string("tercile group ") + name + " is empty");
        std::vector<std::size_t> members;
        for (const Task& t : *tasks) members.insert(members.end(), t.members.begin(), t.members.end());
        const Batch batch = gather_batch(pool, members);
        GroupComparison row;
        row.group = name;
        row.tasks = tasks->size();
        row.samples = members.size();
        row.baseline = evaluate(baseline, batch);
        row.candidate = evaluate(candidate, batch);
        row.acc_gain = relative_gain(row.candidate.acc, row.baseline.acc);
        row.mcc_gain = relative_gain(row.candidate.mcc, row.baseline.mcc);
        row.f1_gain = relative_gain(row.candidate.f1, row.baseline.f1);
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace metastock
