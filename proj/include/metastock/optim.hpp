#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace metastock {

enum class OptimizerKind { sgd, adamw };

OptimizerKind parse_optimizer(std::string_view name);
std::string_view optimizer_name(OptimizerKind kind);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::sgd;
    double learning_rate = 1e-2;
    double weight_decay = 1e-5;  // sigma, AdamW only
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// params <- params - lr * scale * grad
void sgd_step(std::span<double> params, std::span<const double> grad, double learning_rate, double scale);

/// Optimizer with its moment state. Moments are (re)sized lazily to the parameter count.
class Optimizer {
public:
    explicit Optimizer(OptimizerConfig config) : config_(config) {}

    const OptimizerConfig& config() const { return config_; }
    std::uint64_t steps() const { return step_; }
    std::span<const double> first_moment() const { return m_; }
    std::span<const double> second_moment() const { return v_; }

    /// One update. `scale` multiplies the learning rate (the task weight for weighted inner steps).
    void step(std::span<double> params, std::span<const double> grad, double scale = 1.0);

    void reset();

private:
    OptimizerConfig config_;
    std::vector<double> m_;
    std::vector<double> v_;
    std::uint64_t step_ = 0;

    void adamw_step(std::span<double> params, std::span<const double> grad, double lr);
};

}  // namespace metastock
