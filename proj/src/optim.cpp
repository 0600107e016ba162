#include "metastock/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace metastock {

OptimizerKind parse_optimizer(std::string_view name) {
    if (name == "sgd") return OptimizerKind::sgd;
    if (name == "adamw") return OptimizerKind::adamw;
    throw std::invalid_argument("unknown optimizer '" + std::string(name) + "'");
}

std::string_view optimizer_name(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adamw"; }

void sgd_step(std::span<double> params, std::span<const double> grad, double learning_rate, double scale) {
    if (params.size() != grad.size()) throw std::invalid_argument("sgd: parameter/gradient size mismatch");
    const double step = learning_rate * scale;
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= step * grad[i];
}

void Optimizer::reset() {
    m_.clear();
    v_.clear();
    step_ = 0;
}

void Optimizer::step(std::span<double> params, std::span<const double> grad, double scale) {
    if (params.size() != grad.size()) throw std::invalid_argument("optimizer: parameter/gradient size mismatch");
    const double lr = config_.learning_rate * scale;
    if (config_.kind == OptimizerKind::sgd) {
        sgd_step(params, grad, config_.learning_rate, scale);
        ++step_;
        return;
    }
    adamw_step(params, grad, lr);
}

void Optimizer::adamw_step(std::span<double> params, std::span<const double> grad, double lr) {
    if (m_.size() != params.size()) {
        m_.assign(params.size(), 0.0);
        v_.assign(params.size(), 0.0);
        step_ = 0;
    }
    ++step_;
    const double b1 = config_.beta1;
    const double b2 = config_.beta2;
    const double correction1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const double correction2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grad[i];
        m_[i] = b1 * m_[i] + (1.0 - b1) * g;
        v_[i] = b2 * v_[i] + (1.0 - b2) * g * g;
        const double m_hat = m_[i] / correction1;
        const double v_hat = v_[i] / correction2;
        // Decoupled decay acts on the weight directly, not through the moments.
        params[i] -= lr * config_.weight_decay * params[i];
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
}

}  // namespace metastock
