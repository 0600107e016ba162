#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "metastock/evaluation.hpp"
#include "metastock/model.hpp"
#include "metastock/optim.hpp"
#include "metastock/tasking.hpp"

namespace metastock {

/// Thrown when a loss turns non-finite; the message names the stage and step.
class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Owns a sample list and counts how often training code reads from it.
class SamplePool {
public:
    SamplePool() = default;
    explicit SamplePool(std::vector<Sample> samples) : samples_(std::move(samples)) {}
    SamplePool(SamplePool&& other) noexcept
        : samples_(std::move(other.samples_)), accesses_(other.accesses_.load()) {}
    SamplePool& operator=(SamplePool&& other) noexcept {
        samples_ = std::move(other.samples_);
        accesses_ = other.accesses_.load();
        return *this;
    }

    std::size_t size() const { return samples_.size(); }
    bool empty() const { return samples_.empty(); }

    std::span<const Sample> read() const {
        ++accesses_;
        return samples_;
    }
    Batch gather(std::span<const std::size_t> indices) const {
        ++accesses_;
        return gather_batch(samples_, indices);
    }
    Batch all() const {
        ++accesses_;
        return make_batch(samples_);
    }
    std::size_t accesses() const { return accesses_.load(); }

    /// Unaudited access for setup code (difficulty scoring, task building).
    std::span<Sample> samples() { return samples_; }
    std::span<const Sample> samples() const { return samples_; }

private:
    std::vector<Sample> samples_;
    mutable std::atomic<std::size_t> accesses_{0};
};

enum class WeightScope { global, per_meta_batch };
enum class UpdateMode { batched, sequential };

WeightScope parse_weight_scope(std::string_view name);
std::string_view weight_scope_name(WeightScope scope);
UpdateMode parse_update_mode(std::string_view name);
std::string_view update_mode_name(UpdateMode mode);

struct MetaConfig {
    std::size_t inner_steps = 6;      // K
    std::size_t meta_batch = 6;       // B
    std::size_t batch_size = 4096;    // C
    std::size_t task_size = 24576;    // W
    std::size_t epochs = 50;
    double inner_lr = 1e-2;           // alpha
    double meta_lr = 1e-2;            // beta
    double adapt_lr = 1e-2;           // gamma
    std::size_t adapt_steps = 6;
    double weight_decay = 1e-5;       // sigma
    bool adaptive = true;
    WeightScope weight_scope = WeightScope::global;
    UpdateMode update_mode = UpdateMode::batched;
    OptimizerKind inner_optimizer = OptimizerKind::sgd;
    OptimizerKind adapt_optimizer = OptimizerKind::adamw;
    Reduction reduction = Reduction::sum;
    std::uint64_t seed = 0;

    void validate() const;
    OptimizerConfig inner_optimizer_config() const;
    OptimizerConfig adapt_optimizer_config() const;
};

/// Loss and gradient at `params` for inner step `step`.
using GradientOracle = std::function<LossGradient(std::span<const double> params, std::size_t step)>;

struct InnerResult {
    std::vector<double> params;
    double first_loss = 0.0;  // loss at the starting parameters
};

/// K optimizer steps from a copy of `start` with the learning rate scaled by `weight`.
InnerResult inner_loop(std::span<const double> start, std::size_t steps, const OptimizerConfig& optimizer,
                       double weight, const GradientOracle& oracle);

/// Inner loop on one task: step k trains on the k-th block of batch_size members (cyclic).
InnerResult inner_loop(const Backbone& model, std::span<const double> start, const Task& task, const SamplePool& pool,
                       const MetaConfig& cfg, double weight);

/// Members of `task` used at inner step `step`.
std::vector<std::size_t> task_block(const Task& task, std::size_t step, std::size_t batch_size);

/// phi <- phi + beta * mean_i(adapted_i - phi)
void meta_step(std::span<double> phi, std::span<const std::vector<double>> adapted, double beta);

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;  // mean per-sample BCE seen by the optimizer this epoch
    std::optional<ClassificationMetrics> validation;
};

struct RunRecord {
    std::vector<EpochRecord> epochs;
    std::vector<double> pretrain_loss;  // transfer learning only
    std::size_t best_epoch = 0;
    double wall_seconds = 0.0;
};

struct TrainResult {
    std::unique_ptr<Backbone> model;           // selected, adapted parameters
    std::vector<double> meta_params;           // initialization before adaptation (meta methods)
    RunRecord record;
};

/// Old tasks and sub-new tasks index into their pools; weights on old tasks
/// are (re)computed by train_metastock when cfg.adaptive is set.
struct TrainingData {
    SamplePool old_pool;
    SamplePool subnew_train;
    SamplePool subnew_val;
    std::vector<Task> old_tasks;
    std::vector<Task> subnew_tasks;
};

/// Fine-tunes `params` on the sub-new tasks for cfg.adapt_steps optimizer steps
/// (cfg.adapt_optimizer at rate gamma). Step s uses block s % K of task (s / K) % M.
std::vector<double> adapt(const Backbone& model, std::span<const double> params, std::span<const Task> tasks,
                          const SamplePool& pool, const MetaConfig& cfg);

/// Weighted Reptile meta-training on the old tasks followed by adaptation.
/// Validation MCC of the adapted model picks the returned epoch.
TrainResult train_metastock(const BackboneSpec& spec, TrainingData& data, const MetaConfig& cfg);

enum class Baseline { scratch, transfer, reptile };

Baseline parse_baseline(std::string_view name);
std::string_view baseline_name(Baseline kind);

/// scratch: supervised on sub-new train only. transfer: supervised on all old
/// samples, then fine-tuned like scratch. reptile: train_metastock with adaptive off.
TrainResult train_baseline(Baseline kind, const BackboneSpec& spec, TrainingData& data, const MetaConfig& cfg);

/// Supervised epochs over a pool with shuffled mini-batches; returns per-epoch
/// mean per-sample loss and leaves the selected parameters in `model`.
struct SupervisedOptions {
    std::size_t epochs = 1;
    std::size_t batch_size = 32;
    OptimizerConfig optimizer;
    Reduction reduction = Reduction::sum;
    std::uint64_t seed = 0;
    const SamplePool* validation = nullptr;  // when set, keep the best-MCC epoch
};

std::vector<EpochRecord> supervised_train(Backbone& model, const SamplePool& pool, const SupervisedOptions& options,
                                          std::size_t* best_epoch = nullptr);

}  // namespace metastock
