#include "metastock/meta_train.hpp"

#include <chrono>
#include <cmath>
#include <exception>
#include <numeric>
#include <string>

namespace metastock {

WeightScope parse_weight_scope(std::string_view name) {
    if (name == "global") return WeightScope::global;
    if (name == "per_meta_batch") return WeightScope::per_meta_batch;
    throw std::invalid_argument("unknown weight scope '" + std::string(name) + "'");
}

std::string_view weight_scope_name(WeightScope scope) {
    return scope == WeightScope::global ? "global" : "per_meta_batch";
}

UpdateMode parse_update_mode(std::string_view name) {
    if (name == "batched") return UpdateMode::batched;
    if (name == "sequential") return UpdateMode::sequential;
    throw std::invalid_argument("unknown update mode '" + std::string(name) + "'");
}

std::string_view update_mode_name(UpdateMode mode) { return mode == UpdateMode::batched ? "batched" : "sequential"; }

Baseline parse_baseline(std::string_view name) {
    if (name == "scratch") return Baseline::scratch;
    if (name == "transfer") return Baseline::transfer;
    if (name == "reptile") return Baseline::reptile;
    throw std::invalid_argument("unknown baseline '" + std::string(name) + "'");
}

std::string_view baseline_name(Baseline kind) {
    switch (kind) {
        case Baseline::scratch: return "scratch";
        case Baseline::transfer: return "transfer";
        case Baseline::reptile: return "reptile";
    }
    return "?";
}

void MetaConfig::validate() const {
    if (inner_steps < 1 || meta_batch < 1 || epochs < 1 || batch_size < 1 || task_size < 1) {
        throw std::invalid_argument("K, B, C, W and epochs must all be at least 1");
    }
    if (!(inner_lr > 0) || !(meta_lr > 0) || !(adapt_lr > 0)) {
        throw std::invalid_argument("learning rates must be positive");
    }
    if (!(weight_decay >= 0)) throw std::invalid_argument("weight decay must be non-negative");
}

OptimizerConfig MetaConfig::inner_optimizer_config() const {
    OptimizerConfig c;
    c.kind = inner_optimizer;
    c.learning_rate = inner_lr;
    c.weight_decay = weight_decay;
    return c;
}

OptimizerConfig MetaConfig::adapt_optimizer_config() const {
    OptimizerConfig c;
    c.kind = adapt_optimizer;
    c.learning_rate = adapt_lr;
    c.weight_decay = weight_decay;
    return c;
}

InnerResult inner_loop(std::span<const double> start, std::size_t steps, const OptimizerConfig& optimizer,
                       double weight, const GradientOracle& oracle) {
    InnerResult out{std::vector<double>(start.begin(), start.end()), 0.0};
    Optimizer opt(optimizer);
    for (std::size_t k = 0; k < steps; ++k) {
        const LossGradient lg = oracle(out.params, k);
        if (!std::isfinite(lg.loss)) {
            throw TrainingDiverged("non-finite loss at inner step " + std::to_string(k + 1));
        }
        if (k == 0) out.first_loss = lg.loss;
        opt.step(out.params, lg.grad, weight);
    }
    return out;
}

std::vector<std::size_t> task_block(const Task& task, std::size_t step, std::size_t batch_size) {
    const std::size_t w = task.members.size();
    if (w == 0) throw std::invalid_argument("empty task");
    const std::size_t take = std::min(batch_size, w);
    std::vector<std::size_t> out(take);
    const std::size_t start = (step * batch_size) % w;
    for (std::size_t i = 0; i < take; ++i) out[i] = task.members[(start + i) % w];
    return out;
}

InnerResult inner_loop(const Backbone& model, std::span<const double> start, const Task& task, const SamplePool& pool,
                       const MetaConfig& cfg, double weight) {
    auto local = model.clone();
    const GradientOracle oracle = [&](std::span<const double> params, std::size_t step) {
        local->set_params(params);
        return loss_and_gradient(*local, pool.gather(task_block(task, step, cfg.batch_size)), cfg.reduction);
    };
    try {
        return inner_loop(start, cfg.inner_steps, cfg.inner_optimizer_config(), weight, oracle);
    } catch (const TrainingDiverged& e) {
        throw TrainingDiverged("task " + std::to_string(task.id) + ": " + e.what());
    }
}

void meta_step(std::span<double> phi, std::span<const std::vector<double>> adapted, double beta) {
    if (adapted.empty()) throw std::invalid_argument("meta_step needs at least one adapted parameter vector");
    const double scale = beta / static_cast<double>(adapted.size());
    std::vector<double> delta(phi.size(), 0.0);
    for (const auto& a : adapted) {
        if (a.size() != phi.size()) throw std::invalid_argument("meta_step: adapted parameters differ in length");
        for (std::size_t i = 0; i < phi.size(); ++i) delta[i] += a[i] - phi[i];
    }
    for (std::size_t i = 0; i < phi.size(); ++i) phi[i] += scale * delta[i];
}

std::vector<double> adapt(const Backbone& model, std::span<const double> params, std::span<const Task> tasks,
                          const SamplePool& pool, const MetaConfig& cfg) {
    std::vector<double> out(params.begin(), params.end());
    if (cfg.adapt_steps == 0) return out;
    if (tasks.empty() || pool.empty()) throw std::invalid_argument("adaptation needs sub-new training tasks");
    auto local = model.clone();
    Optimizer opt(cfg.adapt_optimizer_config());
    const std::size_t k = cfg.inner_steps;
    for (std::size_t s = 0; s < cfg.adapt_steps; ++s) {
        const Task& task = tasks[(s / k) % tasks.size()];
        local->set_params(out);
        const LossGradient lg =
            loss_and_gradient(*local, pool.gather(task_block(task, s % k, cfg.batch_size)), cfg.reduction);
        if (!std::isfinite(lg.loss)) {
            throw TrainingDiverged("non-finite loss at adaptation step " + std::to_string(s + 1));
        }
        opt.step(out, lg.grad);
    }
    return out;
}

namespace {

double per_sample(double loss, std::size_t n, Reduction reduction) {
    return reduction == Reduction::sum ? loss / static_cast<double>(n) : loss;
}

// Distinct, reproducible stream for epoch-level shuffles.
std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch, std::uint64_t salt) {
    return seed * 0x9E3779B97F4A7C15ULL + salt * 0xBF58476D1CE4E5B9ULL + epoch;
}

}  // namespace

TrainResult train_metastock(const BackboneSpec& spec, TrainingData& data, const MetaConfig& cfg) {
    cfg.validate();
    if (data.old_tasks.empty()) throw std::invalid_argument("meta-training needs at least one old-stock task");
    const auto t0 = std::chrono::steady_clock::now();

    auto model = make_backbone(spec);
    model->init_glorot(cfg.seed);
    std::vector<double> phi = model->get_params();

    std::vector<Task>& tasks = data.old_tasks;
    if (cfg.adaptive && cfg.weight_scope == WeightScope::global) {
        compute_weights(tasks);
    } else if (!cfg.adaptive) {
        for (Task& t : tasks) t.weight = 1.0;
    }

    TrainResult result;
    std::optional<double> best_mcc;
    std::vector<double> best_adapted;
    std::vector<double> best_meta;
    std::vector<std::size_t> order(tasks.size());

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(epoch_seed(cfg.seed, epoch, 1));
        rng.shuffle(order);

        double loss_sum = 0.0;
        std::size_t loss_rows = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.meta_batch) {
            const std::size_t end = std::min(order.size(), start + cfg.meta_batch);
            const std::size_t count = end - start;

            std::vector<double> weights(count, 1.0);
            if (cfg.adaptive) {
                if (cfg.weight_scope == WeightScope::global) {
                    for (std::size_t i = 0; i < count; ++i) weights[i] = tasks[order[start + i]].weight;
                } else {
                    std::vector<double> scores(count);
                    for (std::size_t i = 0; i < count; ++i) scores[i] = tasks[order[start + i]].difficulty;
                    weights = softmax_weights(scores);
                }
            }

            const std::size_t rows = std::min(cfg.batch_size, tasks[order[start]].members.size());
            if (cfg.update_mode == UpdateMode::sequential) {
                for (std::size_t i = 0; i < count; ++i) {
                    InnerResult r = inner_loop(*model, phi, tasks[order[start + i]], data.old_pool, cfg, weights[i]);
                    loss_sum += per_sample(r.first_loss, rows, cfg.reduction) * static_cast<double>(rows);
                    loss_rows += rows;
                    const std::vector<double> one[] = {std::move(r.params)};
                    meta_step(phi, one, cfg.meta_lr);
                }
                continue;
            }

            std::vector<InnerResult> results(count);
            std::exception_ptr failure;
            const auto n = static_cast<std::ptrdiff_t>(count);
            #pragma omp parallel for schedule(static, 1)
            for (std::ptrdiff_t i = 0; i < n; ++i) {
                try {
                    results[i] = inner_loop(*model, phi, tasks[order[start + i]], data.old_pool, cfg, weights[i]);
                } catch (...) {
                    #pragma omp critical
                    if (!failure) failure = std::current_exception();
                }
            }
            if (failure) std::rethrow_exception(failure);

            std::vector<std::vector<double>> adapted;
            adapted.reserve(count);
            for (auto& r : results) {
                loss_sum += per_sample(r.first_loss, rows, cfg.reduction) * static_cast<double>(rows);
                loss_rows += rows;
                adapted.push_back(std::move(r.params));
            }
            meta_step(phi, adapted, cfg.meta_lr);
        }

        EpochRecord rec;
        rec.epoch = epoch + 1;
        rec.train_loss = loss_sum / static_cast<double>(loss_rows);
        if (!std::isfinite(rec.train_loss)) {
            throw TrainingDiverged("non-finite meta-training loss in epoch " + std::to_string(epoch + 1));
        }

        std::vector<double> adapted_params =
            data.subnew_tasks.empty() ? phi : adapt(*model, phi, data.subnew_tasks, data.subnew_train, cfg);
        if (!data.subnew_val.empty()) {
            model->set_params(adapted_params);
            rec.validation = evaluate(*model, data.subnew_val.all());
        }
        const bool better = !best_mcc || (rec.validation && rec.validation->mcc > *best_mcc) ||
                            (!rec.validation);  // no validation split: keep the latest epoch
        if (better) {
            best_mcc = rec.validation ? rec.validation->mcc : 0.0;
            best_adapted = std::move(adapted_params);
            best_meta = phi;
            result.record.best_epoch = rec.epoch;
        }
        result.record.epochs.push_back(rec);
    }

    model->set_params(best_adapted);
    result.model = std::move(model);
    result.meta_params = std::move(best_meta);
    result.record.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

std::vector<EpochRecord> supervised_train(Backbone& model, const SamplePool& pool, const SupervisedOptions& options,
                                          std::size_t* best_epoch) {
    if (pool.empty()) throw std::invalid_argument("supervised training on an empty pool");
    std::vector<EpochRecord> records;
    std::vector<double> params = model.get_params();
    std::vector<double> best_params = params;
    std::optional<double> best_mcc;
    Optimizer opt(options.optimizer);
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(options.seed);

    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
            const std::size_t end = std::min(order.size(), start + options.batch_size);
            const std::span<const std::size_t> block(order.data() + start, end - start);
            model.set_params(params);
            const LossGradient lg = loss_and_gradient(model, pool.gather(block), options.reduction);
            if (!std::isfinite(lg.loss)) {
                throw TrainingDiverged("non-finite loss in supervised epoch " + std::to_string(epoch + 1));
            }
            loss_sum += per_sample(lg.loss, block.size(), options.reduction) * static_cast<double>(block.size());
            opt.step(params, lg.grad);
        }
        model.set_params(params);

        EpochRecord rec;
        rec.epoch = epoch + 1;
        rec.train_loss = loss_sum / static_cast<double>(order.size());
        if (options.validation && !options.validation->empty()) {
            rec.validation = evaluate(model, options.validation->all());
        }
        if (!best_mcc || !rec.validation || rec.validation->mcc > *best_mcc) {
            best_mcc = rec.validation ? rec.validation->mcc : 0.0;
            best_params = params;
            if (best_epoch) *best_epoch = rec.epoch;
        }
        records.push_back(rec);
    }
    model.set_params(best_params);
    return records;
}

TrainResult train_baseline(Baseline kind, const BackboneSpec& spec, TrainingData& data, const MetaConfig& cfg) {
    cfg.validate();
    if (kind == Baseline::reptile) {
        MetaConfig plain = cfg;
        plain.adaptive = false;
        return train_metastock(spec, data, plain);
    }
    if (data.subnew_train.empty()) throw std::invalid_argument("baseline needs a sub-new training split");
    if (kind == Baseline::transfer && data.old_pool.empty()) {
        throw std::invalid_argument("transfer learning needs old-stock samples");
    }
    const auto t0 = std::chrono::steady_clock::now();
    auto model = make_backbone(spec);
    model->init_glorot(cfg.seed);

    TrainResult result;
    SupervisedOptions opts;
    opts.epochs = cfg.epochs;
    opts.batch_size = cfg.batch_size;
    opts.optimizer = cfg.adapt_optimizer_config();
    opts.reduction = cfg.reduction;

    if (kind == Baseline::transfer) {
        opts.seed = epoch_seed(cfg.seed, 0, 2);
        for (const auto& rec : supervised_train(*model, data.old_pool, opts)) {
            result.record.pretrain_loss.push_back(rec.train_loss);
        }
        result.meta_params = model->get_params();
    }
    opts.seed = epoch_seed(cfg.seed, 0, 3);
    opts.validation = &data.subnew_val;
    result.record.epochs = supervised_train(*model, data.subnew_train, opts, &result.record.best_epoch);
    result.model = std::move(model);
    result.record.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

}  // namespace metastock
