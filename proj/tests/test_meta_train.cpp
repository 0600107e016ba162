#include <doctest.h>

#include <cmath>

#include "metastock/meta_train.hpp"
#include "metastock/runner.hpp"

using namespace metastock;

namespace {

ExperimentConfig small_config() {
    ExperimentConfig cfg;
    cfg.data.synth.old_series = 3;
    cfg.data.synth.old_days = 150;
    cfg.data.synth.subnew_series = 2;
    cfg.data.max_subnew_train = 60;
    cfg.backbone.width = 4;
    cfg.meta.inner_steps = 3;
    cfg.meta.meta_batch = 3;
    cfg.meta.batch_size = 8;
    cfg.meta.task_size = 24;
    cfg.meta.epochs = 3;
    cfg.meta.adapt_steps = 3;
    cfg.meta.seed = 5;
    return cfg;
}

const Dataset& small_dataset() {
    static const Dataset data = load_dataset(small_config());
    return data;
}

// Toy quadratic 0.5 * sum (c_i p_i^2) - sum p_i, gradient c_i p_i - 1.
LossGradient quadratic(std::span<const double> p) {
    LossGradient lg;
    lg.grad.resize(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double c = 1.0 + static_cast<double>(i);
        lg.loss += 0.5 * c * p[i] * p[i] - p[i];
        lg.grad[i] = c * p[i] - 1.0;
    }
    return lg;
}

}  // namespace

TEST_SUITE("meta_train") {

TEST_CASE("single task, single step reduces to sgd at alpha * beta") {
    const std::vector<double> phi0{0.3, -1.2, 2.5};
    OptimizerConfig sgd;
    sgd.learning_rate = 0.07;
    const double beta = 0.4;
    std::vector<double> phi = phi0;
    const auto inner = inner_loop(phi, 1, sgd, 1.0, [](std::span<const double> p, std::size_t) { return quadratic(p); });
    const std::vector<double> adapted[] = {inner.params};
    meta_step(phi, adapted, beta);
    const auto g = quadratic(phi0).grad;
    for (std::size_t i = 0; i < phi.size(); ++i) {
        CHECK(std::abs(phi[i] - (phi0[i] - 0.07 * beta * g[i])) <= 1e-12);
    }
}

TEST_CASE("inner loop scales the step by the task weight and leaves the start alone") {
    const std::vector<double> start{1.0, 1.0};
    OptimizerConfig sgd;
    sgd.learning_rate = 0.1;
    const auto oracle = [](std::span<const double> p, std::size_t) { return quadratic(p); };
    const auto a = inner_loop(start, 2, sgd, 2.0, oracle);
    CHECK(start == std::vector<double>{1.0, 1.0});
    CHECK(a.first_loss == doctest::Approx(quadratic(start).loss));
    // Two steps at rate 0.2 by hand.
    std::vector<double> p = start;
    for (int s = 0; s < 2; ++s) {
        const auto g = quadratic(p).grad;
        for (std::size_t i = 0; i < 2; ++i) p[i] -= 0.2 * g[i];
    }
    CHECK(a.params[0] == doctest::Approx(p[0]).epsilon(1e-15));
    CHECK(a.params[1] == doctest::Approx(p[1]).epsilon(1e-15));

    const auto nan_oracle = [](std::span<const double> q, std::size_t) {
        auto lg = quadratic(q);
        lg.loss = std::nan("");
        return lg;
    };
    CHECK_THROWS_AS(inner_loop(start, 1, sgd, 1.0, nan_oracle), TrainingDiverged);
}

TEST_CASE("meta step moves toward the mean of adapted parameters") {
    std::vector<double> phi{0.0, 0.0};
    const std::vector<std::vector<double>> adapted{{1.0, 2.0}, {3.0, -2.0}};
    meta_step(phi, adapted, 0.5);
    CHECK(phi[0] == 1.0);
    CHECK(phi[1] == 0.0);
}

TEST_CASE("task blocks cycle through the members") {
    Task t;
    t.members = {0, 1, 2, 3, 4};
    CHECK(task_block(t, 0, 2) == std::vector<std::size_t>{0, 1});
    CHECK(task_block(t, 2, 2) == std::vector<std::size_t>{4, 0});
    CHECK(task_block(t, 1, 10).size() == 5);
}

TEST_CASE("non-adaptive training equals reptile bit for bit") {
    const auto cfg = small_config();
    auto td1 = prepare_training_data(small_dataset().population, cfg, 1);
    auto td2 = prepare_training_data(small_dataset().population, cfg, 1);
    MetaConfig plain = cfg.meta;
    plain.adaptive = false;
    const auto a = train_metastock(cfg.backbone, td1, plain);
    const auto b = train_baseline(Baseline::reptile, cfg.backbone, td2, cfg.meta);
    CHECK(a.meta_params == b.meta_params);
    CHECK(a.model->get_params() == b.model->get_params());
    CHECK(a.record.best_epoch == b.record.best_epoch);
}

TEST_CASE("equal difficulties make the weighting a no-op") {
    const auto cfg = small_config();
    auto td1 = prepare_training_data(small_dataset().population, cfg, 2);
    auto td2 = prepare_training_data(small_dataset().population, cfg, 2);
    for (auto* td : {&td1, &td2}) {
        for (auto& t : td->old_tasks) t.difficulty = 3.0;
    }
    MetaConfig plain = cfg.meta;
    plain.adaptive = false;
    const auto a = train_metastock(cfg.backbone, td1, cfg.meta);
    const auto b = train_metastock(cfg.backbone, td2, plain);
    CHECK(a.meta_params == b.meta_params);
}

TEST_CASE("weights change the outcome when difficulties differ") {
    const auto cfg = small_config();
    auto td1 = prepare_training_data(small_dataset().population, cfg, 3);
    auto td2 = prepare_training_data(small_dataset().population, cfg, 3);
    MetaConfig plain = cfg.meta;
    plain.adaptive = false;
    const auto a = train_metastock(cfg.backbone, td1, cfg.meta);
    const auto b = train_metastock(cfg.backbone, td2, plain);
    CHECK(a.meta_params != b.meta_params);
    double mean = 0.0;
    for (const auto& t : td1.old_tasks) mean += t.weight;
    CHECK(mean / static_cast<double>(td1.old_tasks.size()) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("sequential and batched updates agree when B is 1") {
    auto cfg = small_config();
    cfg.meta.meta_batch = 1;
    auto td1 = prepare_training_data(small_dataset().population, cfg, 4);
    auto td2 = prepare_training_data(small_dataset().population, cfg, 4);
    MetaConfig seq = cfg.meta;
    seq.update_mode = UpdateMode::sequential;
    const auto a = train_metastock(cfg.backbone, td1, cfg.meta);
    const auto b = train_metastock(cfg.backbone, td2, seq);
    CHECK(a.meta_params == b.meta_params);
}

TEST_CASE("scratch never reads old-stock data") {
    const auto cfg = small_config();
    auto td = prepare_training_data(small_dataset().population, cfg, 1);
    const auto r = train_baseline(Baseline::scratch, cfg.backbone, td, cfg.meta);
    CHECK(td.old_pool.accesses() == 0);
    CHECK(td.subnew_train.accesses() > 0);
    CHECK(r.record.epochs.size() == cfg.meta.epochs);

    auto td2 = prepare_training_data(small_dataset().population, cfg, 1);
    train_baseline(Baseline::transfer, cfg.backbone, td2, cfg.meta);
    CHECK(td2.old_pool.accesses() > 0);
}

TEST_CASE("adaptation lowers the sub-new loss step by step") {
    auto cfg = small_config();
    cfg.meta.task_size = 100;  // larger than the sub-new pool: one task
    auto td = prepare_training_data(small_dataset().population, cfg, 1);
    REQUIRE(td.subnew_tasks.size() == 1);
    cfg.meta.batch_size = td.subnew_tasks[0].members.size();
    cfg.meta.adapt_lr = 1e-3;
    auto model = make_backbone(cfg.backbone);
    model->init_glorot(4);
    const auto start = model->get_params();
    const Batch all = td.subnew_train.gather(td.subnew_tasks[0].members);
    double prev = batch_loss(*model, all);
    for (std::size_t steps = 1; steps <= 5; ++steps) {
        MetaConfig m = cfg.meta;
        m.adapt_steps = steps;
        const auto p = adapt(*model, start, td.subnew_tasks, td.subnew_train, m);
        auto probe = model->clone();
        probe->set_params(p);
        const double loss = batch_loss(*probe, all);
        CHECK(loss <= prev);
        prev = loss;
    }
}

TEST_CASE("transfer pretraining loss goes down") {
    auto cfg = small_config();
    cfg.meta.epochs = 8;
    auto td = prepare_training_data(small_dataset().population, cfg, 1);
    const auto r = train_baseline(Baseline::transfer, cfg.backbone, td, cfg.meta);
    REQUIRE(r.record.pretrain_loss.size() == 8);
    CHECK(r.record.pretrain_loss.back() < r.record.pretrain_loss.front());
}

TEST_CASE("training is reproducible and independent of the thread count") {
    const auto cfg = small_config();
    auto td1 = prepare_training_data(small_dataset().population, cfg, 6);
    auto td2 = prepare_training_data(small_dataset().population, cfg, 6);
    const auto a = train_metastock(cfg.backbone, td1, cfg.meta);
    const auto b = train_metastock(cfg.backbone, td2, cfg.meta);
    CHECK(a.model->get_params() == b.model->get_params());
    REQUIRE(a.record.epochs.size() == 3);
    for (const auto& e : a.record.epochs) {
        CHECK(std::isfinite(e.train_loss));
        CHECK(e.validation.has_value());
    }
}

TEST_CASE("config validation") {
    MetaConfig m;
    m.inner_steps = 0;
    CHECK_THROWS(m.validate());
    m = MetaConfig{};
    m.meta_lr = -1.0;
    CHECK_THROWS(m.validate());
}

}  // TEST_SUITE
