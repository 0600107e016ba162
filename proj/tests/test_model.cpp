#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "metastock/model.hpp"
#include "metastock/optim.hpp"
#include "oracles.hpp"

using namespace metastock;

namespace {

Batch random_batch(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Rng rng(seed);
    Batch b;
    b.inputs = Matrix(rows, cols);
    for (auto& v : b.inputs.flat()) v = rng.normal();
    for (std::size_t i = 0; i < rows; ++i) b.labels.push_back(rng.uniform() < 0.5 ? 0.0 : 1.0);
    return b;
}

double max_rel_error(const Backbone& model, const Batch& batch, std::size_t probes, std::uint64_t seed) {
    const auto lg = loss_and_gradient_serial(model, batch);
    Rng rng(seed);
    double worst = 0.0;
    for (std::size_t p = 0; p < probes; ++p) {
        const std::size_t k = rng.below(model.param_count());
        const double fd = oracle::fd_partial(model, batch, k, 1e-5);
        const double an = lg.grad[k];
        const double err = std::abs(fd - an) / std::max(1e-8, std::abs(fd) + std::abs(an));
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("bce of a coin flip") {
    const std::vector<double> p{0.5};
    const std::vector<double> y{1.0};
    CHECK(bce_loss(p, y).loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    const std::vector<double> p2{0.5, 0.5};
    const std::vector<double> y2{1.0, 0.0};
    CHECK(bce_loss(p2, y2, Reduction::sum).loss == doctest::Approx(2 * std::log(2.0)));
    CHECK(bce_loss(p2, y2, Reduction::mean).loss == doctest::Approx(std::log(2.0)));
}

TEST_CASE("bce clamps and zeroes the clamped derivative") {
    const std::vector<double> p{0.0, 1.0, 0.3};
    const std::vector<double> y{1.0, 1.0, 1.0};
    const auto r = bce_loss(p, y);
    CHECK(std::isfinite(r.loss));
    CHECK(r.loss == doctest::Approx(-std::log(kProbabilityClamp) - std::log(1 - kProbabilityClamp) - std::log(0.3)));
    CHECK(r.dloss_dprob[0] == 0.0);
    CHECK(r.dloss_dprob[1] == 0.0);
    CHECK(r.dloss_dprob[2] == doctest::Approx(-1.0 / 0.3));
}

TEST_CASE("analytic gradients match central differences") {
    for (auto arch : {Architecture::mlp, Architecture::rescnn1d}) {
        BackboneSpec spec;
        spec.arch = arch;
        spec.width = 6;
        auto model = make_backbone(spec);
        model->init_glorot(21);
        // Move biases off zero so every parameter is exercised.
        auto p = model->get_params();
        Rng rng(2);
        for (auto& v : p) v += 0.1 * rng.normal();
        model->set_params(p);
        const auto batch = random_batch(16, model->input_size(), 8);
        CHECK(max_rel_error(*model, batch, 50, 13) < 1e-4);
    }
}

TEST_CASE("parallel kernels agree with the serial reference") {
    for (auto arch : {Architecture::mlp, Architecture::rescnn1d}) {
        BackboneSpec spec;
        spec.arch = arch;
        auto model = make_backbone(spec);
        model->init_glorot(3);
        const auto batch = random_batch(301, model->input_size(), 4);
        CHECK(forward(*model, batch) == forward_serial(*model, batch));
        const auto a = loss_and_gradient(*model, batch);
        const auto b = loss_and_gradient_serial(*model, batch);
        CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-12));
        for (std::size_t k = 0; k < a.grad.size(); ++k) CHECK(std::abs(a.grad[k] - b.grad[k]) < 1e-10);
        const auto mean = loss_and_gradient(*model, batch, Reduction::mean);
        CHECK(mean.loss == doctest::Approx(a.loss / 301.0).epsilon(1e-12));
    }
}

TEST_CASE("glorot init is seeded and bounded") {
    BackboneSpec spec;
    auto a = make_backbone(spec);
    auto b = make_backbone(spec);
    a->init_glorot(1);
    b->init_glorot(1);
    CHECK(a->get_params() == b->get_params());
    b->init_glorot(2);
    CHECK(a->get_params() != b->get_params());
    const double limit = std::sqrt(6.0 / (10.0 + 16.0));
    const auto p = a->params();
    for (std::size_t k = 0; k < 160; ++k) CHECK(std::abs(p[k]) <= limit);
}

TEST_CASE("predictions threshold at one half") {
    const std::vector<double> p{0.49, 0.5, 0.9};
    CHECK(predict_labels(p) == std::vector<int>{0, 1, 1});
}

TEST_CASE("checkpoint round trip") {
    for (auto arch : {Architecture::mlp, Architecture::rescnn1d}) {
        BackboneSpec spec;
        spec.arch = arch;
        spec.width = 5;
        auto model = make_backbone(spec);
        model->init_glorot(77);
        const auto path = std::filesystem::temp_directory_path() / "metastock_model.ckpt";
        save_checkpoint(path, *model);
        const auto back = load_checkpoint(path);
        CHECK(back->spec() == spec);
        CHECK(back->get_params() == model->get_params());
    }
    const auto bad = std::filesystem::temp_directory_path() / "metastock_bad.ckpt";
    { std::ofstream(bad) << "not a checkpoint\n"; }
    CHECK_THROWS(load_checkpoint(bad));
}

}  // TEST_SUITE

TEST_SUITE("optim") {

TEST_CASE("sgd arithmetic") {
    std::vector<double> p{1.0, -2.0};
    const std::vector<double> g{0.5, 4.0};
    sgd_step(p, g, 0.1, 2.0);
    CHECK(p[0] == doctest::Approx(0.9));
    CHECK(p[1] == doctest::Approx(-2.8));
}

TEST_CASE("adamw first step moves by about the learning rate") {
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::adamw;
    cfg.learning_rate = 0.01;
    Optimizer opt(cfg);
    std::vector<double> p{0.0, 1.0};
    const std::vector<double> g{3.0, -0.2};
    opt.step(p, g);
    CHECK(p[0] == doctest::Approx(-0.01).epsilon(1e-6));
    // Decay applies to the parameter itself, not through the moments.
    CHECK(p[1] == doctest::Approx(1.0 - 0.01 * 1e-5 + 0.01).epsilon(1e-6));
    CHECK(opt.steps() == 1);
    CHECK(opt.first_moment()[0] == doctest::Approx(0.3));
    CHECK(opt.second_moment()[0] == doctest::Approx(0.009));
    opt.reset();
    CHECK(opt.steps() == 0);
}

TEST_CASE("adamw matches a hand-rolled reference over several steps") {
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::adamw;
    cfg.learning_rate = 0.05;
    cfg.weight_decay = 0.1;
    Optimizer opt(cfg);
    std::vector<double> p{0.7};
    double q = 0.7, m = 0.0, v = 0.0;
    for (int t = 1; t <= 5; ++t) {
        const double g = 2.0 * q - 1.0;
        const std::vector<double> grad{2.0 * p[0] - 1.0};
        opt.step(p, grad, 0.5);
        const double lr = 0.05 * 0.5;
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        const double mh = m / (1 - std::pow(0.9, t));
        const double vh = v / (1 - std::pow(0.999, t));
        q -= lr * 0.1 * q;
        q -= lr * mh / (std::sqrt(vh) + 1e-8);
        CHECK(p[0] == doctest::Approx(q).epsilon(1e-13));
    }
}

}  // TEST_SUITE
