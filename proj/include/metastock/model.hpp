#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "metastock/market_data.hpp"

namespace metastock {

/// Flattened inputs (one row per sample, time-major: row = [x_t0c0, x_t0c1, x_t1c0, ...]) and 0/1 labels.
struct Batch {
    Matrix inputs;
    std::vector<double> labels;

    std::size_t size() const { return labels.size(); }
};

Batch make_batch(std::span<const Sample> samples);
Batch gather_batch(std::span<const Sample> pool, std::span<const std::size_t> indices);

enum class Architecture { mlp, rescnn1d };

Architecture parse_architecture(std::string_view name);
std::string_view architecture_name(Architecture arch);

struct BackboneSpec {
    Architecture arch = Architecture::mlp;
    std::size_t window = 5;    // U
    std::size_t channels = 2;  // d
    std::size_t width = 16;    // hidden units (mlp) or filters (rescnn1d)
    std::size_t kernel = 3;    // rescnn1d only, odd

    bool operator==(const BackboneSpec&) const = default;
};

/// Scratch buffers reused across samples by one thread.
struct Workspace {
    std::vector<double> a;
    std::vector<double> b;
    std::vector<double> c;
    std::vector<double> d;
};

/// Binary classifier over a U x d window. Parameters live in one flat vector;
/// the network maps an input row to a logit and the probability is its sigmoid.
class Backbone {
public:
    explicit Backbone(BackboneSpec spec, std::size_t param_count);
    virtual ~Backbone() = default;

    const BackboneSpec& spec() const { return spec_; }
    std::size_t input_size() const { return spec_.window * spec_.channels; }
    std::size_t param_count() const { return params_.size(); }

    std::span<const double> params() const { return params_; }
    std::vector<double> get_params() const { return params_; }
    void set_params(std::span<const double> values);

    /// Uniform(+-sqrt(6/(fan_in+fan_out))) weights, zero biases.
    virtual void init_glorot(std::uint64_t seed) = 0;

    /// Logit for one input row. `ws` keeps the activations needed by backward().
    virtual double logit(std::span<const double> x, Workspace& ws) const = 0;

    /// Adds d(loss)/d(params) to `grad` given d(loss)/d(logit); must follow logit() on the same x and ws.
    virtual void backward(std::span<const double> x, double dlogit, Workspace& ws, std::span<double> grad) const = 0;

    virtual std::unique_ptr<Backbone> clone() const = 0;

protected:
    std::vector<double> params_;

private:
    BackboneSpec spec_;
};

std::unique_ptr<Backbone> make_backbone(const BackboneSpec& spec);

class Mlp final : public Backbone {
public:
    explicit Mlp(const BackboneSpec& spec);
    void init_glorot(std::uint64_t seed) override;
    double logit(std::span<const double> x, Workspace& ws) const override;
    void backward(std::span<const double> x, double dlogit, Workspace& ws, std::span<double> grad) const override;
    std::unique_ptr<Backbone> clone() const override { return std::make_unique<Mlp>(*this); }
};

/// Two tanh convolution blocks over time; the second carries an identity skip,
/// followed by global average pooling and a linear head.
class ResCnn1d final : public Backbone {
public:
    explicit ResCnn1d(const BackboneSpec& spec);
    void init_glorot(std::uint64_t seed) override;
    double logit(std::span<const double> x, Workspace& ws) const override;
    void backward(std::span<const double> x, double dlogit, Workspace& ws, std::span<double> grad) const override;
    std::unique_ptr<Backbone> clone() const override { return std::make_unique<ResCnn1d>(*this); }
};

double sigmoid(double z);

/// Probabilities for every row, in (0,1). OpenMP-parallel over rows.
std::vector<double> forward(const Backbone& model, const Batch& batch);
std::vector<double> forward_serial(const Backbone& model, const Batch& batch);

/// Class 1 iff probability >= 0.5.
std::vector<int> predict_labels(std::span<const double> probabilities);

enum class Reduction { sum, mean };

Reduction parse_reduction(std::string_view name);
std::string_view reduction_name(Reduction r);

inline constexpr double kProbabilityClamp = 1e-7;

struct BceResult {
    double loss = 0.0;
    std::vector<double> dloss_dprob;  // zero where the clamp is active
};

/// L = -sum_i [Y_i ln y_i + (1 - Y_i) ln(1 - y_i)] with y clamped to [eps, 1 - eps];
/// Reduction::mean divides by the batch size.
BceResult bce_loss(std::span<const double> probabilities, std::span<const double> labels,
                   Reduction reduction = Reduction::sum);

struct LossGradient {
    double loss = 0.0;
    std::vector<double> grad;
};

/// BCE loss and its exact parameter gradient. Rows are processed in fixed
/// chunks whose partial sums are combined in chunk order, so the result does
/// not depend on the thread count.
LossGradient loss_and_gradient(const Backbone& model, const Batch& batch, Reduction reduction = Reduction::sum);

/// Straight sequential accumulation; reference for the chunked kernel.
LossGradient loss_and_gradient_serial(const Backbone& model, const Batch& batch,
                                      Reduction reduction = Reduction::sum);

double batch_loss(const Backbone& model, const Batch& batch, Reduction reduction = Reduction::sum);

/// Binary checkpoint: the line "METASTOCK-CKPT 1", one JSON header line
/// {"arch","window","channels","width","kernel","params"}, then the parameters
/// as little-endian IEEE-754 doubles.
void save_checkpoint(const std::filesystem::path& path, const Backbone& model);
std::unique_ptr<Backbone> load_checkpoint(const std::filesystem::path& path);

}  // namespace metastock
