#include "metastock/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace metastock {

Batch make_batch(std::span<const Sample> samples) {
    Batch batch;
    if (samples.empty()) return batch;
    const std::size_t width = samples.front().features.rows() * samples.front().features.cols();
    batch.inputs = Matrix(samples.size(), width);
    batch.labels.resize(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto src = samples[i].features.flat();
        if (src.size() != width) throw std::invalid_argument("samples in a batch must share one shape");
        std::copy(src.begin(), src.end(), batch.inputs.row(i).begin());
        batch.labels[i] = samples[i].label;
    }
    return batch;
}

Batch gather_batch(std::span<const Sample> pool, std::span<const std::size_t> indices) {
    Batch batch;
    if (indices.empty()) return batch;
    const std::size_t width = pool[indices.front()].features.flat().size();
    batch.inputs = Matrix(indices.size(), width);
    batch.labels.resize(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const Sample& s = pool[indices[i]];
        const auto src = s.features.flat();
        if (src.size() != width) throw std::invalid_argument("samples in a batch must share one shape");
        std::copy(src.begin(), src.end(), batch.inputs.row(i).begin());
        batch.labels[i] = s.label;
    }
    return batch;
}

Architecture parse_architecture(std::string_view name) {
    if (name == "mlp") return Architecture::mlp;
    if (name == "rescnn1d") return Architecture::rescnn1d;
    throw std::invalid_argument("unknown architecture '" + std::string(name) + "'");
}

std::string_view architecture_name(Architecture arch) {
    return arch == Architecture::mlp ? "mlp" : "rescnn1d";
}

Reduction parse_reduction(std::string_view name) {
    if (name == "sum") return Reduction::sum;
    if (name == "mean") return Reduction::mean;
    throw std::invalid_argument("unknown loss reduction '" + std::string(name) + "'");
}

std::string_view reduction_name(Reduction r) { return r == Reduction::sum ? "sum" : "mean"; }

Backbone::Backbone(BackboneSpec spec, std::size_t param_count) : params_(param_count, 0.0), spec_(spec) {
    if (spec.window == 0 || spec.channels == 0 || spec.width == 0) {
        throw std::invalid_argument("backbone dimensions must be positive");
    }
}

void Backbone::set_params(std::span<const double> values) {
    if (values.size() != params_.size()) {
        throw std::invalid_argument("parameter vector has length " + std::to_string(values.size()) + ", expected " +
                                    std::to_string(params_.size()));
    }
    std::copy(values.begin(), values.end(), params_.begin());
}

namespace {

void glorot_fill(std::span<double> w, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& x : w) x = rng.uniform(-limit, limit);
}

void check_input(const Backbone& m, std::span<const double> x) {
    if (x.size() != m.input_size()) {
        throw std::invalid_argument("input of size " + std::to_string(x.size()) + " does not match backbone input " +
                                    std::to_string(m.spec().window) + "x" + std::to_string(m.spec().channels));
    }
}

}  // namespace

// ---- MLP: W1 [H x D], b1 [H], w2 [H], b2 ----

Mlp::Mlp(const BackboneSpec& spec)
    : Backbone(spec, spec.width * spec.window * spec.channels + 2 * spec.width + 1) {}

void Mlp::init_glorot(std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t h = spec().width;
    const std::size_t d = input_size();
    std::fill(params_.begin(), params_.end(), 0.0);
    glorot_fill(std::span(params_).subspan(0, h * d), d, h, rng);
    glorot_fill(std::span(params_).subspan(h * d + h, h), h, 1, rng);
}

double Mlp::logit(std::span<const double> x, Workspace& ws) const {
    const std::size_t h_units = spec().width;
    const std::size_t d = input_size();
    const double* w1 = params_.data();
    const double* b1 = w1 + h_units * d;
    const double* w2 = b1 + h_units;
    const double b2 = w2[h_units];
    ws.a.resize(h_units);
    double z = b2;
    for (std::size_t h = 0; h < h_units; ++h) {
        double a = b1[h];
        const double* row = w1 + h * d;
        for (std::size_t i = 0; i < d; ++i) a += row[i] * x[i];
        ws.a[h] = std::tanh(a);
        z += w2[h] * ws.a[h];
    }
    return z;
}

void Mlp::backward(std::span<const double> x, double dlogit, Workspace& ws, std::span<double> grad) const {
    const std::size_t h_units = spec().width;
    const std::size_t d = input_size();
    const double* w2 = params_.data() + h_units * d + h_units;
    double* g_w1 = grad.data();
    double* g_b1 = g_w1 + h_units * d;
    double* g_w2 = g_b1 + h_units;
    g_w2[h_units] += dlogit;
    for (std::size_t h = 0; h < h_units; ++h) {
        const double act = ws.a[h];
        g_w2[h] += dlogit * act;
        const double dpre = dlogit * w2[h] * (1.0 - act * act);
        g_b1[h] += dpre;
        double* row = g_w1 + h * d;
        for (std::size_t i = 0; i < d; ++i) row[i] += dpre * x[i];
    }
}

// ---- ResCnn1d: A [F x C x K], a_bias [F], B [F x F x K], b_bias [F], v [F], c ----

namespace {

struct CnnLayout {
    std::size_t t, c, f, k, pad;
    std::size_t a, a_bias, b, b_bias, v, head_bias, total;

    explicit CnnLayout(const BackboneSpec& s)
        : t(s.window), c(s.channels), f(s.width), k(s.kernel), pad(s.kernel / 2) {
        a = 0;
        a_bias = a + f * c * k;
        b = a_bias + f;
        b_bias = b + f * f * k;
        v = b_bias + f;
        head_bias = v + f;
        total = head_bias + 1;
    }
};

std::size_t cnn_param_count(const BackboneSpec& spec) {
    if (spec.kernel == 0 || spec.kernel % 2 == 0) throw std::invalid_argument("rescnn1d kernel must be odd");
    return CnnLayout(spec).total;
}

}  // namespace

ResCnn1d::ResCnn1d(const BackboneSpec& spec) : Backbone(spec, cnn_param_count(spec)) {}

void ResCnn1d::init_glorot(std::uint64_t seed) {
    Rng rng(seed);
    const CnnLayout L(spec());
    std::fill(params_.begin(), params_.end(), 0.0);
    glorot_fill(std::span(params_).subspan(L.a, L.f * L.c * L.k), L.c * L.k, L.f * L.k, rng);
    glorot_fill(std::span(params_).subspan(L.b, L.f * L.f * L.k), L.f * L.k, L.f * L.k, rng);
    glorot_fill(std::span(params_).subspan(L.v, L.f), L.f, 1, rng);
}

double ResCnn1d::logit(std::span<const double> x, Workspace& ws) const {
    const CnnLayout L(spec());
    const double* p = params_.data();
    // ws.a = h1 [T x F], ws.b = tanh(u2) [T x F]
    ws.a.assign(L.t * L.f, 0.0);
    ws.b.assign(L.t * L.f, 0.0);
    for (std::size_t t = 0; t < L.t; ++t) {
        for (std::size_t f = 0; f < L.f; ++f) {
            double u = p[L.a_bias + f];
            for (std::size_t j = 0; j < L.k; ++j) {
                const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(L.pad);
                if (src < 0 || src >= static_cast<std::ptrdiff_t>(L.t)) continue;
                for (std::size_t c = 0; c < L.c; ++c) {
                    u += p[L.a + (f * L.c + c) * L.k + j] * x[static_cast<std::size_t>(src) * L.c + c];
                }
            }
            ws.a[t * L.f + f] = std::tanh(u);
        }
    }
    double z = p[L.head_bias];
    const double inv_t = 1.0 / static_cast<double>(L.t);
    std::vector<double>& pooled = ws.c;
    pooled.assign(L.f, 0.0);
    for (std::size_t t = 0; t < L.t; ++t) {
        for (std::size_t f = 0; f < L.f; ++f) {
            double u = p[L.b_bias + f];
            for (std::size_t j = 0; j < L.k; ++j) {
                const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(L.pad);
                if (src < 0 || src >= static_cast<std::ptrdiff_t>(L.t)) continue;
                const double* h1 = ws.a.data() + static_cast<std::size_t>(src) * L.f;
                for (std::size_t g = 0; g < L.f; ++g) u += p[L.b + (f * L.f + g) * L.k + j] * h1[g];
            }
            const double s = std::tanh(u);
            ws.b[t * L.f + f] = s;
            pooled[f] += (ws.a[t * L.f + f] + s) * inv_t;
        }
    }
    for (std::size_t f = 0; f < L.f; ++f) z += p[L.v + f] * pooled[f];
    return z;
}

void ResCnn1d::backward(std::span<const double> x, double dlogit, Workspace& ws, std::span<double> grad) const {
    const CnnLayout L(spec());
    const double* p = params_.data();
    double* g = grad.data();
    const double inv_t = 1.0 / static_cast<double>(L.t);

    g[L.head_bias] += dlogit;
    for (std::size_t f = 0; f < L.f; ++f) g[L.v + f] += dlogit * ws.c[f];

    // dh2[t][f] is the same for every t: dlogit * v[f] / T.
    std::vector<double>& dh1 = ws.d;
    dh1.assign(L.t * L.f, 0.0);
    for (std::size_t t = 0; t < L.t; ++t) {
        for (std::size_t f = 0; f < L.f; ++f) {
            const double dh2 = dlogit * p[L.v + f] * inv_t;
            dh1[t * L.f + f] += dh2;
            const double s = ws.b[t * L.f + f];
            const double du2 = dh2 * (1.0 - s * s);
            g[L.b_bias + f] += du2;
            for (std::size_t j = 0; j < L.k; ++j) {
                const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(L.pad);
                if (src < 0 || src >= static_cast<std::ptrdiff_t>(L.t)) continue;
                const std::size_t row = static_cast<std::size_t>(src) * L.f;
                for (std::size_t gi = 0; gi < L.f; ++gi) {
                    const std::size_t w = L.b + (f * L.f + gi) * L.k + j;
                    g[w] += du2 * ws.a[row + gi];
                    dh1[row + gi] += du2 * p[w];
                }
            }
        }
    }
    for (std::size_t t = 0; t < L.t; ++t) {
        for (std::size_t f = 0; f < L.f; ++f) {
            const double h = ws.a[t * L.f + f];
            const double du1 = dh1[t * L.f + f] * (1.0 - h * h);
            g[L.a_bias + f] += du1;
            for (std::size_t j = 0; j < L.k; ++j) {
                const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(L.pad);
                if (src < 0 || src >= static_cast<std::ptrdiff_t>(L.t)) continue;
                for (std::size_t c = 0; c < L.c; ++c) {
                    g[L.a + (f * L.c + c) * L.k + j] += du1 * x[static_cast<std::size_t>(src) * L.c + c];
                }
            }
        }
    }
}

std::unique_ptr<Backbone> make_backbone(const BackboneSpec& spec) {
    switch (spec.arch) {
        case Architecture::mlp: return std::make_unique<Mlp>(spec);
        case Architecture::rescnn1d: return std::make_unique<ResCnn1d>(spec);
    }
    throw std::invalid_argument("unknown architecture");
}

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

std::vector<double> forward(const Backbone& model, const Batch& batch) {
    if (batch.size() > 0) check_input(model, batch.inputs.row(0));
    std::vector<double> out(batch.size());
    const auto n = static_cast<std::ptrdiff_t>(batch.size());
    #pragma omp parallel
    {
        Workspace ws;
        #pragma omp for schedule(static)
        for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = sigmoid(model.logit(batch.inputs.row(i), ws));
    }
    return out;
}

std::vector<double> forward_serial(const Backbone& model, const Batch& batch) {
    if (batch.size() > 0) check_input(model, batch.inputs.row(0));
    std::vector<double> out(batch.size());
    Workspace ws;
    for (std::size_t i = 0; i < batch.size(); ++i) out[i] = sigmoid(model.logit(batch.inputs.row(i), ws));
    return out;
}

std::vector<int> predict_labels(std::span<const double> probabilities) {
    std::vector<int> out(probabilities.size());
    for (std::size_t i = 0; i < probabilities.size(); ++i) out[i] = probabilities[i] >= 0.5 ? 1 : 0;
    return out;
}

BceResult bce_loss(std::span<const double> probabilities, std::span<const double> labels, Reduction reduction) {
    if (probabilities.size() != labels.size()) {
        throw std::invalid_argument("bce_loss: " + std::to_string(probabilities.size()) + " predictions vs " +
                                    std::to_string(labels.size()) + " labels");
    }
    BceResult out;
    out.dloss_dprob.resize(probabilities.size());
    const double scale = reduction == Reduction::mean && !labels.empty() ? 1.0 / static_cast<double>(labels.size()) : 1.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double raw = probabilities[i];
        const double y = std::clamp(raw, kProbabilityClamp, 1.0 - kProbabilityClamp);
        const double t = labels[i];
        out.loss -= t * std::log(y) + (1.0 - t) * std::log(1.0 - y);
        const bool clamped = raw < kProbabilityClamp || raw > 1.0 - kProbabilityClamp;
        out.dloss_dprob[i] = clamped ? 0.0 : scale * (-t / y + (1.0 - t) / (1.0 - y));
    }
    out.loss *= scale;
    return out;
}

namespace {

constexpr std::size_t kChunkRows = 32;

// Loss contribution of one row and d(loss)/d(logit), consistent with bce_loss.
struct RowLoss {
    double loss;
    double dlogit;
};

RowLoss row_loss(double z, double label) {
    const double raw = sigmoid(z);
    const double y = std::clamp(raw, kProbabilityClamp, 1.0 - kProbabilityClamp);
    const double loss = -(label * std::log(y) + (1.0 - label) * std::log(1.0 - y));
    const bool clamped = raw < kProbabilityClamp || raw > 1.0 - kProbabilityClamp;
    return {loss, clamped ? 0.0 : raw - label};
}

void finish(LossGradient& out, std::size_t n, Reduction reduction) {
    if (reduction == Reduction::mean && n > 0) {
        const double s = 1.0 / static_cast<double>(n);
        out.loss *= s;
        for (double& g : out.grad) g *= s;
    }
}

}  // namespace

LossGradient loss_and_gradient(const Backbone& model, const Batch& batch, Reduction reduction) {
    const std::size_t n = batch.size();
    const std::size_t p = model.param_count();
    LossGradient out{0.0, std::vector<double>(p, 0.0)};
    if (n == 0) return out;
    check_input(model, batch.inputs.row(0));

    const std::size_t n_chunks = (n + kChunkRows - 1) / kChunkRows;
    std::vector<double> chunk_grad(n_chunks * p, 0.0);
    std::vector<double> chunk_loss(n_chunks, 0.0);
    const auto chunks = static_cast<std::ptrdiff_t>(n_chunks);
    #pragma omp parallel
    {
        Workspace ws;
        #pragma omp for schedule(static)
        for (std::ptrdiff_t ci = 0; ci < chunks; ++ci) {
            const std::size_t c = static_cast<std::size_t>(ci);
            std::span<double> grad(chunk_grad.data() + c * p, p);
            const std::size_t end = std::min(n, (c + 1) * kChunkRows);
            double loss = 0.0;
            for (std::size_t i = c * kChunkRows; i < end; ++i) {
                const auto x = batch.inputs.row(i);
                const RowLoss r = row_loss(model.logit(x, ws), batch.labels[i]);
                loss += r.loss;
                if (r.dlogit != 0.0) model.backward(x, r.dlogit, ws, grad);
            }
            chunk_loss[c] = loss;
        }
    }
    for (std::size_t c = 0; c < n_chunks; ++c) {
        out.loss += chunk_loss[c];
        const double* src = chunk_grad.data() + c * p;
        for (std::size_t k = 0; k < p; ++k) out.grad[k] += src[k];
    }
    finish(out, n, reduction);
    return out;
}

LossGradient loss_and_gradient_serial(const Backbone& model, const Batch& batch, Reduction reduction) {
    const std::size_t n = batch.size();
    LossGradient out{0.0, std::vector<double>(model.param_count(), 0.0)};
    if (n == 0) return out;
    check_input(model, batch.inputs.row(0));
    Workspace ws;
    for (std::size_t i = 0; i < n; ++i) {
        const auto x = batch.inputs.row(i);
        const RowLoss r = row_loss(model.logit(x, ws), batch.labels[i]);
        out.loss += r.loss;
        if (r.dlogit != 0.0) model.backward(x, r.dlogit, ws, out.grad);
    }
    finish(out, n, reduction);
    return out;
}

double batch_loss(const Backbone& model, const Batch& batch, Reduction reduction) {
    const std::vector<double> probs = forward(model, batch);
    return bce_loss(probs, batch.labels, reduction).loss;
}

namespace {

constexpr std::string_view kCheckpointMagic = "METASTOCK-CKPT 1";

void write_le(std::ostream& out, double v) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) {
        bytes[i] = static_cast<unsigned char>(bits & 0xFF);
        bits >>= 8;
    }
    out.write(reinterpret_cast<const char*>(bytes), 8);
}

double read_le(std::istream& in) {
    unsigned char bytes[8];
    in.read(reinterpret_cast<char*>(bytes), 8);
    if (!in) throw DataError("checkpoint truncated");
    std::uint64_t bits = 0;
    for (int i = 7; i >= 0; --i) bits = (bits << 8) | bytes[i];
    return std::bit_cast<double>(bits);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Backbone& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    const BackboneSpec& s = model.spec();
    nlohmann::ordered_json header;
    header["arch"] = architecture_name(s.arch);
    header["window"] = s.window;
    header["channels"] = s.channels;
    header["width"] = s.width;
    header["kernel"] = s.kernel;
    header["params"] = model.param_count();
    out << kCheckpointMagic << '\n' << header.dump() << '\n';
    for (double v : model.params()) write_le(out, v);
    if (!out) throw DataError("failed writing checkpoint " + path.string());
}

std::unique_ptr<Backbone> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("missing checkpoint " + path.string());
    std::string magic;
    std::string header_line;
    if (!std::getline(in, magic) || magic != kCheckpointMagic || !std::getline(in, header_line)) {
        throw DataError(path.string() + " is not a checkpoint");
    }
    const auto header = nlohmann::json::parse(header_line);
    BackboneSpec spec;
    spec.arch = parse_architecture(header.at("arch").get<std::string>());
    spec.window = header.at("window").get<std::size_t>();
    spec.channels = header.at("channels").get<std::size_t>();
    spec.width = header.at("width").get<std::size_t>();
    spec.kernel = header.at("kernel").get<std::size_t>();
    auto model = make_backbone(spec);
    const auto count = header.at("params").get<std::size_t>();
    if (count != model->param_count()) {
        throw DataError(path.string() + ": header declares " + std::to_string(count) + " parameters, architecture has " +
                        std::to_string(model->param_count()));
    }
    std::vector<double> params(count);
    for (double& v : params) v = read_le(in);
    model->set_params(params);
    return model;
}

}  // namespace metastock
