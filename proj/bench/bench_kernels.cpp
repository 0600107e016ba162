// Serial reference vs OpenMP kernels: forward pass, loss gradient, wavelet scoring.
//
//   metastock_bench [rows] [repeats]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>

#include <omp.h>

#include "metastock/market_data.hpp"
#include "metastock/model.hpp"
#include "metastock/wavelet.hpp"

using namespace metastock;

namespace {

double time_ms(const std::function<void()>& fn, int repeats) {
    fn();  // warm-up
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < repeats; ++i) fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / repeats;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

void report(const char* name, double serial, double parallel, double diff) {
    std::printf("%-28s serial %9.3f ms   omp %9.3f ms   speedup %5.2fx   max|diff| %.3g\n", name, serial, parallel,
                serial / parallel, diff);
}

}  // namespace

int main(int argc, char** argv) {
    const std::size_t rows = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 4096;
    const int repeats = argc > 2 ? std::atoi(argv[2]) : 5;
    std::printf("rows=%zu repeats=%d threads=%d\n", rows, repeats, omp_get_max_threads());

    SynthOptions synth;
    synth.n_series = 8;
    synth.n_days = rows / 8 + 20;
    synth.regime = Regime::planted;
    std::vector<Sample> samples;
    for (const auto& s : synthesize(synth)) {
        auto more = make_samples(s, SampleOptions{});
        samples.insert(samples.end(), more.begin(), more.end());
    }
    samples.resize(std::min(samples.size(), rows));
    const Batch batch = make_batch(samples);

    for (Architecture arch : {Architecture::mlp, Architecture::rescnn1d}) {
        BackboneSpec spec;
        spec.arch = arch;
        spec.width = 32;
        auto model = make_backbone(spec);
        model->init_glorot(1);
        const std::string tag(architecture_name(arch));

        std::vector<double> ps, pp;
        const double fs = time_ms([&] { ps = forward_serial(*model, batch); }, repeats);
        const double fp = time_ms([&] { pp = forward(*model, batch); }, repeats);
        report((tag + " forward").c_str(), fs, fp, max_abs_diff(ps, pp));

        LossGradient gs, gp;
        const double gsm = time_ms([&] { gs = loss_and_gradient_serial(*model, batch); }, repeats);
        const double gpm = time_ms([&] { gp = loss_and_gradient(*model, batch); }, repeats);
        report((tag + " loss+gradient").c_str(), gsm, gpm, max_abs_diff(gs.grad, gp.grad));
    }

    std::vector<Sample> a = samples;
    std::vector<Sample> b = samples;
    const double ws = time_ms([&] { wavelet::assign_difficulties_serial(a); }, repeats);
    const double wp = time_ms([&] { wavelet::assign_difficulties(b); }, repeats);
    double diff = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(a[i].difficulty - b[i].difficulty));
    report("wavelet difficulty", ws, wp, diff);
    return 0;
}
