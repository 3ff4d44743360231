#include <benchmark/benchmark.h>

#include <random>

#include "windscale/edm.hpp"
#include "windscale/nn.hpp"
#include "windscale/spectral.hpp"

using namespace windscale;

namespace {

Tensor32 random_tensor(const std::vector<std::size_t>& shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> dist;
    Tensor32 t(shape);
    for (auto& v : t.data) v = dist(rng);
    return t;
}

void bm_conv2d_forward(benchmark::State& state) {
    const std::size_t hw = std::size_t(state.range(0));
    std::mt19937_64 rng(1);
    ParamStore32 ps;
    add_conv(ps, "c", 16, 16, 3, rng);
    const Tensor32 x = random_tensor({16, hw, hw}, 2);
    for (auto _ : state) {
        Tape<float> t;
        TapeBinding<float> b(t, ps);
        benchmark::DoNotOptimize(t.value(conv(t, b, "c", t.leaf(x))));
    }
    state.SetItemsProcessed(state.iterations() * int64_t(16 * 16 * 9 * hw * hw));
}

void bm_tau_block(benchmark::State& state) {
    std::mt19937_64 rng(3);
    TAUConfig cfg;
    cfg.channels = 32;
    ParamStore32 ps;
    tau_init(ps, "tau", cfg, rng);
    const Tensor32 x = random_tensor({32, 16, 16}, 4);
    for (auto _ : state) {
        Tape<float> t;
        TapeBinding<float> b(t, ps);
        benchmark::DoNotOptimize(t.value(tau_forward(t, b, "tau", cfg, t.leaf(x))));
    }
}

void bm_heun_step(benchmark::State& state) {
    // one full reverse pass with the closed-form Gaussian denoiser, so the
    // number measures sampler overhead rather than network cost
    NoiseSchedule sched;
    sched.n_steps = int(state.range(0));
    const Preconditioner prec;
    DenoiseFnT<float> D = [&](const Tensor32& x, double s) {
        Tensor32 out = x;
        const float g = float(1.0 / (1.0 + s * s));
        for (auto& v : out.data) v *= g;
        return out;
    };
    SamplerConfig cfg;
    std::uint64_t seed = 0;
    for (auto _ : state) {
        cfg.seed = seed++;
        benchmark::DoNotOptimize(heun_sample(D, {2, 64, 64}, sched, cfg));
    }
    state.SetItemsProcessed(state.iterations() * int64_t(2 * sched.n_steps - 1));
}

void bm_radial_spectrum(benchmark::State& state) {
    const std::size_t hw = std::size_t(state.range(0));
    Tensor64 f({hw, hw});
    std::mt19937_64 rng(5);
    std::normal_distribution<double> dist;
    for (auto& v : f.data) v = dist(rng);
    for (auto _ : state) benchmark::DoNotOptimize(radial_spectrum(f));
}

}  // namespace

BENCHMARK(bm_conv2d_forward)->Arg(16)->Arg(64);
BENCHMARK(bm_tau_block);
BENCHMARK(bm_heun_step)->Arg(9)->Arg(18);
BENCHMARK(bm_radial_spectrum)->Arg(64)->Arg(256);
BENCHMARK_MAIN();
