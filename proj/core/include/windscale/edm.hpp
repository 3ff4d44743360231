#ifndef WINDSCALE_EDM_HPP
#define WINDSCALE_EDM_HPP

#include <cmath>
#include <functional>
#include <mutex>
#include <random>
#include <thread>
#include <vector>

#include "windscale/nn.hpp"
#include "windscale/tensor.hpp"

namespace windscale {

// ---------------------------------------------------------------------------
// Noise schedule, preconditioning, score loss and the Heun reverse sampler
// for the residual correction model.
// ---------------------------------------------------------------------------

struct NoiseSchedule {
    double sigma_min = 0.002;
    double sigma_max = 80.0;
    double rho = 7.0;
    int n_steps = 18;

    void validate() const {
        if (!(sigma_min > 0.0 && sigma_min < sigma_max))
            throw ArgError("NoiseSchedule: need 0 < sigma_min < sigma_max");
        if (rho < 1.0) throw ArgError("NoiseSchedule: rho must be >= 1");
        if (n_steps < 1) throw ArgError("NoiseSchedule: n_steps must be >= 1");
    }
};

/// Strictly decreasing sigma ladder with exact endpoints, plus a terminal 0.
std::vector<double> karras_sigmas(const NoiseSchedule& s);

struct Preconditioner {
    double sigma_data = 1.0;

    double c_skip(double s) const { return sigma_data * sigma_data / (s * s + sigma_data * sigma_data); }
    double c_out(double s) const { return s * sigma_data / std::sqrt(s * s + sigma_data * sigma_data); }
    double c_in(double s) const { return 1.0 / std::sqrt(s * s + sigma_data * sigma_data); }
    double c_noise(double s) const {
        if (s <= 0.0) throw ArgError("Preconditioner: sigma must be > 0");
        return 0.25 * std::log(s);
    }
    /// Score-matching weight; equals 1 / c_out(s)^2.
    double loss_weight(double s) const {
        const double sd = sigma_data;
        return (s * s + sd * sd) / (s * sd * s * sd);
    }

    void validate() const {
        if (!(sigma_data > 0.0)) throw ArgError("Preconditioner: sigma_data must be > 0");
    }
};

struct SamplerConfig {
    bool stochastic = false;
    double churn = 0.0;            // per-step sigma inflation budget, split over steps
    double noise_inflation = 1.0;  // scales the replenished noise in stochastic mode
    std::uint64_t seed = 0;
};

/// ln(sigma) ~ N(mean, std^2); EDM training noise-level distribution.
inline double sample_sigma(std::mt19937_64& rng, double mean = -1.2, double stddev = 1.2) {
    std::normal_distribution<double> dist(mean, stddev);
    return std::exp(dist(rng));
}

template <typename T>
using DenoiseFnT = std::function<TensorT<T>(const TensorT<T>&, double)>;

/// No-grad wrapper: D(x;sigma) = c_skip x + c_out F(c_in x, cond, c_noise).
template <typename T>
TensorT<T> denoise_net(ParamStoreT<T>& ps, const DenoiserConfig& cfg, const Preconditioner& p,
                       const TensorT<T>& x, const TensorT<T>& cond, double sigma) {
    if (sigma <= 0.0) throw ArgError("denoise_net: sigma must be > 0");
    Tape<T> t;
    TapeBinding<T> b(t, ps);
    TensorT<T> xin = x;
    const T ci = T(p.c_in(sigma));
    for (auto& v : xin.data) v *= ci;
    const int F = denoiser_forward(t, b, cfg, t.leaf(xin), t.leaf(cond), p.c_noise(sigma));
    TensorT<T> out = t.value(F);
    const T cs = T(p.c_skip(sigma)), co = T(p.c_out(sigma));
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = cs * x.data[i] + co * out.data[i];
    return out;
}

/// Differentiable per-sample score-matching loss node for one (r_clean, cond)
/// pair at a given sigma; noise is drawn from rng.
template <typename T>
int score_loss_node(Tape<T>& t, TapeBinding<T>& b, const DenoiserConfig& cfg,
                    const Preconditioner& p, const TensorT<T>& r_clean, const TensorT<T>& cond,
                    double sigma, std::mt19937_64& rng) {
    if (sigma <= 0.0) throw ArgError("score_loss_node: sigma must be > 0");
    std::normal_distribution<double> dist(0.0, sigma);
    TensorT<T> noisy = r_clean;
    for (auto& v : noisy.data) v += T(dist(rng));
    TensorT<T> xin = noisy;
    const T ci = T(p.c_in(sigma));
    for (auto& v : xin.data) v *= ci;
    const int F = denoiser_forward(t, b, cfg, t.leaf(xin), t.leaf(cond), p.c_noise(sigma));
    // D - r = c_skip noisy + c_out F - r, with the affine part folded into one leaf
    TensorT<T> base = noisy;
    const T cs = T(p.c_skip(sigma));
    for (std::size_t i = 0; i < base.data.size(); ++i)
        base.data[i] = cs * base.data[i] - r_clean.data[i];
    const int diff = t.add(t.scale(F, T(p.c_out(sigma))), t.leaf(base));
    return t.scale(t.mean(t.mul(diff, diff)), T(p.loss_weight(sigma)));
}

/// Plain (non-differentiable) loss for an arbitrary denoiser; oracle testing.
template <typename T>
double score_loss_value(const DenoiseFnT<T>& D, const Preconditioner& p, const TensorT<T>& r_clean,
                        double sigma, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, sigma);
    TensorT<T> noisy = r_clean;
    for (auto& v : noisy.data) v += T(dist(rng));
    const TensorT<T> den = D(noisy, sigma);
    double mse = 0.0;
    for (std::size_t i = 0; i < den.data.size(); ++i) {
        const double d = double(den.data[i]) - double(r_clean.data[i]);
        mse += d * d;
    }
    mse /= double(den.data.size());
    return p.loss_weight(sigma) * mse;
}

/// Deterministic (or churned) Heun reverse-diffusion sampler. Initialization
/// and any churn noise come from cfg.seed, so deterministic mode is
/// bit-reproducible per seed.
template <typename T>
TensorT<T> heun_sample(const DenoiseFnT<T>& D, const std::vector<std::size_t>& shape,
                       const NoiseSchedule& s, const SamplerConfig& cfg) {
    s.validate();
    const auto sig = karras_sigmas(s);
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> dist;
    TensorT<T> x(shape);
    for (auto& v : x.data) v = T(sig[0] * dist(rng));
    const int N = s.n_steps;
    for (int i = 0; i < N; ++i) {
        double s_cur = sig[std::size_t(i)];
        const double s_next = sig[std::size_t(i) + 1];
        if (cfg.stochastic && cfg.churn > 0.0) {
            const double gamma = std::min(cfg.churn / double(N), std::sqrt(2.0) - 1.0);
            const double s_hat = s_cur * (1.0 + gamma);
            const double extra = std::sqrt(std::max(0.0, s_hat * s_hat - s_cur * s_cur));
            for (auto& v : x.data) v += T(extra * cfg.noise_inflation * dist(rng));
            s_cur = s_hat;
        }
        const TensorT<T> den = D(x, s_cur);
        TensorT<T> d(shape);
        for (std::size_t k = 0; k < x.data.size(); ++k)
            d.data[k] = T((double(x.data[k]) - double(den.data[k])) / s_cur);
        TensorT<T> xn(shape);
        for (std::size_t k = 0; k < x.data.size(); ++k)
            xn.data[k] = T(double(x.data[k]) + (s_next - s_cur) * double(d.data[k]));
        if (s_next > 0.0) {
            const TensorT<T> den2 = D(xn, s_next);
            for (std::size_t k = 0; k < x.data.size(); ++k) {
                const double d2 = (double(xn.data[k]) - double(den2.data[k])) / s_next;
                xn.data[k] =
                    T(double(x.data[k]) + (s_next - s_cur) * 0.5 * (double(d.data[k]) + d2));
            }
        }
        if (!xn.all_finite())
            throw NumericError("heun_sample: non-finite state at step " + std::to_string(i));
        x = std::move(xn);
    }
    return x;
}

std::uint64_t splitmix64(std::uint64_t x);

/// Per-member RNG stream: seed_m = splitmix64(base ^ splitmix64(member + 1)).
/// Stable across runs and independent of thread scheduling.
inline std::uint64_t member_seed(std::uint64_t base, std::uint64_t member) {
    return splitmix64(base ^ splitmix64(member + 1));
}

/// n_members independent reverse-diffusion draws, parallel across members.
template <typename T>
std::vector<TensorT<T>> sample_ensemble(const DenoiseFnT<T>& D,
                                        const std::vector<std::size_t>& shape,
                                        const NoiseSchedule& s, const SamplerConfig& cfg,
                                        std::size_t n_members, std::size_t n_threads = 1) {
    if (n_members < 1) throw ArgError("sample_ensemble: n_members must be >= 1");
    std::vector<TensorT<T>> out(n_members);
    std::exception_ptr err;
    std::mutex err_mu;
    auto work = [&](std::size_t lo, std::size_t hi) {
        try {
            for (std::size_t m = lo; m < hi; ++m) {
                SamplerConfig mc = cfg;
                mc.seed = member_seed(cfg.seed, m);
                out[m] = heun_sample(D, shape, s, mc);
            }
        } catch (...) {
            std::lock_guard<std::mutex> g(err_mu);
            if (!err) err = std::current_exception();
        }
    };
    const std::size_t nt = std::max<std::size_t>(1, std::min(n_threads, n_members));
    if (nt == 1) {
        work(0, n_members);
    } else {
        std::vector<std::thread> threads;
        const std::size_t chunk = (n_members + nt - 1) / nt;
        for (std::size_t t0 = 0; t0 < n_members; t0 += chunk)
            threads.emplace_back(work, t0, std::min(n_members, t0 + chunk));
        for (auto& th : threads) th.join();
    }
    if (err) std::rethrow_exception(err);
    return out;
}

}  // namespace windscale

#endif
