#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "doctest.h"
#include "windscale/spectral.hpp"

using namespace windscale;

namespace {

Tensor64 random_field(std::size_t H, std::size_t W, std::uint64_t seed) {
    Tensor64 f({H, W});
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist;
    for (auto& v : f.data) v = dist(rng);
    return f;
}

Tensor64 sine_x(std::size_t n, double k, double amp = 1.0) {
    Tensor64 f({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            f.at2(i, j) = amp * std::sin(2 * M_PI * k * double(j) / double(n));
    return f;
}

}  // namespace

TEST_CASE("dft2 basics") {
    Tensor64 c({8, 8}, 3.0);
    auto F = dft2(c);
    CHECK(std::abs(F[0]) == doctest::Approx(3.0 * 8.0));  // c * sqrt(HW)
    double off = 0;
    for (std::size_t i = 1; i < F.size(); ++i) off += std::abs(F[i]);
    CHECK(off < 1e-9);

    Tensor64 delta({8, 8}, 0.0);
    delta.data[0] = 1.0;
    auto D = dft2(delta);
    for (auto& v : D) CHECK(std::abs(v) == doctest::Approx(1.0 / 8.0));

    auto f = random_field(16, 16, 2);
    auto back = idft2(dft2(f), 16, 16);
    for (std::size_t i = 0; i < f.data.size(); ++i)
        CHECK(std::fabs(back.data[i] - f.data[i]) < 1e-10);
}

TEST_CASE("radial_spectrum: single mode and Parseval") {
    auto f = sine_x(64, 5.0);
    auto s = radial_spectrum(f);
    double total = 0;
    for (double p : s.power) total += p;
    CHECK(s.power[4] / total > 0.99);  // bin k=5 is index 4
    CHECK(total == doctest::Approx(s.variance).epsilon(1e-6));
}

TEST_CASE("Parseval holds on 100 random fields") {
    for (int seed = 0; seed < 100; ++seed) {
        auto f = random_field(24, 24, 1000 + seed);
        auto s = radial_spectrum(f);
        double total = 0;
        for (double p : s.power) total += p;
        CHECK(total == doctest::Approx(s.variance).epsilon(1e-6));
    }
}

TEST_CASE("two-sine amplitude ratio") {
    auto f = sine_x(64, 3.0, 1.0);
    auto g = sine_x(64, 9.0, 2.0);
    for (std::size_t i = 0; i < f.data.size(); ++i) f.data[i] += g.data[i];
    auto s = radial_spectrum(f);
    CHECK(s.power[8] / s.power[2] == doctest::Approx(4.0).epsilon(0.01));
}

TEST_CASE("white noise spectrum is flat per mode") {
    // per-bin power / bin mode count should be constant across bins
    const std::size_t n = 32, nseeds = 100;
    auto count_modes = [&](std::size_t bin) {
        std::size_t cnt = 0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                if (i == 0 && j == 0) continue;
                const double ky = i <= n / 2 ? double(i) : double(i) - double(n);
                const double kx = j <= n / 2 ? double(j) : double(j) - double(n);
                if (std::size_t(std::round(std::hypot(kx, ky))) == bin) ++cnt;
            }
        return cnt;
    };
    std::vector<double> avg(6, 0.0);
    for (std::size_t seed = 0; seed < nseeds; ++seed) {
        auto s = radial_spectrum(random_field(n, n, 7000 + seed));
        for (std::size_t b = 2; b <= 7; ++b) avg[b - 2] += s.power[b - 1];
    }
    // unit-variance white noise: per-mode power ~ 1/N, sigma of the bin mean
    // ~ sqrt(2/(modes*nseeds)) relative
    for (std::size_t b = 2; b <= 7; ++b) {
        const double modes = double(count_modes(b));
        const double per_mode = avg[b - 2] / double(nseeds) / modes * double(n * n);
        const double sigma = std::sqrt(2.0 / (modes * double(nseeds)));
        CHECK(std::fabs(per_mode - 1.0) < 3.0 * sigma);
    }
}

TEST_CASE("temporal_spectrum: tone, constant, AR(1)") {
    const std::size_t T = 1024, L = 128;
    {
        std::vector<double> x(T);
        const double f0 = 16.0 / double(L);  // on-bin tone
        for (std::size_t t = 0; t < T; ++t) x[t] = std::sin(2 * M_PI * f0 * double(t));
        auto s = temporal_spectrum(x, L);
        std::size_t peak = 0;
        for (std::size_t i = 1; i < s.power.size(); ++i)
            if (s.power[i] > s.power[peak]) peak = i;
        CHECK(s.freq[peak] == doctest::Approx(f0));
    }
    {
        // Hann window: a constant maps to bins 0 and 1 only, DC dominates
        std::vector<double> c(256, 4.2);
        auto s = temporal_spectrum(c, 64);
        double rest = 0;
        for (std::size_t i = 2; i < s.power.size(); ++i) rest += s.power[i];
        CHECK(s.power[0] > 1.0);
        CHECK(s.power[0] > s.power[1]);
        CHECK(rest < 1e-12);
    }
    {
        // AR(1): x_t = a x_{t-1} + e_t, spectral density s(f) = s2/(1+a^2-2a cos 2 pi f)
        const double a = 0.9;
        const std::size_t n = 1 << 17;
        std::mt19937_64 rng(5);
        std::normal_distribution<double> dist;
        std::vector<double> x(n);
        x[0] = 0;
        for (std::size_t t = 1; t < n; ++t) x[t] = a * x[t - 1] + dist(rng);
        auto s = temporal_spectrum(x, 256);
        // decreasing trend, block-averaged to beat per-bin estimator noise
        const std::size_t blk = 16;
        double prev = 1e300;
        for (std::size_t b = 0; (b + 1) * blk < s.power.size(); ++b) {
            double m = 0;
            for (std::size_t i = b * blk + 1; i <= (b + 1) * blk; ++i) m += s.power[i];
            CHECK(m < prev);
            prev = m;
        }
        // mid-band analytic comparison; one-sided density integrates to variance
        for (std::size_t i = s.power.size() / 4; i < s.power.size() / 2; ++i) {
            const double f = s.freq[i];
            const double dens = 2.0 / (1 + a * a - 2 * a * std::cos(2 * M_PI * f)) / 256.0;
            CHECK(s.power[i] == doctest::Approx(dens).epsilon(0.10));
        }
    }
    CHECK_THROWS_AS(temporal_spectrum(std::vector<double>(16, 0.0), 32), ArgError);
}

TEST_CASE("lowpass spectral cutoff") {
    FilterSpec spec;
    spec.k_c = 5;
    Tensor64 c({16, 16}, 1.7);
    auto lc = lowpass(c, spec);
    for (double v : lc.data) CHECK(v == doctest::Approx(1.7).epsilon(1e-12));

    auto s10 = sine_x(64, 10.0);
    auto filtered = lowpass(s10, spec);
    for (double v : filtered.data) CHECK(std::fabs(v) < 1e-10);

    // idempotence and linearity
    auto f = random_field(32, 32, 9);
    auto g = random_field(32, 32, 10);
    auto lf = lowpass(f, spec);
    auto llf = lowpass(lf, spec);
    for (std::size_t i = 0; i < lf.data.size(); ++i)
        CHECK(std::fabs(llf.data[i] - lf.data[i]) < 1e-10);
    Tensor64 comb({32, 32});
    for (std::size_t i = 0; i < comb.data.size(); ++i)
        comb.data[i] = 2.0 * f.data[i] - 0.5 * g.data[i];
    auto lcomb = lowpass(comb, spec);
    auto lg = lowpass(g, spec);
    for (std::size_t i = 0; i < comb.data.size(); ++i)
        CHECK(std::fabs(lcomb.data[i] - (2.0 * lf.data[i] - 0.5 * lg.data[i])) < 1e-10);

    // zero power above the cutoff, exactly
    auto sp = radial_spectrum(lf);
    for (std::size_t n = 0; n < sp.k.size(); ++n)
        if (double(sp.k[n]) > spec.k_c) CHECK(sp.power[n] < 1e-28);
}

TEST_CASE("lowpass wavelet attenuates the high band by >= 20 dB") {
    FilterSpec spec;
    spec.kind = FilterKind::LiftingWavelet;
    spec.levels = 2;
    const std::size_t n = 64;
    Tensor64 c({n, n}, 0.9);
    auto lc = lowpass(c, spec);
    for (double v : lc.data) CHECK(v == doctest::Approx(0.9).epsilon(1e-10));

    const double k_eq = spec.equivalent_cutoff(n);  // 8 for J=2 on 64
    double before_hi = 0, after_hi = 0, before_lo = 0, after_lo = 0;
    for (int seed = 0; seed < 5; ++seed) {
        auto f = random_field(n, n, 400 + seed);
        auto lf = lowpass(f, spec);
        auto sb = radial_spectrum(f);
        auto sa = radial_spectrum(lf);
        before_hi += band_energy(sb, std::size_t(2 * k_eq), sb.k.back());
        after_hi += band_energy(sa, std::size_t(2 * k_eq), sa.k.back());
        before_lo += band_energy(sb, 1, std::size_t(k_eq / 2));
        after_lo += band_energy(sa, 1, std::size_t(k_eq / 2));
    }
    CHECK(10 * std::log10(before_hi / after_hi) >= 20.0);
    CHECK(std::fabs(10 * std::log10(before_lo / after_lo)) <= 1.0);

    // approximate idempotence: <= 1 dB drift in surviving band
    auto f = random_field(n, n, 77);
    auto l1 = lowpass(f, spec);
    auto l2 = lowpass(l1, spec);
    auto s1 = radial_spectrum(l1);
    auto s2 = radial_spectrum(l2);
    const double e1 = band_energy(s1, 1, std::size_t(k_eq / 2));
    const double e2 = band_energy(s2, 1, std::size_t(k_eq / 2));
    CHECK(std::fabs(10 * std::log10(e1 / e2)) <= 1.0);
}

TEST_CASE("band_energy additivity and totals") {
    auto f = random_field(32, 32, 13);
    auto s = radial_spectrum(f);
    const double total = band_energy(s, 1, s.k.back());
    CHECK(total == doctest::Approx(s.variance).epsilon(1e-6));
    const double lo = band_energy(s, 1, 8), hi = band_energy(s, 9, s.k.back());
    CHECK(lo + hi == doctest::Approx(total).epsilon(1e-12));
    CHECK(band_energy(s, 7, 3) == 0.0);

    auto s5 = radial_spectrum(sine_x(64, 5.0));
    CHECK(band_energy(s5, 4, 6) / band_energy(s5, 1, s5.k.back()) > 0.99);
}

TEST_CASE("spectrum CSV format") {
    auto s = radial_spectrum(random_field(16, 16, 1));
    const std::string p = "/tmp/windscale_spec.csv";
    write_spectrum_csv(s, p);
    std::ifstream is(p);
    std::string header;
    std::getline(is, header);
    CHECK(header == "bin,power");
    std::remove(p.c_str());
}
