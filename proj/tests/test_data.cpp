#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "doctest.h"
#include "windscale/data.hpp"

using namespace windscale;

namespace {

FieldSequence iid_sequence(std::size_t T, std::size_t H, std::size_t W, double mean, double stddev,
                           std::uint64_t seed) {
    FieldSequence s;
    s.meta.n_lat = H;
    s.meta.n_lon = W;
    s.meta.channel_names = {"u"};
    s.data = Tensor32({T, 1, H, W});
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(mean, stddev);
    for (auto& v : s.data.data) v = float(dist(rng));
    return s;
}

double fit_slope(const SpatialSpectrum& s, std::size_t k_lo, std::size_t k_hi) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0, n = 0;
    for (std::size_t i = 0; i < s.k.size(); ++i) {
        if (s.k[i] < k_lo || s.k[i] > k_hi || s.power[i] <= 0) continue;
        const double x = std::log(double(s.k[i])), y = std::log(s.power[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        n += 1;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

TEST_CASE("shift_periodic: integer roll exact, identity wrap, fractional interp") {
    Tensor64 f({8, 8});
    std::mt19937_64 rng(1);
    std::normal_distribution<double> dist;
    for (auto& v : f.data) v = dist(rng);
    auto s = shift_periodic(f, 0.0, 3.0);
    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = 0; j < 8; ++j) CHECK(s.at2(i, j) == f.at2(i, (j + 5) % 8));
    auto w = shift_periodic(f, 8.0, -8.0);
    CHECK(w.data == f.data);

    Tensor64 sine({16, 16});
    for (std::size_t i = 0; i < 16; ++i)
        for (std::size_t j = 0; j < 16; ++j) sine.at2(i, j) = std::sin(2 * M_PI * double(j) / 16);
    auto half = shift_periodic(sine, 0.0, 0.5);
    for (std::size_t j = 0; j < 16; ++j)
        CHECK(half.at2(3, j) ==
              doctest::Approx(0.5 * (std::sin(2 * M_PI * double(j) / 16) +
                                     std::sin(2 * M_PI * (double(j) - 1) / 16)))
                  .epsilon(1e-12));
}

TEST_CASE("pure advection shifts frames exactly") {
    SynthConfig cfg;
    cfg.H = 32;
    cfg.W = 32;
    cfg.T_total = 16;
    cfg.forcing_amp = 0.0;
    cfg.c_x = 1.0;
    cfg.c_y = 0.0;
    cfg.seed = 3;
    auto seq = gen_synthetic(cfg);
    seq.validate();
    for (std::size_t t : {1ul, 5ul, 15ul})
        for (std::size_t c : {0ul, 1ul})
            for (std::size_t i = 0; i < 32; ++i)
                for (std::size_t j = 0; j < 32; ++j)
                    CHECK(seq.data.at4(t, c, i, j) ==
                          seq.data.at4(0, c, i, (j + 32 - t % 32) % 32));
}

TEST_CASE("orography channel is static") {
    SynthConfig cfg;
    cfg.H = 16;
    cfg.W = 16;
    cfg.T_total = 16;
    cfg.seed = 4;
    auto seq = gen_synthetic(cfg);
    for (std::size_t t = 1; t < 16; ++t)
        for (std::size_t i = 0; i < 16; ++i)
            for (std::size_t j = 0; j < 16; ++j)
                CHECK(seq.data.at4(t, 2, i, j) == seq.data.at4(0, 2, i, j));
}

TEST_CASE("generated spectrum slope tracks the configured alpha") {
    double slope = 0;
    const int nseeds = 20;
    for (int seed = 0; seed < nseeds; ++seed) {
        SynthConfig cfg;
        cfg.H = 64;
        cfg.W = 64;
        cfg.T_total = 16;
        cfg.alpha = 3.0;
        cfg.seed = std::uint64_t(100 + seed);
        auto seq = gen_synthetic(cfg);
        slope += fit_slope(radial_spectrum(seq.frame(0, 0)), 4, 16);
    }
    slope /= double(nseeds);
    CHECK(slope == doctest::Approx(-3.0).epsilon(0.1));
}

TEST_CASE("generator determinism") {
    SynthConfig cfg;
    cfg.H = 16;
    cfg.W = 16;
    cfg.T_total = 16;
    cfg.seed = 9;
    auto a = gen_synthetic(cfg);
    auto b = gen_synthetic(cfg);
    CHECK(a.data.data == b.data.data);
    cfg.seed = 10;
    auto c = gen_synthetic(cfg);
    CHECK(a.data.data != c.data.data);
}

TEST_CASE("make_pairs: window count, timestamps, scale separation, self-oracle") {
    SynthConfig cfg;
    cfg.H = 32;
    cfg.W = 32;
    cfg.T_total = 16;
    cfg.seed = 12;
    auto truth = gen_synthetic(cfg);
    FilterSpec filter;
    filter.k_c = 6.0;
    auto ps = make_pairs(truth, 4, 2, filter);
    CHECK(ps.inputs.size() == 13);  // T - T_in + 1
    CHECK(ps.targets.size() == 13);
    CHECK(ps.coarse_meta.n_lat == 16);
    CHECK(ps.fine_meta.n_lat == 32);
    CHECK(ps.inputs[0].shape == std::vector<std::size_t>{4, 3, 16, 16});
    CHECK(ps.targets[0].shape == std::vector<std::size_t>{2, 32, 32});

    for (std::size_t n = 0; n < ps.inputs.size(); ++n) {
        CHECK(ps.t_target[n] == n + 3);  // final step of each window
        // target equals the truth frame bit for bit
        for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t i = 0; i < 32; ++i)
                for (std::size_t j = 0; j < 32; ++j)
                    CHECK(ps.targets[n].at3(c, i, j) == truth.data.at4(ps.t_target[n], c, i, j));
    }

    // inputs carry no energy above the cutoff
    for (std::size_t n = 0; n < ps.inputs.size(); n += 4)
        for (std::size_t k = 0; k < 4; ++k) {
            Tensor64 frame({16, 16});
            for (std::size_t i = 0; i < 16; ++i)
                for (std::size_t j = 0; j < 16; ++j) frame.at2(i, j) = ps.inputs[n].at4(k, 0, i, j);
            auto s = radial_spectrum(frame);
            const double hi = band_energy(s, std::size_t(filter.k_c) + 1, s.k.back());
            CHECK(hi <= 1e-6 * s.variance);
        }

    // running the same filter + subsample over the stored target reproduces
    // the stored input frame exactly
    for (std::size_t n = 0; n < ps.inputs.size(); n += 6)
        for (std::size_t c = 0; c < 2; ++c) {
            Tensor64 fine({32, 32});
            for (std::size_t i = 0; i < 32; ++i)
                for (std::size_t j = 0; j < 32; ++j)
                    fine.at2(i, j) = double(ps.targets[n].at3(c, i, j));
            auto low = lowpass(fine, filter);
            for (std::size_t i = 0; i < 16; ++i)
                for (std::size_t j = 0; j < 16; ++j)
                    CHECK(ps.inputs[n].at4(3, c, i, j) == float(low.at2(i * 2, j * 2)));
        }

    CHECK_THROWS_AS(make_pairs(truth, 4, 3, filter), ArgError);   // 32 % 3 != 0
    CHECK_THROWS_AS(make_pairs(truth, 20, 2, filter), ArgError);  // window longer than data
}

TEST_CASE("synthetic biased coarse model: identity, moments, tilt") {
    SynthConfig cfg;
    cfg.H = 32;
    cfg.W = 32;
    cfg.T_total = 64;
    cfg.seed = 21;
    auto truth = gen_synthetic(cfg);
    FilterSpec filter;
    filter.k_c = 6.0;

    auto coarse = coarsen_sequence(truth, 2, filter);
    auto ident = gen_biased_gcm(truth, 2, filter, BiasSpec{});
    CHECK(ident.data.data == coarse.data.data);

    BiasSpec bias;
    bias.a_u = 1.2;
    bias.b_u = 0.5;
    bias.a_v = 0.8;
    bias.b_v = -0.25;
    auto biased = gen_biased_gcm(truth, 2, filter, bias);
    auto moments = [&](const FieldSequence& s, std::size_t c, std::size_t i, std::size_t j) {
        double m = 0, v = 0;
        for (std::size_t t = 0; t < s.steps(); ++t) m += s.data.at4(t, c, i, j);
        m /= double(s.steps());
        for (std::size_t t = 0; t < s.steps(); ++t) {
            const double d = s.data.at4(t, c, i, j) - m;
            v += d * d;
        }
        return std::pair<double, double>{m, std::sqrt(v / double(s.steps()))};
    };
    for (std::size_t i = 0; i < 16; i += 5)
        for (std::size_t j = 0; j < 16; j += 5) {
            auto [mc, sc] = moments(coarse, 0, i, j);
            auto [mb, sb] = moments(biased, 0, i, j);
            CHECK(mb == doctest::Approx(1.2 * mc + 0.5).epsilon(1e-4));
            CHECK(sb == doctest::Approx(1.2 * sc).epsilon(1e-4));
            auto [mcv, scv] = moments(coarse, 1, i, j);
            auto [mbv, sbv] = moments(biased, 1, i, j);
            CHECK(mbv == doctest::Approx(0.8 * mcv - 0.25).epsilon(1e-4));
            CHECK(sbv == doctest::Approx(0.8 * scv).epsilon(1e-4));
        }

    BiasSpec tilted;
    tilted.tilt = 3.0;
    auto damped = gen_biased_gcm(truth, 2, filter, tilted);
    auto sc = radial_spectrum(coarse.frame(0, 0));
    auto sd = radial_spectrum(damped.frame(0, 0));
    CHECK(band_energy(sd, 4, 6) < 0.8 * band_energy(sc, 4, 6));
    CHECK(band_energy(sd, 1, 1) == doctest::Approx(band_energy(sc, 1, 1)).epsilon(0.05));
    auto damped2 = gen_biased_gcm(truth, 2, filter, tilted);
    CHECK(damped.data.data == damped2.data.data);
}

TEST_CASE("quantile map: identity fit, monotone, rank preserving") {
    auto s = iid_sequence(400, 4, 4, 0.0, 1.0, 31);
    auto map = qmap_fit(s, s, 101);
    map.validate();
    auto mapped = qmap_apply(map, s);
    for (std::size_t i = 0; i < s.data.data.size(); ++i)
        CHECK(mapped.data.data[i] == doctest::Approx(s.data.data[i]).epsilon(1e-6));

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-6.0, 6.0);
    for (int it = 0; it < 500; ++it) {
        double x1 = u(rng), x2 = u(rng);
        if (x1 > x2) std::swap(x1, x2);
        CHECK(qmap_transform(map, 0, 1, 2, x1) <= qmap_transform(map, 0, 1, 2, x2));
    }
}

TEST_CASE("quantile map moves N(0,1) onto N(3,1)") {
    const std::size_t n = 100000;
    auto src = iid_sequence(n, 4, 4, 0.0, 1.0, 41);
    auto tgt = iid_sequence(n, 4, 4, 3.0, 1.0, 42);
    auto map = qmap_fit(src, tgt, 101);
    auto mapped = qmap_apply(map, src);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            double m = 0;
            for (std::size_t t = 0; t < n; ++t) m += mapped.data.at4(t, 0, i, j);
            m /= double(n);
            CHECK(m == doctest::Approx(3.0).epsilon(0.0067));  // 3 +/- 0.02
        }

    // per-cell KS between mapped source and target
    std::vector<double> a(n), b(n);
    for (std::size_t t = 0; t < n; ++t) {
        a[t] = mapped.data.at4(t, 0, 2, 2);
        b[t] = tgt.data.at4(t, 0, 2, 2);
    }
    CHECK(ks_distance(a, b) < 0.02);

    // re-fitting on corrected data is a near-identity
    auto map2 = qmap_fit(mapped, tgt, 101);
    auto twice = qmap_apply(map2, mapped);
    for (std::size_t t = 0; t < n; t += 97)
        CHECK(std::fabs(twice.data.at4(t, 0, 1, 1) - mapped.data.at4(t, 0, 1, 1)) < 0.01);
}

TEST_CASE("quantile map error paths") {
    auto shorty = iid_sequence(50, 4, 4, 0.0, 1.0, 51);
    try {
        qmap_fit(shorty, shorty, 101);
        FAIL("expected ArgError");
    } catch (const ArgError& e) {
        CHECK(std::string(e.what()).find("cell") != std::string::npos);
    }
    auto s = iid_sequence(200, 4, 4, 0.0, 1.0, 52);
    auto map = qmap_fit(s, s, 101);
    auto other = iid_sequence(10, 8, 8, 0.0, 1.0, 53);
    CHECK_THROWS_AS(qmap_apply(map, other), ShapeError);
}

TEST_CASE("QMP1 roundtrip and corruption") {
    auto s = iid_sequence(150, 4, 5, 0.0, 2.0, 61);
    auto t = iid_sequence(150, 4, 5, 1.0, 0.5, 62);
    auto map = qmap_fit(s, t, 21);
    const std::string p = "/tmp/windscale_test.qmp1";
    write_qmp1(map, p);
    auto back = read_qmp1(p);
    CHECK(back.Q == map.Q);
    CHECK(back.C == map.C);
    CHECK(back.H == map.H);
    CHECK(back.W == map.W);
    CHECK(back.channel_names == map.channel_names);
    CHECK(back.src == map.src);
    CHECK(back.tgt == map.tgt);

    {
        std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.write("NOPE", 4);
    }
    CHECK_THROWS_AS(read_qmp1(p), FormatError);
    write_qmp1(map, p);
    {
        std::ofstream f(p, std::ios::app | std::ios::binary);
        f << 'x';
    }
    CHECK_THROWS_AS(read_qmp1(p), FormatError);
    std::remove(p.c_str());
}

TEST_CASE("ks_distance oracle values") {
    CHECK(ks_distance({1, 2, 3}, {1, 2, 3}) == 0.0);
    CHECK(ks_distance({0, 0.1, 0.2}, {5, 6}) == 1.0);
    CHECK(ks_distance({1, 2, 3}, {1.5}) == doctest::Approx(2.0 / 3.0));
    CHECK_THROWS_AS(ks_distance({}, {1.0}), ArgError);
}
