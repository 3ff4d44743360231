#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "doctest.h"
#include "windscale/mean_model.hpp"

using namespace windscale;

namespace {

SimVPConfig tiny_model() {
    SimVPConfig cfg;
    cfg.t_in = 2;
    cfg.c_in = 3;
    cfg.c_out = 2;
    cfg.factor = 2;
    cfg.enc_width = 8;
    cfg.enc_depth = 1;
    cfg.lat_width = 8;
    cfg.tau_blocks = 1;
    cfg.dec_width = 8;
    cfg.gn_groups = 2;
    return cfg;
}

PairSet tiny_pairs(std::size_t keep, std::uint64_t seed = 12) {
    SynthConfig cfg;
    cfg.H = 16;
    cfg.W = 16;
    cfg.T_total = 16;
    cfg.seed = seed;
    auto truth = gen_synthetic(cfg);
    FilterSpec filter;
    filter.k_c = 3.0;
    auto ps = make_pairs(truth, 2, 2, filter);
    if (keep < ps.inputs.size()) {
        ps.inputs.resize(keep);
        ps.targets.resize(keep);
        ps.t_target.resize(keep);
    }
    return ps;
}

/// Per-pixel linear map from C_in input channels to 2 output channels;
/// factor-1 dataset for the closed-form comparison.
PairSet linear_pairs(std::size_t n, const double A[2][2], const double bvec[2],
                     std::uint64_t seed) {
    PairSet ps;
    ps.factor = 1;
    ps.t_in = 1;
    ps.fine_meta.n_lat = 8;
    ps.fine_meta.n_lon = 8;
    ps.fine_meta.channel_names = {"u", "v"};
    ps.coarse_meta = ps.fine_meta;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist;
    for (std::size_t s = 0; s < n; ++s) {
        Tensor32 in({1, 2, 8, 8});
        for (auto& v : in.data) v = float(dist(rng));
        Tensor32 tgt({2, 8, 8});
        for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t i = 0; i < 8; ++i)
                for (std::size_t j = 0; j < 8; ++j)
                    tgt.at3(c, i, j) = float(A[c][0] * in.at4(0, 0, i, j) +
                                             A[c][1] * in.at4(0, 1, i, j) + bvec[c]);
        ps.inputs.push_back(std::move(in));
        ps.targets.push_back(std::move(tgt));
        ps.t_target.push_back(s);
    }
    return ps;
}

}  // namespace

TEST_CASE("single-sample training reduces the loss") {
    auto data = tiny_pairs(1);
    const auto mcfg = tiny_model();
    std::mt19937_64 rng(1);
    ParamStore32 ps;
    simvp_init(ps, mcfg, rng);
    TrainConfig tc;
    tc.epochs = 30;
    tc.batch = 1;
    tc.lr = 5e-3;
    tc.val_fraction = 0.0;
    auto log = train_mean(data, ps, simvp_forward_fn(mcfg), tc);
    REQUIRE(log.steps.size() == 30);
    CHECK(log.steps.back().total < 0.6 * log.steps.front().total);
    CHECK(log.epoch_seconds.size() == 30);
    CHECK(log.val_mse.size() == 30);
}

TEST_CASE("zero learning rate leaves the weights untouched") {
    auto data = tiny_pairs(3);
    const auto mcfg = tiny_model();
    std::mt19937_64 rng(2);
    ParamStore32 ps;
    simvp_init(ps, mcfg, rng);
    std::vector<float> before;
    for (const auto& n : ps.names())
        for (float v : ps.value(n).data) before.push_back(v);
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch = 2;
    tc.lr = 0.0;
    tc.val_fraction = 0.0;
    train_mean(data, ps, simvp_forward_fn(mcfg), tc);
    std::vector<float> after;
    for (const auto& n : ps.names())
        for (float v : ps.value(n).data) after.push_back(v);
    CHECK(before == after);
}

TEST_CASE("trainer reaches the normal-equations solution on linear data") {
    const double A[2][2] = {{1.3, -0.7}, {0.4, 2.1}};
    const double bvec[2] = {0.25, -0.5};
    auto data = linear_pairs(10, A, bvec, 3);

    std::mt19937_64 rng(4);
    ParamStore32 ps;
    add_conv(ps, "lin", 2, 2, 1, rng);
    MeanForwardFn fwd = [](Tape<float>& t, TapeBinding<float>& b, const Tensor32& in) {
        const int x = t.reshape(t.leaf(in), {2, 8, 8});
        return t.conv2d(x, b.node("lin.w"), b.node("lin.b"));
    };
    TrainConfig tc;
    tc.epochs = 600;
    tc.batch = 10;
    tc.lr = 0.02;
    tc.val_fraction = 0.0;
    PhysicsLossWeights mse_only;
    mse_only.w_mae = 0;
    mse_only.w_adv = 0;
    mse_only.w_vort = 0;
    mse_only.w_div = 0;
    tc.weights = mse_only;
    auto log = train_mean(data, ps, fwd, tc);
    CHECK(log.steps.back().total < 1e-8);

    // closed-form least squares over (x0, x1, 1) features; the dataset is
    // noise-free, so the optimum equals the generating coefficients
    double G[3][3] = {};
    double rhs[2][3] = {};
    for (std::size_t s = 0; s < data.inputs.size(); ++s)
        for (std::size_t i = 0; i < 8; ++i)
            for (std::size_t j = 0; j < 8; ++j) {
                const double f[3] = {data.inputs[s].at4(0, 0, i, j),
                                     data.inputs[s].at4(0, 1, i, j), 1.0};
                for (int a = 0; a < 3; ++a)
                    for (int b2 = 0; b2 < 3; ++b2) G[a][b2] += f[a] * f[b2];
                for (int c = 0; c < 2; ++c)
                    for (int a = 0; a < 3; ++a) rhs[c][a] += data.targets[s].at3(c, i, j) * f[a];
            }
    for (int c = 0; c < 2; ++c) {
        double M[3][4];
        for (int a = 0; a < 3; ++a) {
            for (int b2 = 0; b2 < 3; ++b2) M[a][b2] = G[a][b2];
            M[a][3] = rhs[c][a];
        }
        for (int col = 0; col < 3; ++col) {
            int piv = col;
            for (int r = col + 1; r < 3; ++r)
                if (std::fabs(M[r][col]) > std::fabs(M[piv][col])) piv = r;
            for (int k = 0; k < 4; ++k) std::swap(M[col][k], M[piv][k]);
            for (int r = 0; r < 3; ++r) {
                if (r == col) continue;
                const double fphi = M[r][col] / M[col][col];
                for (int k = 0; k < 4; ++k) M[r][k] -= fphi * M[col][k];
            }
        }
        const double sol[3] = {M[0][3] / M[0][0], M[1][3] / M[1][1], M[2][3] / M[2][2]};
        const auto& wgt = ps.value("lin.w");
        const auto& bias = ps.value("lin.b");
        CHECK(wgt.at4(std::size_t(c), 0, 0, 0) == doctest::Approx(sol[0]).epsilon(1e-3));
        CHECK(wgt.at4(std::size_t(c), 1, 0, 0) == doctest::Approx(sol[1]).epsilon(1e-3));
        CHECK(bias.data[std::size_t(c)] == doctest::Approx(sol[2]).epsilon(1e-3));
    }
}

TEST_CASE("log totals recombine from components; training is seeded") {
    auto data = tiny_pairs(6);
    const auto mcfg = tiny_model();
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch = 2;
    tc.lr = 1e-3;
    tc.val_fraction = 0.2;
    auto run = [&](std::uint64_t seed) {
        std::mt19937_64 rng(5);
        ParamStore32 ps;
        simvp_init(ps, mcfg, rng);
        tc.seed = seed;
        return train_mean(data, ps, simvp_forward_fn(mcfg), tc);
    };
    auto log = run(7);
    for (const auto& s : log.steps) {
        const double recomb = tc.weights.w_mae * s.mae + tc.weights.w_mse * s.mse +
                              tc.weights.w_adv * s.advection + tc.weights.w_vort * s.vorticity +
                              tc.weights.w_div * s.divergence;
        CHECK(std::fabs(recomb - s.total) < 1e-6);
    }
    auto log2 = run(7);
    REQUIRE(log.steps.size() == log2.steps.size());
    for (std::size_t i = 0; i < log.steps.size(); ++i)
        CHECK(log.steps[i].total == log2.steps[i].total);
    auto log3 = run(8);
    bool any_diff = false;
    for (std::size_t i = 0; i < log.steps.size(); ++i)
        if (log3.steps[i].total != log.steps[i].total) any_diff = true;
    CHECK(any_diff);
}

TEST_CASE("shape mismatch fails before any weight update") {
    auto data = tiny_pairs(2);
    auto mcfg = tiny_model();
    mcfg.factor = 4;  // outputs 32x32 against 16x16 targets
    std::mt19937_64 rng(6);
    ParamStore32 ps;
    simvp_init(ps, mcfg, rng);
    std::vector<float> before;
    for (const auto& n : ps.names())
        for (float v : ps.value(n).data) before.push_back(v);
    TrainConfig tc;
    tc.epochs = 1;
    tc.batch = 1;
    tc.val_fraction = 0.0;
    CHECK_THROWS_AS(train_mean(data, ps, simvp_forward_fn(mcfg), tc), ShapeError);
    std::vector<float> after;
    for (const auto& n : ps.names())
        for (float v : ps.value(n).data) after.push_back(v);
    CHECK(before == after);
}

TEST_CASE("checkpointing writes loadable weights") {
    auto data = tiny_pairs(4);
    const auto mcfg = tiny_model();
    std::mt19937_64 rng(7);
    ParamStore32 ps;
    simvp_init(ps, mcfg, rng);
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch = 2;
    tc.lr = 1e-3;
    tc.val_fraction = 0.25;
    tc.checkpoint_path = "/tmp/windscale_mean_ckpt.wts1";
    auto log = train_mean(data, ps, simvp_forward_fn(mcfg), tc);
    CHECK(std::isfinite(log.best_val_mse));
    auto loaded = read_wts1(tc.checkpoint_path);
    CHECK(loaded.count_trainable() == ps.count_trainable());
    std::remove(tc.checkpoint_path.c_str());
}

TEST_CASE("predict_mean: shapes, statelessness, guards") {
    const auto mcfg = tiny_model();
    std::mt19937_64 rng(8);
    ParamStore32 ps;
    simvp_init(ps, mcfg, rng);

    FieldSequence coarse;
    coarse.meta.n_lat = 8;
    coarse.meta.n_lon = 8;
    coarse.meta.d_lat = 2.0;
    coarse.meta.d_lon = 2.0;
    coarse.meta.channel_names = {"u", "v", "orography"};
    coarse.data = Tensor32({5, 3, 8, 8});
    std::normal_distribution<double> dist;
    for (auto& v : coarse.data.data) v = float(dist(rng));
    // make steps 2 and 3 copies of 0 and 1: windows (0,1) and (2,3) coincide
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < 8; ++i)
            for (std::size_t j = 0; j < 8; ++j) {
                coarse.data.at4(2, c, i, j) = coarse.data.at4(0, c, i, j);
                coarse.data.at4(3, c, i, j) = coarse.data.at4(1, c, i, j);
            }

    auto out = predict_mean(ps, mcfg, coarse);
    out.validate();
    CHECK(out.steps() == 4);  // 5 - 2 + 1 windows
    CHECK(out.meta.n_lat == 16);
    CHECK(out.meta.d_lat == doctest::Approx(1.0));
    CHECK(out.meta.channel_names == std::vector<std::string>{"u", "v"});
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < 16; ++i)
            for (std::size_t j = 0; j < 16; ++j)
                CHECK(out.data.at4(0, c, i, j) == out.data.at4(2, c, i, j));

    // extreme amplitudes stay finite
    for (auto& v : coarse.data.data) v *= 100.0f;
    auto big = predict_mean(ps, mcfg, coarse);
    CHECK(big.data.all_finite());

    FieldSequence shorty = coarse;
    shorty.data = Tensor32({1, 3, 8, 8}, 0.0f);
    CHECK_THROWS_AS(predict_mean(ps, mcfg, shorty), ArgError);
    FieldSequence wrong = coarse;
    wrong.meta.channel_names = {"u", "v"};
    wrong.data = Tensor32({5, 2, 8, 8}, 0.0f);
    CHECK_THROWS_AS(predict_mean(ps, mcfg, wrong), ShapeError);
}

TEST_CASE("train log CSV layout") {
    auto data = tiny_pairs(2);
    const auto mcfg = tiny_model();
    std::mt19937_64 rng(9);
    ParamStore32 ps;
    simvp_init(ps, mcfg, rng);
    TrainConfig tc;
    tc.epochs = 1;
    tc.batch = 2;
    tc.val_fraction = 0.0;
    auto log = train_mean(data, ps, simvp_forward_fn(mcfg), tc);
    write_train_log_csv(log, "/tmp/windscale_steps.csv");
    write_epoch_log_csv(log, "/tmp/windscale_epochs.csv");
    std::ifstream s1("/tmp/windscale_steps.csv"), s2("/tmp/windscale_epochs.csv");
    std::string h1, h2;
    std::getline(s1, h1);
    std::getline(s2, h2);
    CHECK(h1 == "epoch,step,mae,mse,advection,vorticity,divergence,total");
    CHECK(h2 == "epoch,wall_seconds,val_mse");
    std::remove("/tmp/windscale_steps.csv");
    std::remove("/tmp/windscale_epochs.csv");
}
