#include <cmath>
#include <random>

#include "doctest.h"
#include "windscale/diff_model.hpp"

using namespace windscale;

namespace {

DenoiserConfig tiny_denoiser() {
    DenoiserConfig d;
    d.c_res = 2;
    d.c_cond = 2;
    d.width = 8;
    d.depth = 1;
    d.emb = 8;
    d.gn_groups = 2;
    d.rdb_growth = 4;
    return d;
}

std::pair<std::vector<Tensor32>, std::vector<Tensor32>> tiny_dataset(std::size_t n,
                                                                     std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> dist(0.0f, 1.0f);
    std::vector<Tensor32> targets, conds;
    for (std::size_t k = 0; k < n; ++k) {
        Tensor32 t({2, 8, 8}), c({2, 8, 8});
        for (auto& v : t.data) v = dist(rng);
        // conditioning correlated with the target
        for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] = 0.5f * t.data[i];
        targets.push_back(std::move(t));
        conds.push_back(std::move(c));
    }
    return {targets, conds};
}

}  // namespace

TEST_CASE("denoiser training lowers the score-matching loss") {
    auto [targets, conds] = tiny_dataset(8, 3);
    auto dcfg = tiny_denoiser();
    ParamStore32 ps;
    std::mt19937_64 rng(1);
    denoiser_init(ps, dcfg, rng);
    DiffTrainConfig cfg;
    cfg.epochs = 20;
    cfg.batch = 4;
    cfg.lr = 3e-3;
    cfg.seed = 5;
    auto log = train_denoiser(targets, conds, ps, dcfg, cfg);
    REQUIRE(log.steps.size() == std::size_t(cfg.epochs) * 2);
    double head = 0, tail = 0;
    for (std::size_t i = 0; i < 4; ++i) head += log.steps[i].loss / 4;
    for (std::size_t i = log.steps.size() - 4; i < log.steps.size(); ++i)
        tail += log.steps[i].loss / 4;
    CHECK(tail < head);
    CHECK(log.epoch_seconds.size() == std::size_t(cfg.epochs));
}

TEST_CASE("denoiser training is reproducible per seed") {
    auto [targets, conds] = tiny_dataset(6, 11);
    auto dcfg = tiny_denoiser();
    DiffTrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch = 3;
    cfg.lr = 1e-3;
    cfg.seed = 9;
    ParamStore32 a, b;
    {
        std::mt19937_64 rng(2);
        denoiser_init(a, dcfg, rng);
    }
    {
        std::mt19937_64 rng(2);
        denoiser_init(b, dcfg, rng);
    }
    auto la = train_denoiser(targets, conds, a, dcfg, cfg);
    auto lb = train_denoiser(targets, conds, b, dcfg, cfg);
    REQUIRE(la.steps.size() == lb.steps.size());
    for (std::size_t i = 0; i < la.steps.size(); ++i)
        CHECK(la.steps[i].loss == lb.steps[i].loss);
    for (const auto& name : a.names()) CHECK(a.value(name).data == b.value(name).data);
}

TEST_CASE("steps_per_epoch caps the work") {
    auto [targets, conds] = tiny_dataset(8, 21);
    auto dcfg = tiny_denoiser();
    ParamStore32 ps;
    std::mt19937_64 rng(4);
    denoiser_init(ps, dcfg, rng);
    DiffTrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch = 2;
    cfg.steps_per_epoch = 1;
    auto log = train_denoiser(targets, conds, ps, dcfg, cfg);
    CHECK(log.steps.size() == 3);
}

TEST_CASE("frames_std matches a direct computation") {
    std::vector<Tensor32> frames;
    frames.push_back(Tensor32({2, 2}, 1.0f));
    frames.push_back(Tensor32({2, 2}, 3.0f));
    // values {1x4, 3x4}: mean 2, variance 1
    CHECK(frames_std(frames) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(frames_std({}), ArgError);
}

TEST_CASE("sequence sampling is deterministic and thread-invariant") {
    auto dcfg = tiny_denoiser();
    ParamStore32 ps;
    std::mt19937_64 rng(6);
    denoiser_init(ps, dcfg, rng);
    FieldSequence cond;
    cond.meta.n_lat = cond.meta.n_lon = 8;
    cond.meta.channel_names = {"u", "v"};
    cond.data = Tensor32({4, 2, 8, 8});
    std::normal_distribution<float> dist;
    for (auto& v : cond.data.data) v = dist(rng);
    Preconditioner prec;
    NoiseSchedule sched;
    sched.sigma_max = 10.0;
    sched.n_steps = 6;

    auto a = sample_fields(ps, dcfg, prec, sched, cond, 42, 0, 1);
    auto b = sample_fields(ps, dcfg, prec, sched, cond, 42, 0, 4);
    CHECK(a.data.data == b.data.data);
    CHECK(a.steps() == 4);
    CHECK(a.channels() == 2);
    auto other = sample_fields(ps, dcfg, prec, sched, cond, 42, 1, 1);
    CHECK(other.data.data != a.data.data);
    // members share nothing frame to frame either
    bool frames_differ = false;
    for (std::size_t i = 0; i < 2 * 8 * 8; ++i)
        if (a.data.at4(0, 0, 0, i % 8) != a.data.at4(1, 0, 0, i % 8)) frames_differ = true;
    CHECK(frames_differ);
}
