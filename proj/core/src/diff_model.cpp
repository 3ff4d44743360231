#include "windscale/diff_model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

namespace windscale {

DiffTrainLog train_denoiser(const std::vector<Tensor32>& targets,
                            const std::vector<Tensor32>& conds, ParamStore32& ps,
                            const DenoiserConfig& dcfg, const DiffTrainConfig& cfg) {
    cfg.validate();
    dcfg.validate();
    if (targets.empty()) throw ArgError("train_denoiser: empty dataset");
    if (targets.size() != conds.size())
        throw StateError("train_denoiser: target/conditioning count mismatch");

    Preconditioner prec;
    prec.sigma_data = cfg.sigma_data;
    const std::size_t N = targets.size();
    std::vector<std::size_t> idx(N);
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(cfg.seed);
    DiffTrainLog log;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::shuffle(idx.begin(), idx.end(), rng);
        std::size_t batches = 0;
        for (std::size_t start = 0; start < N; start += cfg.batch) {
            if (cfg.steps_per_epoch > 0 && batches >= cfg.steps_per_epoch) break;
            const std::size_t stop = std::min(N, start + cfg.batch);
            const float inv = 1.0f / float(stop - start);
            ps.zero_grad();
            double batch_loss = 0;
            for (std::size_t k = start; k < stop; ++k) {
                const std::size_t n = idx[k];
                const double sigma = sample_sigma(rng);
                Tape<float> t;
                TapeBinding<float> b(t, ps);
                const int loss =
                    score_loss_node(t, b, dcfg, prec, targets[n], conds[n], sigma, rng);
                batch_loss += double(t.value(loss).data[0]) * inv;
                t.backward(t.scale(loss, inv));
                b.collect();
            }
            if (!std::isfinite(batch_loss))
                throw NumericError("train_denoiser: non-finite loss at epoch " +
                                   std::to_string(epoch) + " step " +
                                   std::to_string(log.steps.size()));
            ps.adam_step(cfg.lr);
            DiffStepLog step;
            step.epoch = std::size_t(epoch);
            step.loss = batch_loss;
            log.steps.push_back(step);
            ++batches;
        }
        if (!cfg.checkpoint_path.empty()) write_wts1(ps, cfg.checkpoint_path);
        log.epoch_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return log;
}

double frames_std(const std::vector<Tensor32>& frames) {
    if (frames.empty()) throw ArgError("frames_std: empty frame list");
    double sum = 0, sq = 0;
    std::size_t n = 0;
    for (const auto& f : frames)
        for (float v : f.data) {
            sum += double(v);
            sq += double(v) * double(v);
            ++n;
        }
    const double mean = sum / double(n);
    return std::sqrt(std::max(0.0, sq / double(n) - mean * mean));
}

FieldSequence sample_fields(ParamStore32& ps, const DenoiserConfig& dcfg,
                            const Preconditioner& prec, const NoiseSchedule& sched,
                            const FieldSequence& cond, std::uint64_t seed, std::uint64_t member,
                            std::size_t n_threads) {
    cond.validate();
    prec.validate();
    sched.validate();
    if (cond.channels() != dcfg.c_cond)
        throw ShapeError("sample_fields: conditioning has " + std::to_string(cond.channels()) +
                         " channels, denoiser expects " + std::to_string(dcfg.c_cond));
    if (dcfg.c_res != 2)
        throw ArgError("sample_fields: denoiser must produce the two wind channels");
    const std::size_t T = cond.steps(), H = cond.meta.n_lat, W = cond.meta.n_lon;
    FieldSequence out;
    out.meta = cond.meta;
    out.meta.channel_names = {"u", "v"};
    out.data = Tensor32({T, 2, H, W});
    const std::uint64_t member_base = member_seed(seed, member);

    std::exception_ptr err;
    std::mutex err_mu;
    auto work = [&](std::size_t lo, std::size_t hi) {
        try {
            for (std::size_t t0 = lo; t0 < hi; ++t0) {
                Tensor32 cframe({dcfg.c_cond, H, W});
                for (std::size_t c = 0; c < dcfg.c_cond; ++c)
                    for (std::size_t i = 0; i < H; ++i)
                        for (std::size_t j = 0; j < W; ++j)
                            cframe.at3(c, i, j) = cond.data.at4(t0, c, i, j);
                DenoiseFnT<float> D = [&](const Tensor32& x, double s) {
                    return denoise_net(ps, dcfg, prec, x, cframe, s);
                };
                SamplerConfig scfg;
                scfg.seed = member_seed(member_base, t0);
                const Tensor32 draw = heun_sample(D, {2, H, W}, sched, scfg);
                for (std::size_t c = 0; c < 2; ++c)
                    for (std::size_t i = 0; i < H; ++i)
                        for (std::size_t j = 0; j < W; ++j)
                            out.data.at4(t0, c, i, j) = draw.at3(c, i, j);
            }
        } catch (...) {
            std::lock_guard<std::mutex> g(err_mu);
            if (!err) err = std::current_exception();
        }
    };
    const std::size_t nt = std::max<std::size_t>(1, std::min(n_threads, std::max<std::size_t>(T, 1)));
    if (nt <= 1 || T < 2) {
        work(0, T);
    } else {
        std::vector<std::thread> threads;
        const std::size_t chunk = (T + nt - 1) / nt;
        for (std::size_t t0 = 0; t0 < T; t0 += chunk)
            threads.emplace_back(work, t0, std::min(T, t0 + chunk));
        for (auto& th : threads) th.join();
    }
    if (err) std::rethrow_exception(err);
    return out;
}

void write_diff_log_csv(const DiffTrainLog& log, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw FormatError("cannot open '" + path + "' for writing");
    os << "epoch,step,loss\n";
    char buf[96];
    for (std::size_t i = 0; i < log.steps.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%zu,%.9g\n", log.steps[i].epoch, i,
                      log.steps[i].loss);
        os << buf;
    }
}

void write_diff_epoch_csv(const DiffTrainLog& log, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw FormatError("cannot open '" + path + "' for writing");
    os << "epoch,wall_seconds\n";
    char buf[64];
    for (std::size_t e = 0; e < log.epoch_seconds.size(); ++e) {
        std::snprintf(buf, sizeof buf, "%zu,%.6f\n", e, log.epoch_seconds[e]);
        os << buf;
    }
}

}  // namespace windscale
