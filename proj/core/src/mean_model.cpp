#include "windscale/mean_model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

namespace windscale {

namespace {

struct SampleLoss {
    double mae = 0, mse = 0, adv = 0, vort = 0, div = 0;
};

/// Builds the weighted loss for one sample and reports the raw components.
int sample_loss_node(Tape<float>& t, int pred, const Tensor32& target,
                     const PhysicsLossWeights& w, double d_lat, double d_lon, SampleLoss& out) {
    const auto& ps = t.value(pred);
    if (ps.shape != target.shape)
        throw ShapeError("train_mean: prediction " + shape_str(ps.shape) +
                         " does not match target " + shape_str(target.shape));
    const std::size_t H = target.shape[1], W = target.shape[2];
    const int tgt = t.leaf(target);
    const int pu = t.reshape(t.slice_ch(pred, 0, 1), {H, W});
    const int pv = t.reshape(t.slice_ch(pred, 1, 2), {H, W});
    const int tu = t.reshape(t.slice_ch(tgt, 0, 1), {H, W});
    const int tv = t.reshape(t.slice_ch(tgt, 1, 2), {H, W});
    const int mae =
        t.scale(t.add(tape_mae(t, pu, tu), tape_mae(t, pv, tv)), 0.5f);
    const int mse =
        t.scale(t.add(tape_mse(t, pu, tu), tape_mse(t, pv, tv)), 0.5f);
    auto [pau, pav] = tape_advection(t, pu, pv, d_lat, d_lon);
    auto [tau_, tav] = tape_advection(t, tu, tv, d_lat, d_lon);
    const int adv = t.scale(t.add(tape_mse(t, pau, tau_), tape_mse(t, pav, tav)), 0.5f);
    const int vort = tape_mse(t, tape_vorticity(t, pu, pv, d_lat, d_lon),
                              tape_vorticity(t, tu, tv, d_lat, d_lon));
    const int div = tape_mse(t, tape_divergence(t, pu, pv, d_lat, d_lon),
                             tape_divergence(t, tu, tv, d_lat, d_lon));
    out.mae = t.value(mae).data[0];
    out.mse = t.value(mse).data[0];
    out.adv = t.value(adv).data[0];
    out.vort = t.value(vort).data[0];
    out.div = t.value(div).data[0];
    int loss = t.leaf(Tensor32({1}, 0.0f));
    auto acc = [&](double wgt, int term) {
        if (wgt > 0) loss = t.add(loss, t.scale(term, float(wgt)));
    };
    acc(w.w_mae, mae);
    acc(w.w_mse, mse);
    acc(w.w_adv, adv);
    acc(w.w_vort, vort);
    acc(w.w_div, div);
    return loss;
}

double val_mse(const PairSet& data, const std::vector<std::size_t>& idx, ParamStore32& ps,
               const MeanForwardFn& fwd) {
    double acc = 0;
    for (std::size_t n : idx) {
        Tape<float> t;
        TapeBinding<float> b(t, ps);
        const int y = fwd(t, b, data.inputs[n]);
        const auto& yv = t.value(y);
        const auto& tv = data.targets[n];
        double m = 0;
        for (std::size_t i = 0; i < tv.data.size(); ++i) {
            const double d = double(yv.data[i]) - double(tv.data[i]);
            m += d * d;
        }
        acc += m / double(tv.data.size());
    }
    return acc / double(idx.size());
}

}  // namespace

MeanForwardFn simvp_forward_fn(const SimVPConfig& cfg) {
    return [cfg](Tape<float>& t, TapeBinding<float>& b, const Tensor32& input) {
        return simvp_forward(t, b, cfg, t.leaf(input));
    };
}

TrainLog train_mean(const PairSet& data, ParamStore32& ps, const MeanForwardFn& fwd,
                    const TrainConfig& cfg) {
    cfg.validate();
    if (data.inputs.empty()) throw ArgError("train_mean: empty dataset");
    if (data.inputs.size() != data.targets.size())
        throw StateError("train_mean: input/target count mismatch");

    // shape contract verified before the first update touches the weights
    {
        Tape<float> t;
        TapeBinding<float> b(t, ps);
        const int y = fwd(t, b, data.inputs[0]);
        if (t.value(y).shape != data.targets[0].shape)
            throw ShapeError("train_mean: model output " + shape_str(t.value(y).shape) +
                             " does not match target " + shape_str(data.targets[0].shape));
    }

    const std::size_t N = data.inputs.size();
    const std::size_t n_val = std::size_t(cfg.val_fraction * double(N));
    const std::size_t n_train = N - n_val;
    if (n_train == 0) throw ArgError("train_mean: validation split leaves no training pairs");
    std::vector<std::size_t> train_idx(n_train), vidx;
    std::iota(train_idx.begin(), train_idx.end(), 0);
    for (std::size_t i = n_train; i < N; ++i) vidx.push_back(i);
    if (vidx.empty()) vidx = train_idx;

    const double d_lat = data.fine_meta.d_lat, d_lon = data.fine_meta.d_lon;
    std::mt19937_64 rng(cfg.seed);
    TrainLog log;
    log.best_val_mse = std::numeric_limits<double>::infinity();
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::shuffle(train_idx.begin(), train_idx.end(), rng);
        for (std::size_t start = 0; start < n_train; start += cfg.batch) {
            const std::size_t stop = std::min(n_train, start + cfg.batch);
            const double inv = 1.0 / double(stop - start);
            ps.zero_grad();
            TrainStepLog step;
            step.epoch = std::size_t(epoch);
            for (std::size_t k = start; k < stop; ++k) {
                const std::size_t n = train_idx[k];
                Tape<float> t;
                TapeBinding<float> b(t, ps);
                const int y = fwd(t, b, data.inputs[n]);
                SampleLoss sl;
                const int loss =
                    sample_loss_node(t, y, data.targets[n], cfg.weights, d_lat, d_lon, sl);
                t.backward(t.scale(loss, float(inv)));
                b.collect();
                step.mae += sl.mae * inv;
                step.mse += sl.mse * inv;
                step.advection += sl.adv * inv;
                step.vorticity += sl.vort * inv;
                step.divergence += sl.div * inv;
            }
            step.total = cfg.weights.w_mae * step.mae + cfg.weights.w_mse * step.mse +
                         cfg.weights.w_adv * step.advection +
                         cfg.weights.w_vort * step.vorticity +
                         cfg.weights.w_div * step.divergence;
            if (!std::isfinite(step.total))
                throw NumericError("train_mean: non-finite loss at epoch " +
                                   std::to_string(epoch) + " step " +
                                   std::to_string(log.steps.size()));
            ps.adam_step(cfg.lr);
            log.steps.push_back(step);
        }
        log.val_mse.push_back(val_mse(data, vidx, ps, fwd));
        if (log.val_mse.back() < log.best_val_mse) {
            log.best_val_mse = log.val_mse.back();
            log.best_epoch = std::size_t(epoch);
            if (!cfg.checkpoint_path.empty()) write_wts1(ps, cfg.checkpoint_path);
        }
        log.epoch_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return log;
}

FieldSequence predict_mean(ParamStore32& ps, const SimVPConfig& mcfg, const FieldSequence& coarse) {
    coarse.validate();
    if (coarse.channels() != mcfg.c_in)
        throw ShapeError("predict_mean: sequence has " + std::to_string(coarse.channels()) +
                         " channels, model expects " + std::to_string(mcfg.c_in));
    const std::size_t T = coarse.steps();
    if (T < mcfg.t_in)
        throw ArgError("predict_mean: sequence of " + std::to_string(T) +
                       " steps is shorter than the input window " + std::to_string(mcfg.t_in));
    const std::size_t h = coarse.meta.n_lat, w = coarse.meta.n_lon;
    const std::size_t f = std::size_t(mcfg.factor);
    FieldSequence out;
    out.meta = coarse.meta;
    out.meta.n_lat = h * f;
    out.meta.n_lon = w * f;
    out.meta.d_lat /= double(f);
    out.meta.d_lon /= double(f);
    out.meta.channel_names = {"u", "v"};
    const std::size_t n_win = T - mcfg.t_in + 1;
    out.data = Tensor32({n_win, 2, h * f, w * f});
    Tensor32 window({mcfg.t_in, mcfg.c_in, h, w});
    for (std::size_t t0 = 0; t0 < n_win; ++t0) {
        for (std::size_t k = 0; k < mcfg.t_in; ++k)
            for (std::size_t c = 0; c < mcfg.c_in; ++c)
                for (std::size_t i = 0; i < h; ++i)
                    for (std::size_t j = 0; j < w; ++j)
                        window.at4(k, c, i, j) = coarse.data.at4(t0 + k, c, i, j);
        Tape<float> t;
        TapeBinding<float> b(t, ps);
        const int y = simvp_forward(t, b, mcfg, t.leaf(window));
        const auto& yv = t.value(y);
        if (!yv.all_finite())
            throw NumericError("predict_mean: non-finite prediction at window " +
                               std::to_string(t0));
        for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t i = 0; i < h * f; ++i)
                for (std::size_t j = 0; j < w * f; ++j)
                    out.data.at4(t0, c, i, j) = yv.at3(c, i, j);
    }
    return out;
}

void write_train_log_csv(const TrainLog& log, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw FormatError("cannot open '" + path + "' for writing");
    os << "epoch,step,mae,mse,advection,vorticity,divergence,total\n";
    char buf[256];
    for (std::size_t i = 0; i < log.steps.size(); ++i) {
        const auto& s = log.steps[i];
        std::snprintf(buf, sizeof buf, "%zu,%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", s.epoch, i,
                      s.mae, s.mse, s.advection, s.vorticity, s.divergence, s.total);
        os << buf;
    }
}

void write_epoch_log_csv(const TrainLog& log, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw FormatError("cannot open '" + path + "' for writing");
    os << "epoch,wall_seconds,val_mse\n";
    char buf[128];
    for (std::size_t e = 0; e < log.epoch_seconds.size(); ++e) {
        std::snprintf(buf, sizeof buf, "%zu,%.6f,%.9g\n", e, log.epoch_seconds[e],
                      log.val_mse[e]);
        os << buf;
    }
}

}  // namespace windscale
