#include <chrono>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "windscale/diag.hpp"
#include "windscale/diff_model.hpp"
#include "windscale/grd1.hpp"
#include "windscale/mean_model.hpp"
#include "windscale/model_config.hpp"

using namespace windscale;
using nlohmann::json;

namespace {

// exit codes: 0 ok, 2 missing upstream artifact, 3 config violation,
// 4 numeric failure
struct MissingInput : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void need_file(const std::string& path) {
    if (!std::filesystem::exists(path)) throw MissingInput(path);
}

std::string dir_of(const std::string& path) {
    const auto p = std::filesystem::path(path).parent_path();
    return p.empty() ? std::string(".") : p.string();
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    return member_seed(base, stream);
}

// ---------------------------------------------------------------------------
// Run configuration: one JSON document, strict schema, defaults materialized
// back out as a resolved copy next to the artifacts.
// ---------------------------------------------------------------------------

struct PairSpec {
    std::size_t t_in = 4;
    int factor = 4;
    std::string filter = "spectral";
    double cutoff = 8.0;
    int levels = 2;

    FilterSpec to_filter() const {
        FilterSpec f;
        if (filter == "spectral") {
            f.kind = FilterKind::SpectralCutoff;
            f.k_c = cutoff;
        } else if (filter == "wavelet") {
            f.kind = FilterKind::LiftingWavelet;
            f.levels = levels;
        } else {
            throw ArgError("pairs.filter must be 'spectral' or 'wavelet'");
        }
        return f;
    }
};

struct SamplerSpec {
    int n_steps = 18;
    std::size_t members = 1;
    bool stochastic = false;
    double churn = 0.0;
};

struct DiagSpec {
    std::vector<std::pair<std::size_t, std::size_t>> points;
    std::size_t pdf_bins = 64;
    double storm_tau_frac = 0.4;  // threshold as a fraction of max |vorticity|
    std::size_t storm_a_min = 2;
    std::size_t storm_p_min = 2;
    double storm_r_max = 2.0;
};

struct BenchSpec {
    std::vector<int> steps = {9, 18};
    std::vector<std::size_t> members = {1};
    std::size_t frames = 2;
};

struct RunConfig {
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    std::string output_dir = "run";
    SynthConfig synth;
    PairSpec pairs;
    SimVPConfig mean_model;
    TrainConfig mean_train;
    DenoiserConfig diff_correction;
    DenoiserConfig diff_end2end;
    DiffTrainConfig diff_train;
    std::size_t synth_t_val = 0;  // held-out sequence length; 0 skips it
    int end2end_epochs = 0;              // 0 inherits diff_train.epochs
    std::size_t end2end_steps_per_epoch = 0;
    SamplerSpec sampler;
    BiasSpec bias;
    std::size_t bias_levels = 101;
    DiagSpec diagnostics;
    BenchSpec bench;
};

SynthConfig synth_from_json(const json& j) {
    strict_keys(j,
                {"H", "W", "T_total", "T_val", "alpha", "c_x", "c_y", "forcing_amp",
                 "forcing_tau", "d_lat", "d_lon", "dt"},
                "synth");
    SynthConfig c;
    c.H = j.value("H", c.H);
    c.W = j.value("W", c.W);
    c.T_total = j.value("T_total", c.T_total);
    c.alpha = j.value("alpha", c.alpha);
    c.c_x = j.value("c_x", c.c_x);
    c.c_y = j.value("c_y", c.c_y);
    c.forcing_amp = j.value("forcing_amp", c.forcing_amp);
    c.forcing_tau = j.value("forcing_tau", c.forcing_tau);
    c.d_lat = j.value("d_lat", c.d_lat);
    c.d_lon = j.value("d_lon", c.d_lon);
    c.dt = j.value("dt", c.dt);
    c.validate();
    return c;
}

json synth_to_json(const SynthConfig& c) {
    return {{"H", c.H},
            {"W", c.W},
            {"T_total", c.T_total},
            {"alpha", c.alpha},
            {"c_x", c.c_x},
            {"c_y", c.c_y},
            {"forcing_amp", c.forcing_amp},
            {"forcing_tau", c.forcing_tau},
            {"d_lat", c.d_lat},
            {"d_lon", c.d_lon},
            {"dt", c.dt}};
}

RunConfig config_from_json(const json& j) {
    strict_keys(j,
                {"seed", "threads", "output_dir", "synth", "pairs", "mean_train", "diff_train",
                 "sampler", "bias", "diagnostics", "bench"},
                "run config");
    RunConfig c;
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
    c.output_dir = j.value("output_dir", c.output_dir);
    if (j.contains("synth")) {
        c.synth = synth_from_json(j.at("synth"));
        c.synth_t_val = j.at("synth").value("T_val", c.synth_t_val);
    }
    if (j.contains("pairs")) {
        const auto& p = j.at("pairs");
        strict_keys(p, {"t_in", "factor", "filter", "cutoff", "levels"}, "pairs");
        c.pairs.t_in = p.value("t_in", c.pairs.t_in);
        c.pairs.factor = p.value("factor", c.pairs.factor);
        c.pairs.filter = p.value("filter", c.pairs.filter);
        c.pairs.cutoff = p.value("cutoff", c.pairs.cutoff);
        c.pairs.levels = p.value("levels", c.pairs.levels);
        c.pairs.to_filter();
    }
    if (j.contains("mean_train")) {
        const auto& m = j.at("mean_train");
        strict_keys(m, {"epochs", "batch", "lr", "val_fraction", "weights", "model"},
                    "mean_train");
        c.mean_train.epochs = m.value("epochs", c.mean_train.epochs);
        c.mean_train.batch = m.value("batch", c.mean_train.batch);
        c.mean_train.lr = m.value("lr", c.mean_train.lr);
        c.mean_train.val_fraction = m.value("val_fraction", c.mean_train.val_fraction);
        if (m.contains("weights")) {
            const auto& w = m.at("weights");
            strict_keys(w, {"mae", "mse", "advection", "vorticity", "divergence"},
                        "mean_train.weights");
            c.mean_train.weights.w_mae = w.value("mae", c.mean_train.weights.w_mae);
            c.mean_train.weights.w_mse = w.value("mse", c.mean_train.weights.w_mse);
            c.mean_train.weights.w_adv = w.value("advection", c.mean_train.weights.w_adv);
            c.mean_train.weights.w_vort = w.value("vorticity", c.mean_train.weights.w_vort);
            c.mean_train.weights.w_div = w.value("divergence", c.mean_train.weights.w_div);
        }
        if (m.contains("model")) c.mean_model = simvp_from_json(m.at("model"));
        c.mean_train.validate();
    }
    if (j.contains("diff_train")) {
        const auto& d = j.at("diff_train");
        strict_keys(d,
                    {"epochs", "batch", "lr", "sigma_data", "steps_per_epoch", "correction",
                     "end2end", "end2end_epochs", "end2end_steps_per_epoch"},
                    "diff_train");
        c.end2end_epochs = d.value("end2end_epochs", c.end2end_epochs);
        c.end2end_steps_per_epoch =
            d.value("end2end_steps_per_epoch", c.end2end_steps_per_epoch);
        c.diff_train.epochs = d.value("epochs", c.diff_train.epochs);
        c.diff_train.batch = d.value("batch", c.diff_train.batch);
        c.diff_train.lr = d.value("lr", c.diff_train.lr);
        c.diff_train.sigma_data = d.value("sigma_data", 0.0);  // 0 selects the data estimate
        c.diff_train.steps_per_epoch = d.value("steps_per_epoch", c.diff_train.steps_per_epoch);
        if (d.contains("correction")) c.diff_correction = denoiser_from_json(d.at("correction"));
        if (d.contains("end2end")) c.diff_end2end = denoiser_from_json(d.at("end2end"));
    }
    if (j.contains("sampler")) {
        const auto& s = j.at("sampler");
        strict_keys(s, {"n_steps", "members", "stochastic", "churn"}, "sampler");
        c.sampler.n_steps = s.value("n_steps", c.sampler.n_steps);
        c.sampler.members = s.value("members", c.sampler.members);
        c.sampler.stochastic = s.value("stochastic", c.sampler.stochastic);
        c.sampler.churn = s.value("churn", c.sampler.churn);
    }
    if (j.contains("bias")) {
        const auto& b = j.at("bias");
        strict_keys(b, {"levels", "a_u", "b_u", "a_v", "b_v", "tilt"}, "bias");
        c.bias_levels = b.value("levels", c.bias_levels);
        c.bias.a_u = b.value("a_u", c.bias.a_u);
        c.bias.b_u = b.value("b_u", c.bias.b_u);
        c.bias.a_v = b.value("a_v", c.bias.a_v);
        c.bias.b_v = b.value("b_v", c.bias.b_v);
        c.bias.tilt = b.value("tilt", c.bias.tilt);
    }
    if (j.contains("diagnostics")) {
        const auto& g = j.at("diagnostics");
        strict_keys(g, {"points", "pdf_bins", "storm_tau_frac", "storm_a_min", "storm_p_min",
                        "storm_r_max"},
                    "diagnostics");
        if (g.contains("points"))
            for (const auto& p : g.at("points"))
                c.diagnostics.points.emplace_back(p.at(0).get<std::size_t>(),
                                                  p.at(1).get<std::size_t>());
        c.diagnostics.pdf_bins = g.value("pdf_bins", c.diagnostics.pdf_bins);
        c.diagnostics.storm_tau_frac = g.value("storm_tau_frac", c.diagnostics.storm_tau_frac);
        c.diagnostics.storm_a_min = g.value("storm_a_min", c.diagnostics.storm_a_min);
        c.diagnostics.storm_p_min = g.value("storm_p_min", c.diagnostics.storm_p_min);
        c.diagnostics.storm_r_max = g.value("storm_r_max", c.diagnostics.storm_r_max);
    }
    if (j.contains("bench")) {
        const auto& b = j.at("bench");
        strict_keys(b, {"steps", "members", "frames"}, "bench");
        if (b.contains("steps")) c.bench.steps = b.at("steps").get<std::vector<int>>();
        if (b.contains("members"))
            c.bench.members = b.at("members").get<std::vector<std::size_t>>();
        c.bench.frames = b.value("frames", c.bench.frames);
    }
    return c;
}

json config_to_json(const RunConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["threads"] = c.threads;
    j["output_dir"] = c.output_dir;
    j["synth"] = synth_to_json(c.synth);
    j["synth"]["T_val"] = c.synth_t_val;
    j["pairs"] = {{"t_in", c.pairs.t_in},
                  {"factor", c.pairs.factor},
                  {"filter", c.pairs.filter},
                  {"cutoff", c.pairs.cutoff},
                  {"levels", c.pairs.levels}};
    j["mean_train"] = {{"epochs", c.mean_train.epochs},
                       {"batch", c.mean_train.batch},
                       {"lr", c.mean_train.lr},
                       {"val_fraction", c.mean_train.val_fraction},
                       {"weights",
                        {{"mae", c.mean_train.weights.w_mae},
                         {"mse", c.mean_train.weights.w_mse},
                         {"advection", c.mean_train.weights.w_adv},
                         {"vorticity", c.mean_train.weights.w_vort},
                         {"divergence", c.mean_train.weights.w_div}}},
                       {"model", to_json(c.mean_model)}};
    j["diff_train"] = {{"epochs", c.diff_train.epochs},
                       {"batch", c.diff_train.batch},
                       {"lr", c.diff_train.lr},
                       {"sigma_data", c.diff_train.sigma_data},
                       {"steps_per_epoch", c.diff_train.steps_per_epoch},
                       {"end2end_epochs", c.end2end_epochs},
                       {"end2end_steps_per_epoch", c.end2end_steps_per_epoch},
                       {"correction", to_json(c.diff_correction)},
                       {"end2end", to_json(c.diff_end2end)}};
    j["sampler"] = {{"n_steps", c.sampler.n_steps},
                    {"members", c.sampler.members},
                    {"stochastic", c.sampler.stochastic},
                    {"churn", c.sampler.churn}};
    j["bias"] = {{"levels", c.bias_levels}, {"a_u", c.bias.a_u},  {"b_u", c.bias.b_u},
                 {"a_v", c.bias.a_v},       {"b_v", c.bias.b_v},  {"tilt", c.bias.tilt}};
    json pts = json::array();
    for (auto [i, jj] : c.diagnostics.points) pts.push_back({i, jj});
    j["diagnostics"] = {{"points", pts},
                        {"pdf_bins", c.diagnostics.pdf_bins},
                        {"storm_tau_frac", c.diagnostics.storm_tau_frac},
                        {"storm_a_min", c.diagnostics.storm_a_min},
                        {"storm_p_min", c.diagnostics.storm_p_min},
                        {"storm_r_max", c.diagnostics.storm_r_max}};
    j["bench"] = {{"steps", c.bench.steps},
                  {"members", c.bench.members},
                  {"frames", c.bench.frames}};
    return j;
}

RunConfig load_config(const std::string& path) {
    need_file(path);
    return config_from_json(load_json(path));
}

void emit_resolved(const RunConfig& cfg) {
    std::filesystem::create_directories(cfg.output_dir);
    save_json(config_to_json(cfg), cfg.output_dir + "/resolved_config.json");
}

// ---------------------------------------------------------------------------
// Shared pipeline pieces
// ---------------------------------------------------------------------------

FieldSequence load_truth(const RunConfig& cfg) {
    const std::string path = cfg.output_dir + "/truth.grd";
    need_file(path);
    return read_grd1(path);
}

PairSpec load_pair_spec(const std::string& dir) {
    const std::string path = dir + "/pairs.json";
    need_file(path);
    const json j = load_json(path);
    strict_keys(j, {"t_in", "factor", "filter", "cutoff", "levels"}, "pairs.json");
    PairSpec p;
    p.t_in = j.value("t_in", p.t_in);
    p.factor = j.value("factor", p.factor);
    p.filter = j.value("filter", p.filter);
    p.cutoff = j.value("cutoff", p.cutoff);
    p.levels = j.value("levels", p.levels);
    p.to_filter();
    return p;
}

void save_pair_spec(const PairSpec& p, const std::string& dir) {
    save_json(json{{"t_in", p.t_in},
                   {"factor", p.factor},
                   {"filter", p.filter},
                   {"cutoff", p.cutoff},
                   {"levels", p.levels}},
              dir + "/pairs.json");
}

/// No-grad forward of the mean model on one input window.
Tensor32 mean_forward_value(ParamStore32& ps, const SimVPConfig& mcfg, const Tensor32& window) {
    Tape<float> t;
    TapeBinding<float> b(t, ps);
    const int y = simvp_forward(t, b, mcfg, t.leaf(window));
    return t.value(y);
}

/// Bilinear upsampling of the (u, v) channels of the window's last frame.
Tensor32 upsampled_coarse_frame(const Tensor32& window, int factor) {
    const std::size_t t_last = window.shape[0] - 1;
    const std::size_t h = window.shape[2], w = window.shape[3];
    Tensor32 uv({2, h, w});
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) uv.at3(c, i, j) = window.at4(t_last, c, i, j);
    return upsample_bilinear(uv, factor);
}

struct DiffSidecar {
    DenoiserConfig model;
    std::string mode;
    double sigma_data = 1.0;
    NoiseSchedule schedule;
};

void save_diff_sidecar(const DiffSidecar& s, const std::string& path) {
    save_json(json{{"model", to_json(s.model)},
                   {"mode", s.mode},
                   {"sigma_data", s.sigma_data},
                   {"schedule",
                    {{"sigma_min", s.schedule.sigma_min},
                     {"sigma_max", s.schedule.sigma_max},
                     {"rho", s.schedule.rho}}}},
              path);
}

DiffSidecar load_diff_sidecar(const std::string& path) {
    need_file(path);
    const json j = load_json(path);
    strict_keys(j, {"model", "mode", "sigma_data", "schedule"}, "denoiser sidecar");
    DiffSidecar s;
    s.model = denoiser_from_json(j.at("model"));
    s.mode = j.at("mode").get<std::string>();
    s.sigma_data = j.at("sigma_data").get<double>();
    const auto& sc = j.at("schedule");
    s.schedule.sigma_min = sc.at("sigma_min").get<double>();
    s.schedule.sigma_max = sc.at("sigma_max").get<double>();
    s.schedule.rho = sc.at("rho").get<double>();
    return s;
}

FieldSequence add_sequences(const FieldSequence& a, const FieldSequence& b) {
    if (a.data.shape != b.data.shape) throw ShapeError("sample: sequence shape mismatch");
    FieldSequence out = a;
    for (std::size_t i = 0; i < out.data.data.size(); ++i) out.data.data[i] += b.data.data[i];
    return out;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

FieldSequence slice_steps(const FieldSequence& seq, std::size_t t0, std::size_t n) {
    FieldSequence out;
    out.meta = seq.meta;
    const std::size_t C = seq.channels(), H = seq.meta.n_lat, W = seq.meta.n_lon;
    out.data = Tensor32({n, C, H, W});
    const std::size_t frame = C * H * W;
    std::copy(seq.data.data.begin() + std::ptrdiff_t(t0 * frame),
              seq.data.data.begin() + std::ptrdiff_t((t0 + n) * frame), out.data.data.begin());
    return out;
}

int cmd_gen_data(const std::string& config_path, const std::string& out_override) {
    RunConfig cfg = load_config(config_path);
    if (!out_override.empty()) cfg.output_dir = out_override;
    emit_resolved(cfg);
    SynthConfig sc = cfg.synth;
    sc.seed = derive_seed(cfg.seed, 1);
    // the validation split is a held-out tail of the same realization: the
    // advected base field keeps its large-scale amplitudes for the whole run,
    // so an independently seeded sequence would be a different climate
    sc.T_total += cfg.synth_t_val;
    const FieldSequence full = gen_synthetic(sc);
    const FieldSequence truth = cfg.synth_t_val > 0
                                    ? slice_steps(full, 0, cfg.synth.T_total)
                                    : full;
    write_grd1(truth, cfg.output_dir + "/truth.grd");
    const FieldSequence gcm =
        gen_biased_gcm(truth, cfg.pairs.factor, cfg.pairs.to_filter(), cfg.bias);
    write_grd1(gcm, cfg.output_dir + "/gcm.grd");
    if (cfg.synth_t_val > 0)
        write_grd1(slice_steps(full, cfg.synth.T_total, cfg.synth_t_val),
                   cfg.output_dir + "/truth_val.grd");
    std::printf("wrote %s/truth.grd (%zu steps) and gcm.grd\n", cfg.output_dir.c_str(),
                truth.steps());
    return 0;
}

int cmd_make_pairs(const std::string& truth_path, std::size_t t_in, int factor,
                   const std::string& filter, double cutoff) {
    need_file(truth_path);
    PairSpec spec;
    spec.t_in = t_in;
    spec.factor = factor;
    spec.filter = filter;
    spec.cutoff = cutoff;
    spec.levels = std::max(1, int(cutoff));
    const FieldSequence truth = read_grd1(truth_path);
    const FieldSequence coarse = coarsen_sequence(truth, factor, spec.to_filter());
    // window construction is deterministic from truth + spec, so the pair
    // artifact stores the coarse sequence and the recipe rather than windows
    const std::string dir = dir_of(truth_path);
    write_grd1(coarse, dir + "/coarse.grd");
    save_pair_spec(spec, dir);
    if (std::filesystem::exists(dir + "/truth_val.grd")) {
        const FieldSequence val = read_grd1(dir + "/truth_val.grd");
        write_grd1(coarsen_sequence(val, factor, spec.to_filter()), dir + "/coarse_val.grd");
    }
    std::printf("wrote %s/coarse.grd and pairs.json (%zu windows)\n", dir.c_str(),
                truth.steps() - t_in + 1);
    return 0;
}

int cmd_train_mean(const std::string& config_path) {
    RunConfig cfg = load_config(config_path);
    emit_resolved(cfg);
    const FieldSequence truth = load_truth(cfg);
    const PairSpec spec = load_pair_spec(cfg.output_dir);
    const PairSet pairs = make_pairs(truth, spec.t_in, spec.factor, spec.to_filter());
    SimVPConfig mcfg = cfg.mean_model;
    if (mcfg.t_in != spec.t_in || mcfg.factor != spec.factor)
        throw ArgError("mean model window/factor disagrees with pairs.json");
    if (mcfg.c_in != truth.channels())
        throw ArgError("mean model c_in disagrees with the truth channel count");
    ParamStore32 ps;
    std::mt19937_64 rng(derive_seed(cfg.seed, 2));
    simvp_init(ps, mcfg, rng);
    std::printf("mean model: %zu parameters, %zu windows\n", ps.count_trainable(),
                pairs.inputs.size());
    TrainConfig tc = cfg.mean_train;
    tc.seed = derive_seed(cfg.seed, 3);
    tc.checkpoint_path = cfg.output_dir + "/mean_model.wts1";
    const TrainLog log = train_mean(pairs, ps, simvp_forward_fn(mcfg), tc);
    save_json(to_json(mcfg), cfg.output_dir + "/mean_model.json");
    write_train_log_csv(log, cfg.output_dir + "/train_log.csv");
    write_epoch_log_csv(log, cfg.output_dir + "/epochs.csv");
    std::printf("best val mse %.6g at epoch %zu\n", log.best_val_mse, log.best_epoch);
    return 0;
}

int cmd_train_diff(const std::string& config_path, const std::string& mode) {
    if (mode != "correction" && mode != "end2end")
        throw ArgError("--mode must be correction or end2end");
    RunConfig cfg = load_config(config_path);
    emit_resolved(cfg);
    const FieldSequence truth = load_truth(cfg);
    const PairSpec spec = load_pair_spec(cfg.output_dir);
    const PairSet pairs = make_pairs(truth, spec.t_in, spec.factor, spec.to_filter());

    std::vector<Tensor32> targets, conds;
    targets.reserve(pairs.inputs.size());
    conds.reserve(pairs.inputs.size());
    if (mode == "correction") {
        need_file(cfg.output_dir + "/mean_model.wts1");
        need_file(cfg.output_dir + "/mean_model.json");
        const SimVPConfig mcfg = simvp_from_json(load_json(cfg.output_dir + "/mean_model.json"));
        ParamStore32 mps = read_wts1(cfg.output_dir + "/mean_model.wts1");
        for (std::size_t n = 0; n < pairs.inputs.size(); ++n) {
            Tensor32 mean = mean_forward_value(mps, mcfg, pairs.inputs[n]);
            Tensor32 residual = pairs.targets[n];
            for (std::size_t i = 0; i < residual.data.size(); ++i)
                residual.data[i] -= mean.data[i];
            targets.push_back(std::move(residual));
            conds.push_back(std::move(mean));
        }
    } else {
        for (std::size_t n = 0; n < pairs.inputs.size(); ++n) {
            targets.push_back(pairs.targets[n]);
            conds.push_back(upsampled_coarse_frame(pairs.inputs[n], spec.factor));
        }
    }

    const DenoiserConfig dcfg = mode == "correction" ? cfg.diff_correction : cfg.diff_end2end;
    DiffTrainConfig tc = cfg.diff_train;
    if (mode == "end2end") {
        if (cfg.end2end_epochs > 0) tc.epochs = cfg.end2end_epochs;
        if (cfg.end2end_steps_per_epoch > 0) tc.steps_per_epoch = cfg.end2end_steps_per_epoch;
    }
    if (tc.sigma_data <= 0.0) tc.sigma_data = frames_std(targets);
    tc.seed = derive_seed(cfg.seed, mode == "correction" ? 4 : 5);
    tc.checkpoint_path = cfg.output_dir + "/diff_" + mode + ".wts1";
    ParamStore32 ps;
    std::mt19937_64 rng(derive_seed(cfg.seed, 6));
    denoiser_init(ps, dcfg, rng);
    std::printf("%s denoiser: %zu parameters, sigma_data %.4g, %zu frames\n", mode.c_str(),
                ps.count_trainable(), tc.sigma_data, targets.size());
    const DiffTrainLog log = train_denoiser(targets, conds, ps, dcfg, tc);

    DiffSidecar side;
    side.model = dcfg;
    side.mode = mode;
    side.sigma_data = tc.sigma_data;
    // EDM ladder scaled so its span tracks the data scale
    side.schedule.sigma_min = 0.002 * (tc.sigma_data / 0.5);
    side.schedule.sigma_max = 80.0 * (tc.sigma_data / 0.5);
    save_diff_sidecar(side, cfg.output_dir + "/diff_" + mode + ".json");
    write_diff_log_csv(log, cfg.output_dir + "/diff_train_" + mode + ".csv");
    write_diff_epoch_csv(log, cfg.output_dir + "/diff_epochs_" + mode + ".csv");
    if (!log.steps.empty())
        std::printf("final batch loss %.6g\n", log.steps.back().loss);
    return 0;
}

int cmd_bias_correct(const std::string& source, const std::string& target,
                     const std::string& out, std::size_t levels) {
    need_file(source);
    need_file(target);
    const FieldSequence src = read_grd1(source);
    const FieldSequence tgt = read_grd1(target);
    const QuantileMap map = qmap_fit(src, tgt, levels);
    const FieldSequence corrected = qmap_apply(map, src);
    write_grd1(corrected, out);
    write_qmp1(map, out + ".qmp1");
    std::printf("wrote %s and %s.qmp1\n", out.c_str(), out.c_str());
    return 0;
}

int cmd_sample(const std::string& mean_ckpt, const std::string& diff_ckpt,
               const std::string& input, std::size_t members, int steps, std::uint64_t seed,
               std::size_t threads) {
    need_file(mean_ckpt);
    need_file(diff_ckpt);
    need_file(input);
    const std::string mean_json = std::filesystem::path(mean_ckpt).replace_extension(".json");
    const std::string diff_json = std::filesystem::path(diff_ckpt).replace_extension(".json");
    need_file(mean_json);
    const SimVPConfig mcfg = simvp_from_json(load_json(mean_json));
    ParamStore32 mps = read_wts1(mean_ckpt);
    const DiffSidecar side = load_diff_sidecar(diff_json);
    ParamStore32 dps = read_wts1(diff_ckpt);

    const FieldSequence coarse = read_grd1(input);
    const FieldSequence mean_seq = predict_mean(mps, mcfg, coarse);

    FieldSequence cond;
    if (side.mode == "correction") {
        cond = mean_seq;
    } else {
        // upsampled coarse (u, v) aligned with the window-final steps
        cond = mean_seq;
        const std::size_t offset = mcfg.t_in - 1;
        for (std::size_t t = 0; t < cond.steps(); ++t) {
            Tensor32 uv({2, coarse.meta.n_lat, coarse.meta.n_lon});
            for (std::size_t c = 0; c < 2; ++c)
                for (std::size_t i = 0; i < coarse.meta.n_lat; ++i)
                    for (std::size_t j = 0; j < coarse.meta.n_lon; ++j)
                        uv.at3(c, i, j) = coarse.data.at4(t + offset, c, i, j);
            const Tensor32 up = upsample_bilinear(uv, mcfg.factor);
            for (std::size_t c = 0; c < 2; ++c)
                for (std::size_t i = 0; i < cond.meta.n_lat; ++i)
                    for (std::size_t j = 0; j < cond.meta.n_lon; ++j)
                        cond.data.at4(t, c, i, j) = up.at3(c, i, j);
        }
    }

    Preconditioner prec;
    prec.sigma_data = side.sigma_data;
    NoiseSchedule sched = side.schedule;
    sched.n_steps = steps;
    sched.validate();
    const std::string out_dir = dir_of(diff_ckpt);
    for (std::size_t m = 0; m < members; ++m) {
        const FieldSequence draw =
            sample_fields(dps, side.model, prec, sched, cond, seed, m, threads);
        const FieldSequence result =
            side.mode == "correction" ? add_sequences(mean_seq, draw) : draw;
        const std::string name =
            m == 0 ? "samples.grd" : "samples_" + std::to_string(m) + ".grd";
        write_grd1(result, out_dir + "/" + name);
    }
    std::printf("wrote %zu member file(s) under %s\n", members, out_dir.c_str());
    return 0;
}

std::vector<std::pair<std::size_t, std::size_t>> parse_points(const std::string& text) {
    std::vector<std::pair<std::size_t, std::size_t>> pts;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find(';', pos);
        if (end == std::string::npos) end = text.size();
        const std::string item = text.substr(pos, end - pos);
        const std::size_t comma = item.find(',');
        if (comma == std::string::npos) throw ArgError("--points expects \"i,j;i,j\"");
        pts.emplace_back(std::size_t(std::stoul(item.substr(0, comma))),
                         std::size_t(std::stoul(item.substr(comma + 1))));
        pos = end + 1;
    }
    return pts;
}

int cmd_diagnose(const std::string& pred_path, const std::string& truth_path,
                 const std::string& points, const std::string& out_dir) {
    need_file(pred_path);
    need_file(truth_path);
    FieldSequence pred = read_grd1(pred_path);
    FieldSequence truth = read_grd1(truth_path);

    // align on the trailing steps both sequences share
    const std::size_t T = std::min(pred.steps(), truth.steps());
    if (T == 0) throw ArgError("diagnose: empty sequence");
    auto tail = [T](FieldSequence& s) {
        if (s.steps() == T) return;
        const std::size_t skip = s.steps() - T;
        Tensor32 cut({T, s.channels(), s.meta.n_lat, s.meta.n_lon});
        std::copy(s.data.data.begin() + long(skip * s.channels() * s.meta.n_lat * s.meta.n_lon),
                  s.data.data.end(), cut.data.begin());
        s.data = std::move(cut);
    };
    tail(pred);
    tail(truth);

    // band split at the pair-construction cutoff when the recipe is on disk
    const std::size_t nyq = std::min(truth.meta.n_lat, truth.meta.n_lon) / 2;
    std::size_t k_c = nyq / 2;
    const std::string spec_path = dir_of(truth_path) + "/pairs.json";
    if (std::filesystem::exists(spec_path)) {
        const PairSpec spec = load_pair_spec(dir_of(truth_path));
        if (spec.filter == "spectral") k_c = std::size_t(spec.cutoff);
    }
    k_c = std::min(std::max<std::size_t>(1, k_c), nyq - 1);
    const std::vector<std::pair<std::size_t, std::size_t>> bands = {{1, k_c}, {k_c + 1, nyq}};

    StormParams storm;
    double zmax = 0;
    for (std::size_t t = 0; t < truth.steps(); ++t) {
        WindField f;
        f.u = truth.frame(t, std::size_t(truth.meta.channel_index("u")));
        f.v = truth.frame(t, std::size_t(truth.meta.channel_index("v")));
        f.d_lat = truth.meta.d_lat;
        f.d_lon = truth.meta.d_lon;
        const auto z = vorticity(f);
        for (double v : z.data) zmax = std::max(zmax, std::fabs(v));
    }
    storm.tau = std::max(1e-12, 0.4 * zmax);
    storm.a_min = 2;
    storm.p_min = 2;
    storm.r_max = 2.0;

    const auto card = spectral_scorecard(pred, truth, parse_points(points), bands, storm);
    emit_report(card, out_dir);
    std::printf("report in %s (high band distance %.6g%s)\n", out_dir.c_str(),
                card.bands[1].distance, card.bands[1].underrepresents ? ", underrepresents" : "");
    return 0;
}

int cmd_bench(const std::string& config_path) {
    RunConfig cfg = load_config(config_path);
    emit_resolved(cfg);
    const std::size_t H = cfg.synth.H, W = cfg.synth.W;
    for (const std::string mode : {"correction", "end2end"}) {
        const std::string ckpt = cfg.output_dir + "/diff_" + mode + ".wts1";
        need_file(ckpt);
        const DiffSidecar side = load_diff_sidecar(cfg.output_dir + "/diff_" + mode + ".json");
        ParamStore32 ps = read_wts1(ckpt);
        FieldSequence cond;
        cond.meta.n_lat = H;
        cond.meta.n_lon = W;
        cond.meta.channel_names = {"u", "v"};
        cond.data = Tensor32({cfg.bench.frames, 2, H, W});
        std::mt19937_64 rng(derive_seed(cfg.seed, 7));
        std::normal_distribution<float> dist;
        for (auto& v : cond.data.data) v = dist(rng);
        Preconditioner prec;
        prec.sigma_data = side.sigma_data;

        std::ofstream os(cfg.output_dir + "/bench_" + mode + ".csv", std::ios::trunc);
        if (!os) throw FormatError("cannot open bench CSV for writing");
        os << "n_steps,n_members,wall_seconds,fields_per_second\n";
        for (int n_steps : cfg.bench.steps)
            for (std::size_t members : cfg.bench.members) {
                NoiseSchedule sched = side.schedule;
                sched.n_steps = n_steps;
                const auto t0 = std::chrono::steady_clock::now();
                for (std::size_t m = 0; m < members; ++m)
                    sample_fields(ps, side.model, prec, sched, cond, cfg.seed, m, cfg.threads);
                const double wall =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                        .count();
                const double fields = double(cfg.bench.frames * members);
                char buf[128];
                std::snprintf(buf, sizeof buf, "%d,%zu,%.6f,%.6g\n", n_steps, members, wall,
                              fields / wall);
                os << buf;
            }
        std::printf("wrote %s/bench_%s.csv (%zu parameters)\n", cfg.output_dir.c_str(),
                    mode.c_str(), ps.count_trainable());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"two-stage wind-field downscaling pipeline"};
    app.require_subcommand(1);

    std::string config_path, out_dir, truth_path, filter = "spectral";
    std::string source, target, out_file, mean_ckpt, diff_ckpt, input, pred_path, points, mode;
    std::size_t t_in = 4, members = 1, levels = 101, threads = 1;
    int factor = 4, steps = 18;
    double cutoff = 8.0;
    std::uint64_t seed = 0;
    app.add_option("--threads", threads, "global worker-thread cap");

    auto* gen = app.add_subcommand("gen-data", "generate the synthetic truth and biased GCM");
    gen->add_option("--config", config_path, "run config JSON")->required();
    gen->add_option("--out", out_dir, "output directory override");

    auto* mp = app.add_subcommand("make-pairs", "coarsen the truth and record the pair recipe");
    mp->add_option("--truth", truth_path, "truth GRD1 file")->required();
    mp->add_option("--t-in", t_in, "input window length");
    mp->add_option("--factor", factor, "downscaling factor");
    mp->add_option("--filter", filter, "spectral|wavelet");
    mp->add_option("--cutoff", cutoff, "cutoff wavenumber (or wavelet levels)");

    auto* tm = app.add_subcommand("train-mean", "train the deterministic mean model");
    tm->add_option("--config", config_path, "run config JSON")->required();

    auto* td = app.add_subcommand("train-diff", "train the correction denoiser");
    td->add_option("--config", config_path, "run config JSON")->required();
    td->add_option("--mode", mode, "correction|end2end")->required();

    auto* bc = app.add_subcommand("bias-correct", "quantile-map a sequence onto a target");
    bc->add_option("--source", source, "source GRD1")->required();
    bc->add_option("--target", target, "target GRD1")->required();
    bc->add_option("--out", out_file, "corrected GRD1 path")->required();
    bc->add_option("--levels", levels, "quantile levels");

    auto* sm = app.add_subcommand("sample", "run the two-stage sampler");
    sm->add_option("--mean-ckpt", mean_ckpt, "mean model WTS1")->required();
    sm->add_option("--diff-ckpt", diff_ckpt, "denoiser WTS1")->required();
    sm->add_option("--input", input, "coarse GRD1 input")->required();
    sm->add_option("--members", members, "ensemble members");
    sm->add_option("--steps", steps, "reverse-diffusion steps");
    sm->add_option("--seed", seed, "sampling seed");

    auto* dg = app.add_subcommand("diagnose", "score a prediction against truth");
    dg->add_option("--pred", pred_path, "prediction GRD1")->required();
    dg->add_option("--truth", truth_path, "truth GRD1")->required();
    dg->add_option("--points", points, "temporal-spectrum locations \"i,j;i,j\"");
    dg->add_option("--out", out_dir, "report directory")->required();

    auto* bn = app.add_subcommand("bench", "time the sampler across step/member grids");
    bn->add_option("--config", config_path, "run config JSON")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 3;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(config_path, out_dir);
        if (mp->parsed()) return cmd_make_pairs(truth_path, t_in, factor, filter, cutoff);
        if (tm->parsed()) return cmd_train_mean(config_path);
        if (td->parsed()) return cmd_train_diff(config_path, mode);
        if (bc->parsed()) return cmd_bias_correct(source, target, out_file, levels);
        if (sm->parsed()) return cmd_sample(mean_ckpt, diff_ckpt, input, members, steps, seed,
                                            threads);
        if (dg->parsed()) return cmd_diagnose(pred_path, truth_path, points, out_dir);
        if (bn->parsed()) return cmd_bench(config_path);
    } catch (const MissingInput& e) {
        std::fprintf(stderr, "error: missing-input: %s\n", e.what());
        return 2;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "error: numeric: %s\n", e.what());
        return 4;
    } catch (const json::exception& e) {
        std::fprintf(stderr, "error: config: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: config: %s\n", e.what());
        return 3;
    }
    return 0;
}
