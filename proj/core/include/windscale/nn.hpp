#ifndef WINDSCALE_NN_HPP
#define WINDSCALE_NN_HPP

#include <random>
#include <string>

#include "windscale/params.hpp"
#include "windscale/tape.hpp"

namespace windscale {

// ---------------------------------------------------------------------------
// parameter registration + forward helpers. Models are (config, prefix)
// pairs over a ParamStore; forwards are templated so the same definitions run
// in f32 for training and f64 for finite-difference verification.
// ---------------------------------------------------------------------------

template <typename T>
void add_conv(ParamStoreT<T>& ps, const std::string& p, std::size_t cout, std::size_t cin,
              std::size_t k, std::mt19937_64& rng, bool zero_init = false) {
    if (zero_init)
        ps.add(p + ".w", TensorT<T>({cout, cin, k, k}, T(0)));
    else
        ps.add(p + ".w", he_conv_init<T>(cout, cin, k, rng));
    ps.add(p + ".b", TensorT<T>({cout}, T(0)));
}

template <typename T>
int conv(Tape<T>& t, TapeBinding<T>& b, const std::string& p, int x) {
    return t.conv2d(x, b.node(p + ".w"), b.node(p + ".b"));
}

template <typename T>
void add_gn(ParamStoreT<T>& ps, const std::string& p, std::size_t c) {
    ps.add(p + ".gamma", TensorT<T>({c}, T(1)));
    ps.add(p + ".beta", TensorT<T>({c}, T(0)));
}

template <typename T>
int gn(Tape<T>& t, TapeBinding<T>& b, const std::string& p, int x, int groups) {
    return t.groupnorm(x, b.node(p + ".gamma"), b.node(p + ".beta"), groups);
}

template <typename T>
void add_linear(ParamStoreT<T>& ps, const std::string& p, std::size_t out, std::size_t in,
                std::mt19937_64& rng, double bias = 0.0) {
    ps.add(p + ".w", randn_tensor<T>({out, in}, rng, std::sqrt(2.0 / double(in))));
    ps.add(p + ".b", TensorT<T>({out, 1}, T(bias)));
}

/// y = W x + b on a column vector node [in,1] -> [out,1]
template <typename T>
int linear(Tape<T>& t, TapeBinding<T>& b, const std::string& p, int x) {
    return t.add(t.matmul(b.node(p + ".w"), x), b.node(p + ".b"));
}

// ---------------------------------------------------------------------------
// TAU / CAU attention blocks
// ---------------------------------------------------------------------------

/// Statical attention: depthwise conv, dilated depthwise conv, pointwise 1x1.
/// Dynamical attention: global average pool into a two-layer bottleneck with
/// sigmoid-bounded per-channel weights. Output = (SA(x) * DA) * x.
struct TAUConfig {
    std::size_t channels = 0;
    std::size_t cond_channels = 0;  // > 0 turns the block into a CAU
    int kernel = 3;
    int dilation = 2;
    int bottleneck = 4;  // DA hidden size = max(1, channels / bottleneck)

    std::size_t hidden() const {
        return std::max<std::size_t>(1, channels / std::size_t(bottleneck));
    }
};

template <typename T>
void tau_init(ParamStoreT<T>& ps, const std::string& p, const TAUConfig& cfg, std::mt19937_64& rng,
              bool identity = false) {
    const std::size_t C = cfg.channels, k = std::size_t(cfg.kernel);
    const double dw_std = std::sqrt(2.0 / double(k * k));
    ps.add(p + ".sa_dw.w", identity ? TensorT<T>({C, k, k}, T(0))
                                    : randn_tensor<T>({C, k, k}, rng, dw_std));
    ps.add(p + ".sa_dw.b", TensorT<T>({C}, T(0)));
    ps.add(p + ".sa_dd.w", identity ? TensorT<T>({C, k, k}, T(0))
                                    : randn_tensor<T>({C, k, k}, rng, dw_std));
    ps.add(p + ".sa_dd.b", TensorT<T>({C}, T(0)));
    add_conv(ps, p + ".sa_pw", C, C, 1, rng, identity);
    // SA starts at 1 so the block opens near the identity
    for (auto& v : ps.value(p + ".sa_pw.b").data) v = T(1);
    const std::size_t h = cfg.hidden(), cin = C + cfg.cond_channels;
    add_linear(ps, p + ".da_fc1", h, cin, rng);
    if (identity) {
        ps.add(p + ".da_fc2.w", TensorT<T>({C, h}, T(0)));
        // sigmoid(40) rounds to exactly 1 in both f32 and f64
        ps.add(p + ".da_fc2.b", TensorT<T>({C, 1}, T(40)));
    } else {
        add_linear(ps, p + ".da_fc2", C, h, rng, 2.0);
    }
    if (identity) {
        for (auto& v : ps.value(p + ".da_fc1.w").data) v = T(0);
        // identity mode also needs a dead depthwise path: SA = pw(bias) = 1
    }
}

/// cond < 0 means plain TAU; otherwise the DA pools over concat(x, cond).
template <typename T>
int tau_forward(Tape<T>& t, TapeBinding<T>& b, const std::string& p, const TAUConfig& cfg, int x,
                int cond = -1) {
    const auto& xs = t.value(x);
    if (xs.rank() != 3 || xs.shape[0] != cfg.channels)
        throw ShapeError("tau_forward: expected [" + std::to_string(cfg.channels) + ",H,W], got " +
                         shape_str(xs.shape));
    if (cfg.cond_channels > 0 && cond < 0)
        throw ArgError("tau_forward: CAU block requires a conditioning input");
    int sa = t.dwconv2d(x, b.node(p + ".sa_dw.w"), b.node(p + ".sa_dw.b"), 1);
    sa = t.dwconv2d(sa, b.node(p + ".sa_dd.w"), b.node(p + ".sa_dd.b"), cfg.dilation);
    sa = conv(t, b, p + ".sa_pw", sa);
    const int da_in = cfg.cond_channels > 0 ? t.concat_ch(x, cond) : x;
    int da = t.reshape(t.global_avg_pool(da_in), {cfg.channels + cfg.cond_channels, 1});
    da = t.silu(linear(t, b, p + ".da_fc1", da));
    da = t.sigmoid(linear(t, b, p + ".da_fc2", da));
    const int att = t.chan_scale(sa, t.reshape(da, {cfg.channels}));
    return t.mul(att, x);
}

// ---------------------------------------------------------------------------
// SimVP mean model: shared per-frame spatial encoder, TAU translator on the
// time-stacked channel volume, spatial decoder up to target resolution.
// ---------------------------------------------------------------------------

struct SimVPConfig {
    std::size_t t_in = 4;
    std::size_t c_in = 3;   // u, v, orography
    std::size_t c_out = 2;  // u, v
    int factor = 4;         // power of two
    std::size_t enc_width = 24;
    int enc_depth = 1;  // avgpool levels inside the encoder
    std::size_t lat_width = 48;
    int tau_blocks = 4;
    int tau_kernel = 3;
    int tau_dilation = 2;
    int tau_bottleneck = 4;
    std::size_t dec_width = 24;
    int gn_groups = 4;

    std::size_t translator_channels() const { return t_in * lat_width; }

    TAUConfig tau() const {
        TAUConfig c;
        c.channels = translator_channels();
        c.kernel = tau_kernel;
        c.dilation = tau_dilation;
        c.bottleneck = tau_bottleneck;
        return c;
    }

    void validate() const {
        if (t_in < 1 || c_in < 1 || c_out < 1) throw ArgError("SimVPConfig: bad extents");
        if (factor < 1 || (factor & (factor - 1)))
            throw ArgError("SimVPConfig: factor must be a power of two");
        if (enc_depth < 0 || tau_blocks < 1) throw ArgError("SimVPConfig: bad depths");
    }
};

template <typename T>
void simvp_init(ParamStoreT<T>& ps, const SimVPConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    add_conv(ps, "enc.stem", cfg.enc_width, cfg.c_in, 3, rng);
    add_gn(ps, "enc.stem.gn", cfg.enc_width);
    std::size_t w = cfg.enc_width;
    for (int l = 0; l < cfg.enc_depth; ++l) {
        const std::size_t wn = (l == cfg.enc_depth - 1) ? cfg.lat_width : w * 2;
        add_conv(ps, "enc.down" + std::to_string(l), wn, w, 3, rng);
        add_gn(ps, "enc.down" + std::to_string(l) + ".gn", wn);
        w = wn;
    }
    if (cfg.enc_depth == 0) {
        add_conv(ps, "enc.proj", cfg.lat_width, w, 3, rng);
        add_gn(ps, "enc.proj.gn", cfg.lat_width);
    }
    for (int i = 0; i < cfg.tau_blocks; ++i) {
        const std::string p = "tr" + std::to_string(i);
        tau_init(ps, p + ".tau", cfg.tau(), rng);
        add_conv(ps, p + ".mix", cfg.translator_channels(), cfg.translator_channels(), 1, rng);
        add_gn(ps, p + ".gn", cfg.translator_channels());
    }
    add_conv(ps, "dec.fuse", cfg.lat_width, cfg.translator_channels(), 1, rng);
    add_gn(ps, "dec.fuse.gn", cfg.lat_width);
    w = cfg.lat_width;
    for (int l = 0; l < cfg.enc_depth; ++l) {
        add_conv(ps, "dec.up" + std::to_string(l), cfg.dec_width, w, 3, rng);
        add_gn(ps, "dec.up" + std::to_string(l) + ".gn", cfg.dec_width);
        w = cfg.dec_width;
    }
    add_conv(ps, "dec.skip", cfg.dec_width, w + cfg.enc_width, 3, rng);
    add_gn(ps, "dec.skip.gn", cfg.dec_width);
    int ups = 0;
    for (int f = cfg.factor; f > 1; f /= 2) ++ups;
    for (int l = 0; l < ups; ++l) {
        add_conv(ps, "dec.sr" + std::to_string(l), cfg.dec_width, cfg.dec_width, 3, rng);
        add_gn(ps, "dec.sr" + std::to_string(l) + ".gn", cfg.dec_width);
    }
    add_conv(ps, "dec.out", cfg.c_out, cfg.dec_width, 3, rng, /*zero_init=*/true);
}

/// seq: [T, C, h, w] -> [c_out, h*factor, w*factor]
template <typename T>
int simvp_forward(Tape<T>& t, TapeBinding<T>& b, const SimVPConfig& cfg, int seq) {
    const auto& s = t.value(seq);
    if (s.rank() != 4 || s.shape[0] != cfg.t_in || s.shape[1] != cfg.c_in)
        throw ShapeError("simvp_forward: expected [" + std::to_string(cfg.t_in) + "," +
                         std::to_string(cfg.c_in) + ",h,w], got " + shape_str(s.shape));
    const std::size_t h = s.shape[2], w = s.shape[3];
    const int G = cfg.gn_groups;
    std::vector<int> latents;
    int last_stem = -1;
    const int flat = t.reshape(seq, {cfg.t_in * cfg.c_in, h, w});
    for (std::size_t f = 0; f < cfg.t_in; ++f) {
        int x = t.slice_ch(flat, f * cfg.c_in, (f + 1) * cfg.c_in);
        x = t.silu(gn(t, b, "enc.stem.gn", conv(t, b, "enc.stem", x), G));
        if (f == cfg.t_in - 1) last_stem = x;
        for (int l = 0; l < cfg.enc_depth; ++l)
            x = t.silu(gn(t, b, "enc.down" + std::to_string(l) + ".gn",
                          conv(t, b, "enc.down" + std::to_string(l), t.avgpool2(x)), G));
        if (cfg.enc_depth == 0)
            x = t.silu(gn(t, b, "enc.proj.gn", conv(t, b, "enc.proj", x), G));
        latents.push_back(x);
    }
    int z = latents[0];
    for (std::size_t f = 1; f < latents.size(); ++f) z = t.concat_ch(z, latents[f]);
    const TAUConfig tc = cfg.tau();
    for (int i = 0; i < cfg.tau_blocks; ++i) {
        const std::string p = "tr" + std::to_string(i);
        int y = tau_forward(t, b, p + ".tau", tc, z);
        y = t.silu(gn(t, b, p + ".gn", conv(t, b, p + ".mix", y), G));
        z = t.add(z, y);
    }
    int d = t.silu(gn(t, b, "dec.fuse.gn", conv(t, b, "dec.fuse", z), G));
    for (int l = 0; l < cfg.enc_depth; ++l)
        d = t.silu(gn(t, b, "dec.up" + std::to_string(l) + ".gn",
                      conv(t, b, "dec.up" + std::to_string(l), t.upsample2(d)), G));
    d = t.silu(gn(t, b, "dec.skip.gn", conv(t, b, "dec.skip", t.concat_ch(d, last_stem)), G));
    for (int f = cfg.factor, l = 0; f > 1; f /= 2, ++l)
        d = t.silu(gn(t, b, "dec.sr" + std::to_string(l) + ".gn",
                      conv(t, b, "dec.sr" + std::to_string(l), t.upsample2(d)), G));
    return conv(t, b, "dec.out", d);
}

// ---------------------------------------------------------------------------
// Correction denoiser: residual dense UNet backbone, CAU conditioning on the
// mean-model output, noise-level embedding via per-channel scale/shift.
// ---------------------------------------------------------------------------

struct DenoiserConfig {
    std::size_t c_res = 2;   // residual channels (network in/out)
    std::size_t c_cond = 2;  // conditioning channels
    std::size_t width = 16;
    int depth = 2;  // UNet levels below the top
    std::size_t emb = 16;
    int gn_groups = 4;
    std::size_t rdb_growth = 8;
    int cau_bottleneck = 4;

    TAUConfig cau() const {
        TAUConfig c;
        c.channels = width;
        c.cond_channels = width;
        c.bottleneck = cau_bottleneck;
        return c;
    }

    void validate() const {
        if (c_res < 1 || c_cond < 1 || width < 2) throw ArgError("DenoiserConfig: bad extents");
        if (depth < 0) throw ArgError("DenoiserConfig: bad depth");
    }
};

namespace detail {

template <typename T>
void rdb_init(ParamStoreT<T>& ps, const std::string& p, std::size_t c, std::size_t g,
              std::mt19937_64& rng) {
    add_conv(ps, p + ".c1", g, c, 3, rng);
    add_conv(ps, p + ".c2", g, c + g, 3, rng);
    add_conv(ps, p + ".c3", c, c + 2 * g, 3, rng);
}

/// Densely connected 3-conv group with local residual scaling 0.2.
template <typename T>
int rdb_forward(Tape<T>& t, TapeBinding<T>& b, const std::string& p, int x) {
    const int f1 = t.silu(conv(t, b, p + ".c1", x));
    const int f2 = t.silu(conv(t, b, p + ".c2", t.concat_ch(x, f1)));
    const int f3 = conv(t, b, p + ".c3", t.concat_ch(t.concat_ch(x, f1), f2));
    return t.add(x, t.scale(f3, T(0.2)));
}

}  // namespace detail

template <typename T>
void denoiser_init(ParamStoreT<T>& ps, const DenoiserConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    const std::size_t w = cfg.width;
    add_conv(ps, "x_stem", w, cfg.c_res, 3, rng);
    add_conv(ps, "cond_stem", w, cfg.c_cond, 3, rng);
    add_gn(ps, "cond_stem.gn", w);
    tau_init(ps, "cau", cfg.cau(), rng);
    add_conv(ps, "merge", w, 2 * w, 3, rng);
    add_gn(ps, "merge.gn", w);
    add_linear(ps, "emb_fc1", cfg.emb, 1, rng);
    add_linear(ps, "emb_fc2", 2 * w, cfg.emb, rng);
    detail::rdb_init(ps, "top_rdb", w, cfg.rdb_growth, rng);
    std::size_t cw = w;
    for (int l = 0; l < cfg.depth; ++l) {
        const std::size_t wn = 2 * w;  // widen once, keep lower levels equal
        add_conv(ps, "down" + std::to_string(l), wn, cw, 3, rng);
        add_gn(ps, "down" + std::to_string(l) + ".gn", wn);
        detail::rdb_init(ps, "rdb" + std::to_string(l), wn, cfg.rdb_growth, rng);
        cw = wn;
    }
    for (int l = cfg.depth - 1; l >= 0; --l) {
        const std::size_t skip = l == 0 ? w : 2 * w;
        add_conv(ps, "up" + std::to_string(l), skip, cw + skip, 3, rng);
        add_gn(ps, "up" + std::to_string(l) + ".gn", skip);
        cw = skip;
    }
    detail::rdb_init(ps, "out_rdb", w, cfg.rdb_growth, rng);
    add_conv(ps, "out", cfg.c_res, w, 3, rng, /*zero_init=*/true);
}

/// Raw network output F_theta(x_in, cond, c_noise); EDM preconditioning wraps
/// this at the call site. c_noise is a plain scalar.
template <typename T>
int denoiser_forward(Tape<T>& t, TapeBinding<T>& b, const DenoiserConfig& cfg, int x_in, int cond,
                     double c_noise) {
    const auto& xs = t.value(x_in);
    const auto& cs = t.value(cond);
    if (xs.rank() != 3 || xs.shape[0] != cfg.c_res)
        throw ShapeError("denoiser_forward: bad input shape " + shape_str(xs.shape));
    if (cs.rank() != 3 || cs.shape[0] != cfg.c_cond || cs.shape[1] != xs.shape[1] ||
        cs.shape[2] != xs.shape[2])
        throw ShapeError("denoiser_forward: conditioning shape " + shape_str(cs.shape) +
                         " does not match input " + shape_str(xs.shape));
    const int G = cfg.gn_groups;
    const std::size_t w = cfg.width;
    int xf = conv(t, b, "x_stem", x_in);
    int cf = t.silu(gn(t, b, "cond_stem.gn", conv(t, b, "cond_stem", cond), G));
    xf = tau_forward(t, b, "cau", cfg.cau(), xf, cf);
    int h = t.silu(gn(t, b, "merge.gn", conv(t, b, "merge", t.concat_ch(xf, cf)), G));
    // noise embedding -> per-channel scale/shift
    int e = t.leaf(TensorT<T>({1, 1}, T(c_noise)));
    e = t.silu(linear(t, b, "emb_fc1", e));
    e = linear(t, b, "emb_fc2", e);
    const int sc = t.add_scalar(t.reshape(t.slice_ch(t.reshape(e, {2 * w, 1, 1}), 0, w), {w}),
                                T(1));
    const int sh = t.reshape(t.slice_ch(t.reshape(e, {2 * w, 1, 1}), w, 2 * w), {w});
    h = t.bias_add_chw(t.chan_scale(h, sc), sh);
    h = detail::rdb_forward(t, b, "top_rdb", h);
    std::vector<int> skips;
    for (int l = 0; l < cfg.depth; ++l) {
        skips.push_back(h);
        h = t.silu(gn(t, b, "down" + std::to_string(l) + ".gn",
                      conv(t, b, "down" + std::to_string(l), t.avgpool2(h)), G));
        h = detail::rdb_forward(t, b, "rdb" + std::to_string(l), h);
    }
    for (int l = cfg.depth - 1; l >= 0; --l) {
        h = t.concat_ch(t.upsample2(h), skips[std::size_t(l)]);
        h = t.silu(gn(t, b, "up" + std::to_string(l) + ".gn",
                      conv(t, b, "up" + std::to_string(l), h), G));
    }
    h = detail::rdb_forward(t, b, "out_rdb", h);
    return conv(t, b, "out", h);
}

}  // namespace windscale

#endif
