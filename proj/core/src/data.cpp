#include "windscale/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

namespace windscale {

namespace {

/// Gaussian random field with per-mode amplitude |k|^expo for |k| >= k_lo.
/// Normalization uses the unmasked (k_lo = 1) profile, so a band-limited
/// field sits on the same spectrum level as the full one; the full field has
/// unit variance in expectation.
Tensor64 grf(std::size_t H, std::size_t W, double expo, double k_lo, std::mt19937_64& rng) {
    Tensor64 white({H, W});
    std::normal_distribution<double> dist;
    for (auto& v : white.data) v = dist(rng);
    ComplexGrid F = dft2(white);
    double full_var = 0.0;
    for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) {
            const double ky = i <= H / 2 ? double(i) : double(i) - double(H);
            const double kx = j <= W / 2 ? double(j) : double(j) - double(W);
            const double k = std::hypot(kx, ky);
            double amp = 0.0;
            if (k >= 1.0) {
                const double a = std::pow(k, expo);
                full_var += a * a;
                if (k >= k_lo) amp = a;
            }
            F[i * W + j] *= amp;
        }
    full_var /= double(H * W);
    Tensor64 f = idft2(F, H, W);
    if (full_var > 1e-300) {
        const double inv = 1.0 / std::sqrt(full_var);
        for (auto& v : f.data) v *= inv;
    }
    return f;
}

float quantile_sorted(const std::vector<float>& x, double p) {
    const double h = p * double(x.size() - 1);
    const std::size_t lo = std::size_t(h);
    if (lo + 1 >= x.size()) return x.back();
    const double frac = h - double(lo);
    return float(double(x[lo]) + frac * (double(x[lo + 1]) - double(x[lo])));
}

void wr_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {(unsigned char)(v), (unsigned char)(v >> 8), (unsigned char)(v >> 16),
                          (unsigned char)(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t rd_u32(std::istream& is, const std::string& path, const char* what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw FormatError(path + ": truncated reading " + what);
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

}  // namespace

Tensor64 shift_periodic(const Tensor64& f, double dy, double dx) {
    if (f.rank() != 2) throw ShapeError("shift_periodic: expected [H,W]");
    const std::size_t H = f.shape[0], W = f.shape[1];
    Tensor64 out({H, W});
    const double iy = std::round(dy), ix = std::round(dx);
    if (dy == iy && dx == ix) {
        const long sy = long(iy) % long(H), sx = long(ix) % long(W);
        for (std::size_t i = 0; i < H; ++i)
            for (std::size_t j = 0; j < W; ++j) {
                const std::size_t si = std::size_t((long(i) - sy + 2 * long(H)) % long(H));
                const std::size_t sj = std::size_t((long(j) - sx + 2 * long(W)) % long(W));
                out.at2(i, j) = f.at2(si, sj);
            }
        return out;
    }
    for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) {
            // source coordinate, wrapped to [0, H) x [0, W)
            double sy = double(i) - dy, sx = double(j) - dx;
            sy -= std::floor(sy / double(H)) * double(H);
            sx -= std::floor(sx / double(W)) * double(W);
            const std::size_t i0 = std::size_t(sy) % H, j0 = std::size_t(sx) % W;
            const std::size_t i1 = (i0 + 1) % H, j1 = (j0 + 1) % W;
            const double wy = sy - std::floor(sy), wx = sx - std::floor(sx);
            out.at2(i, j) = (1 - wy) * (1 - wx) * f.at2(i0, j0) + (1 - wy) * wx * f.at2(i0, j1) +
                            wy * (1 - wx) * f.at2(i1, j0) + wy * wx * f.at2(i1, j1);
        }
    return out;
}

FieldSequence gen_synthetic(const SynthConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    const std::size_t H = cfg.H, W = cfg.W, T = cfg.T_total;
    const double expo = -(cfg.alpha + 1.0) / 2.0;
    Tensor64 base_u = grf(H, W, expo, 1.0, rng);
    Tensor64 base_v = grf(H, W, expo, 1.0, rng);
    Tensor64 oro = grf(H, W, expo - 1.0, 1.0, rng);  // steeper, smoother

    const double k_hi = std::max(2.0, double(std::min(H, W)) / 8.0);
    const double rho = std::exp(-1.0 / cfg.forcing_tau);
    const double refresh = cfg.forcing_amp * std::sqrt(1.0 - rho * rho);
    Tensor64 s_u({H, W}, 0.0), s_v({H, W}, 0.0);
    if (cfg.forcing_amp > 0.0) {
        s_u = grf(H, W, expo, k_hi, rng);
        s_v = grf(H, W, expo, k_hi, rng);
        for (auto& v : s_u.data) v *= cfg.forcing_amp;
        for (auto& v : s_v.data) v *= cfg.forcing_amp;
    }

    FieldSequence seq;
    seq.meta.n_lat = H;
    seq.meta.n_lon = W;
    seq.meta.d_lat = cfg.d_lat;
    seq.meta.d_lon = cfg.d_lon;
    seq.meta.dt = cfg.dt;
    seq.meta.channel_names = {"u", "v", "orography"};
    seq.data = Tensor32({T, 3, H, W});
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t i = 0; i < H; ++i)
            for (std::size_t j = 0; j < W; ++j) {
                seq.data.at4(t, 0, i, j) = float(base_u.at2(i, j) + s_u.at2(i, j));
                seq.data.at4(t, 1, i, j) = float(base_v.at2(i, j) + s_v.at2(i, j));
                seq.data.at4(t, 2, i, j) = float(oro.at2(i, j));
            }
        if (t + 1 == T) break;
        base_u = shift_periodic(base_u, cfg.c_y, cfg.c_x);
        base_v = shift_periodic(base_v, cfg.c_y, cfg.c_x);
        if (cfg.forcing_amp > 0.0) {
            Tensor64 fu = grf(H, W, expo, k_hi, rng);
            Tensor64 fv = grf(H, W, expo, k_hi, rng);
            s_u = shift_periodic(s_u, cfg.c_y, cfg.c_x);
            s_v = shift_periodic(s_v, cfg.c_y, cfg.c_x);
            for (std::size_t i = 0; i < s_u.data.size(); ++i) {
                s_u.data[i] = rho * s_u.data[i] + refresh * fu.data[i];
                s_v.data[i] = rho * s_v.data[i] + refresh * fv.data[i];
            }
        }
    }
    return seq;
}

FieldSequence coarsen_sequence(const FieldSequence& truth, int factor, const FilterSpec& filter) {
    truth.validate();
    filter.validate();
    if (factor < 1) throw ArgError("coarsen_sequence: factor must be >= 1");
    const std::size_t f = std::size_t(factor);
    if (truth.meta.n_lat % f != 0 || truth.meta.n_lon % f != 0)
        throw ArgError("coarsen_sequence: grid " + std::to_string(truth.meta.n_lat) + "x" +
                       std::to_string(truth.meta.n_lon) + " not divisible by factor " +
                       std::to_string(factor));
    FieldSequence out;
    out.meta = truth.meta;
    out.meta.n_lat /= f;
    out.meta.n_lon /= f;
    out.meta.d_lat *= double(f);
    out.meta.d_lon *= double(f);
    const std::size_t T = truth.steps(), C = truth.channels();
    out.data = Tensor32({T, C, out.meta.n_lat, out.meta.n_lon});
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t c = 0; c < C; ++c) {
            const Tensor64 low = lowpass(truth.frame(t, c), filter);
            for (std::size_t i = 0; i < out.meta.n_lat; ++i)
                for (std::size_t j = 0; j < out.meta.n_lon; ++j)
                    out.data.at4(t, c, i, j) = float(low.at2(i * f, j * f));
        }
    return out;
}

PairSet make_pairs(const FieldSequence& truth, std::size_t t_in, int factor,
                   const FilterSpec& filter) {
    truth.validate();
    if (t_in < 1) throw ArgError("make_pairs: t_in must be >= 1");
    if (truth.steps() < t_in)
        throw ArgError("make_pairs: sequence has " + std::to_string(truth.steps()) +
                       " steps, window needs " + std::to_string(t_in));
    if (truth.channels() < 2) throw ArgError("make_pairs: need at least u and v channels");
    const FieldSequence coarse = coarsen_sequence(truth, factor, filter);
    PairSet ps;
    ps.coarse_meta = coarse.meta;
    ps.fine_meta = truth.meta;
    ps.filter = filter;
    ps.factor = factor;
    ps.t_in = t_in;
    const std::size_t T = truth.steps(), C = truth.channels();
    const std::size_t h = coarse.meta.n_lat, w = coarse.meta.n_lon;
    const std::size_t Hf = truth.meta.n_lat, Wf = truth.meta.n_lon;
    for (std::size_t t0 = 0; t0 + t_in <= T; ++t0) {
        Tensor32 in({t_in, C, h, w});
        for (std::size_t k = 0; k < t_in; ++k)
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t i = 0; i < h; ++i)
                    for (std::size_t j = 0; j < w; ++j)
                        in.at4(k, c, i, j) = coarse.data.at4(t0 + k, c, i, j);
        const std::size_t tt = t0 + t_in - 1;
        Tensor32 tgt({2, Hf, Wf});
        for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t i = 0; i < Hf; ++i)
                for (std::size_t j = 0; j < Wf; ++j) tgt.at3(c, i, j) = truth.data.at4(tt, c, i, j);
        ps.inputs.push_back(std::move(in));
        ps.targets.push_back(std::move(tgt));
        ps.t_target.push_back(tt);
    }
    return ps;
}

FieldSequence gen_biased_gcm(const FieldSequence& truth, int factor, const FilterSpec& filter,
                             const BiasSpec& bias) {
    FieldSequence out = coarsen_sequence(truth, factor, filter);
    const int iu = out.meta.channel_index("u"), iv = out.meta.channel_index("v");
    if (iu < 0 || iv < 0) throw ArgError("gen_biased_gcm: sequence must carry u and v channels");
    const std::size_t T = out.steps(), H = out.meta.n_lat, W = out.meta.n_lon;
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t i = 0; i < H; ++i)
            for (std::size_t j = 0; j < W; ++j) {
                auto& u = out.data.at4(t, std::size_t(iu), i, j);
                auto& v = out.data.at4(t, std::size_t(iv), i, j);
                u = float(bias.a_u * double(u) + bias.b_u);
                v = float(bias.a_v * double(v) + bias.b_v);
            }
    if (bias.tilt > 0.0) {
        const double k_ny = double(std::min(H, W)) / 2.0;
        for (std::size_t t = 0; t < T; ++t)
            for (int c : {iu, iv}) {
                ComplexGrid F = dft2(out.frame(t, std::size_t(c)));
                for (std::size_t i = 0; i < H; ++i)
                    for (std::size_t j = 0; j < W; ++j) {
                        const double ky = i <= H / 2 ? double(i) : double(i) - double(H);
                        const double kx = j <= W / 2 ? double(j) : double(j) - double(W);
                        const double k = std::hypot(kx, ky);
                        F[i * W + j] *= std::exp(-bias.tilt * (k / k_ny) * (k / k_ny));
                    }
                Tensor64 damped = idft2(F, H, W);
                for (std::size_t i = 0; i < H; ++i)
                    for (std::size_t j = 0; j < W; ++j)
                        out.data.at4(t, std::size_t(c), i, j) = float(damped.at2(i, j));
            }
    }
    return out;
}

void QuantileMap::validate() const {
    if (Q < 2) throw ArgError("QuantileMap: Q must be >= 2");
    if (channel_names.size() != C) throw ShapeError("QuantileMap: channel name count mismatch");
    if (src.size() != C * H * W * Q || tgt.size() != src.size())
        throw ShapeError("QuantileMap: quantile table size mismatch");
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < H; ++i)
            for (std::size_t j = 0; j < W; ++j) {
                const std::size_t off = cell_offset(c, i, j);
                for (std::size_t q = 0; q + 1 < Q; ++q)
                    if (src[off + q] > src[off + q + 1] || tgt[off + q] > tgt[off + q + 1])
                        throw StateError("QuantileMap: non-monotone quantiles at cell (" +
                                         std::to_string(c) + "," + std::to_string(i) + "," +
                                         std::to_string(j) + ")");
            }
}

QuantileMap qmap_fit(const FieldSequence& source, const FieldSequence& target, std::size_t Q) {
    source.validate();
    target.validate();
    if (Q < 2) throw ArgError("qmap_fit: Q must be >= 2");
    if (source.meta.n_lat != target.meta.n_lat || source.meta.n_lon != target.meta.n_lon ||
        source.meta.channel_names != target.meta.channel_names)
        throw ShapeError("qmap_fit: source and target grids must match");
    QuantileMap map;
    map.Q = Q;
    map.C = source.channels();
    map.H = source.meta.n_lat;
    map.W = source.meta.n_lon;
    map.channel_names = source.meta.channel_names;
    map.src.resize(map.C * map.H * map.W * Q);
    map.tgt.resize(map.src.size());
    auto fill = [&](const FieldSequence& seq, std::vector<float>& out, const char* side) {
        const std::size_t T = seq.steps();
        if (T < Q)
            throw ArgError(std::string("qmap_fit: ") + side + " cell (0,0,0) has " +
                           std::to_string(T) + " samples, needs " + std::to_string(Q));
        std::vector<float> cell(T);
        for (std::size_t c = 0; c < map.C; ++c)
            for (std::size_t i = 0; i < map.H; ++i)
                for (std::size_t j = 0; j < map.W; ++j) {
                    for (std::size_t t = 0; t < T; ++t) cell[t] = seq.data.at4(t, c, i, j);
                    std::sort(cell.begin(), cell.end());
                    const std::size_t off = map.cell_offset(c, i, j);
                    for (std::size_t q = 0; q < Q; ++q)
                        out[off + q] = quantile_sorted(cell, double(q) / double(Q - 1));
                }
    };
    fill(source, map.src, "source");
    fill(target, map.tgt, "target");
    return map;
}

double qmap_transform(const QuantileMap& map, std::size_t c, std::size_t i, std::size_t j,
                      double x) {
    const std::size_t off = map.cell_offset(c, i, j);
    const float* s = map.src.data() + off;
    const float* t = map.tgt.data() + off;
    const std::size_t Q = map.Q;
    auto seg_slope = [&](std::size_t a, std::size_t b) {
        return s[b] > s[a] ? (double(t[b]) - double(t[a])) / (double(s[b]) - double(s[a])) : 1.0;
    };
    if (x < double(s[0])) {
        std::size_t m = 1;
        while (m + 1 < Q && s[m] <= s[0]) ++m;
        return double(t[0]) + seg_slope(0, m) * (x - double(s[0]));
    }
    if (x >= double(s[Q - 1])) {
        std::size_t m = Q - 2;
        while (m > 0 && s[m] >= s[Q - 1]) --m;
        return double(t[Q - 1]) + seg_slope(m, Q - 1) * (x - double(s[Q - 1]));
    }
    const float* it = std::upper_bound(s, s + Q, float(x));  // first strictly greater
    const std::size_t hi = std::size_t(it - s), lo = hi - 1;
    const double frac = (x - double(s[lo])) / (double(s[hi]) - double(s[lo]));
    return double(t[lo]) + frac * (double(t[hi]) - double(t[lo]));
}

FieldSequence qmap_apply(const QuantileMap& map, const FieldSequence& seq) {
    map.validate();
    seq.validate();
    if (seq.meta.n_lat != map.H || seq.meta.n_lon != map.W ||
        seq.meta.channel_names != map.channel_names)
        throw ShapeError("qmap_apply: sequence grid does not match the fitted map");
    FieldSequence out = seq;
    for (std::size_t t = 0; t < seq.steps(); ++t)
        for (std::size_t c = 0; c < map.C; ++c)
            for (std::size_t i = 0; i < map.H; ++i)
                for (std::size_t j = 0; j < map.W; ++j)
                    out.data.at4(t, c, i, j) =
                        float(qmap_transform(map, c, i, j, double(seq.data.at4(t, c, i, j))));
    return out;
}

void write_qmp1(const QuantileMap& map, const std::string& path) {
    map.validate();
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError(path + ": cannot open for writing");
    os.write("QMP1", 4);
    wr_u32(os, std::uint32_t(map.Q));
    wr_u32(os, std::uint32_t(map.C));
    wr_u32(os, std::uint32_t(map.H));
    wr_u32(os, std::uint32_t(map.W));
    std::string names;
    for (std::size_t c = 0; c < map.channel_names.size(); ++c) {
        if (c) names += '\n';
        names += map.channel_names[c];
    }
    wr_u32(os, std::uint32_t(names.size()));
    os.write(names.data(), std::streamsize(names.size()));
    os.write(reinterpret_cast<const char*>(map.src.data()),
             std::streamsize(map.src.size() * sizeof(float)));
    os.write(reinterpret_cast<const char*>(map.tgt.data()),
             std::streamsize(map.tgt.size() * sizeof(float)));
    if (!os) throw FormatError(path + ": write failed");
}

QuantileMap read_qmp1(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError(path + ": cannot open");
    char magic[4];
    if (!is.read(magic, 4) || std::string(magic, 4) != "QMP1")
        throw FormatError(path + ": bad magic at offset 0, expected QMP1");
    QuantileMap map;
    map.Q = rd_u32(is, path, "Q");
    map.C = rd_u32(is, path, "channel count");
    map.H = rd_u32(is, path, "n_lat");
    map.W = rd_u32(is, path, "n_lon");
    const std::uint32_t nlen = rd_u32(is, path, "channel name length");
    std::string names(nlen, '\0');
    if (nlen && !is.read(names.data(), nlen))
        throw FormatError(path + ": truncated reading channel names");
    map.channel_names.clear();
    if (!names.empty()) {
        std::size_t pos = 0;
        while (true) {
            const std::size_t nl = names.find('\n', pos);
            map.channel_names.push_back(names.substr(pos, nl - pos));
            if (nl == std::string::npos) break;
            pos = nl + 1;
        }
    }
    const std::size_t n = map.C * map.H * map.W * map.Q;
    map.src.resize(n);
    map.tgt.resize(n);
    if (!is.read(reinterpret_cast<char*>(map.src.data()), std::streamsize(n * sizeof(float))))
        throw FormatError(path + ": truncated reading source quantiles");
    if (!is.read(reinterpret_cast<char*>(map.tgt.data()), std::streamsize(n * sizeof(float))))
        throw FormatError(path + ": truncated reading target quantiles");
    char extra;
    if (is.read(&extra, 1)) throw FormatError(path + ": trailing bytes after quantile payload");
    map.validate();
    return map;
}

double ks_distance(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw ArgError("ks_distance: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t ia = 0, ib = 0;
    double d = 0.0;
    while (ia < a.size() && ib < b.size()) {
        const double x = std::min(a[ia], b[ib]);
        while (ia < a.size() && a[ia] == x) ++ia;
        while (ib < b.size() && b[ib] == x) ++ib;
        d = std::max(d, std::fabs(double(ia) / double(a.size()) - double(ib) / double(b.size())));
    }
    return d;
}

}  // namespace windscale
