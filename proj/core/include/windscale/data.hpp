#ifndef WINDSCALE_DATA_HPP
#define WINDSCALE_DATA_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "windscale/field.hpp"
#include "windscale/spectral.hpp"

namespace windscale {

// ---------------------------------------------------------------------------
// Synthetic wind-like data, coarse/fine training pairs, synthetic biased
// coarse-model emulation and quantile-mapping bias correction.
// ---------------------------------------------------------------------------

struct SynthConfig {
    std::size_t H = 64, W = 64;
    std::size_t T_total = 64;
    double alpha = 3.0;       // target radial spectrum ~ k^-alpha
    double c_x = 1.0;         // advection speed, grid cells per step
    double c_y = 0.0;
    double forcing_amp = 0.1;  // small-scale amplitude relative to the base spectrum
    double forcing_tau = 4.0;  // decorrelation time in steps
    double d_lat = 1.0, d_lon = 1.0, dt = 1.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (H < 4 || W < 4) throw ArgError("SynthConfig: grid must be at least 4x4");
        if (T_total < 16) throw ArgError("SynthConfig: T_total must be >= 16");
        if (alpha <= 0.0) throw ArgError("SynthConfig: alpha must be > 0");
        if (forcing_amp < 0.0) throw ArgError("SynthConfig: forcing_amp must be >= 0");
        if (forcing_tau <= 0.0) throw ArgError("SynthConfig: forcing_tau must be > 0");
    }
};

/// Periodically advected random field with an Ornstein-Uhlenbeck small-scale
/// component; channels u, v, orography (orography static). Pure function of
/// the seed.
FieldSequence gen_synthetic(const SynthConfig& cfg);

/// Circular shift by (dy, dx) cells; exact roll for integer shifts, periodic
/// bilinear interpolation otherwise.
Tensor64 shift_periodic(const Tensor64& f, double dy, double dx);

/// Lowpass every frame/channel, then pick every factor-th grid node.
FieldSequence coarsen_sequence(const FieldSequence& truth, int factor, const FilterSpec& filter);

struct PairSet {
    GridMeta coarse_meta;
    GridMeta fine_meta;
    FilterSpec filter;
    int factor = 1;
    std::size_t t_in = 1;
    std::vector<Tensor32> inputs;        // [T_in, C, h, w] each
    std::vector<Tensor32> targets;       // [2, H, W] each (u, v)
    std::vector<std::size_t> t_target;   // truth step index of each target
};

/// Sliding windows of the coarsened sequence; each target is the
/// full-resolution (u, v) frame at the window's final step.
PairSet make_pairs(const FieldSequence& truth, std::size_t t_in, int factor,
                   const FilterSpec& filter);

struct BiasSpec {
    double a_u = 1.0, b_u = 0.0;
    double a_v = 1.0, b_v = 0.0;
    double tilt = 0.0;  // extra high-band damping, 0 disables
};

/// Synthetic biased coarse-model fields: affine per-channel distortion of the
/// coarse truth plus optional Gaussian spectral damping of the high band.
FieldSequence gen_biased_gcm(const FieldSequence& truth, int factor, const FilterSpec& filter,
                             const BiasSpec& bias);

/// Per-cell, per-channel piecewise-linear quantile transform at Q levels with
/// linear tail extrapolation. u and v are mapped independently.
struct QuantileMap {
    std::size_t Q = 101;
    std::size_t C = 0, H = 0, W = 0;
    std::vector<std::string> channel_names;
    std::vector<float> src;  // [C,H,W,Q] source quantiles, non-decreasing per cell
    std::vector<float> tgt;  // [C,H,W,Q] target quantiles, non-decreasing per cell

    std::size_t cell_offset(std::size_t c, std::size_t i, std::size_t j) const {
        return ((c * H + i) * W + j) * Q;
    }
    void validate() const;
};

QuantileMap qmap_fit(const FieldSequence& source, const FieldSequence& target, std::size_t Q);
FieldSequence qmap_apply(const QuantileMap& map, const FieldSequence& seq);

/// Scalar transform at one cell; exposed for testing.
double qmap_transform(const QuantileMap& map, std::size_t c, std::size_t i, std::size_t j,
                      double x);

// QMP1 file: magic "QMP1", u32 Q, u32 C, u32 H, u32 W, u32 joined channel
// name length + names separated by '\n', then per channel/cell Q source and
// Q target quantiles as f32.
void write_qmp1(const QuantileMap& map, const std::string& path);
QuantileMap read_qmp1(const std::string& path);

/// Two-sample Kolmogorov-Smirnov distance.
double ks_distance(std::vector<double> a, std::vector<double> b);

}  // namespace windscale

#endif
