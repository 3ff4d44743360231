#ifndef WINDSCALE_FIELD_HPP
#define WINDSCALE_FIELD_HPP

#include <algorithm>
#include <string>
#include <vector>

#include "windscale/tensor.hpp"

namespace windscale {

/// Grid metadata in dimensionless model units. The mapping to physical
/// degrees/hours lives in documentation, not in code.
struct GridMeta {
    std::size_t n_lat = 0;
    std::size_t n_lon = 0;
    double d_lat = 1.0;
    double d_lon = 1.0;
    double dt = 1.0;
    std::vector<std::string> channel_names;

    void validate() const {
        if (n_lat < 4 || n_lon < 4) throw ArgError("GridMeta: n_lat/n_lon must be >= 4");
        if (d_lat <= 0 || d_lon <= 0 || dt <= 0)
            throw ArgError("GridMeta: spacings and dt must be positive");
        for (std::size_t i = 0; i < channel_names.size(); ++i)
            for (std::size_t j = i + 1; j < channel_names.size(); ++j)
                if (channel_names[i] == channel_names[j])
                    throw ArgError("GridMeta: duplicate channel name '" + channel_names[i] + "'");
    }

    int channel_index(const std::string& name) const {
        for (std::size_t i = 0; i < channel_names.size(); ++i)
            if (channel_names[i] == name) return static_cast<int>(i);
        return -1;
    }
};

/// Time-ordered stack of gridded channels, data layout [T, C, n_lat, n_lon].
struct FieldSequence {
    GridMeta meta;
    Tensor32 data;  // [T, C, n_lat, n_lon]

    std::size_t steps() const { return data.shape.empty() ? 0 : data.shape[0]; }
    std::size_t channels() const { return data.rank() < 2 ? 0 : data.shape[1]; }

    void validate() const {
        meta.validate();
        if (data.rank() != 4) throw ShapeError("FieldSequence: data must be rank 4 [T,C,H,W]");
        if (data.shape[1] != meta.channel_names.size())
            throw ShapeError("FieldSequence: channel count mismatch");
        if (data.shape[2] != meta.n_lat || data.shape[3] != meta.n_lon)
            throw ShapeError("FieldSequence: grid extents mismatch");
    }

    /// [H,W] view copy of one channel at one step.
    Tensor64 frame(std::size_t t, std::size_t c) const {
        Tensor64 out({data.shape[2], data.shape[3]});
        for (std::size_t i = 0; i < data.shape[2]; ++i)
            for (std::size_t j = 0; j < data.shape[3]; ++j)
                out.at2(i, j) = data.at4(t, c, i, j);
        return out;
    }
};

/// Bilinear upsampling with periodic wrap, coarse nodes land exactly on
/// output indices i*factor.
template <typename T>
TensorT<T> upsample_bilinear(const TensorT<T>& field, int factor) {
    if (factor < 1) throw ArgError("upsample_bilinear: factor must be >= 1");
    if (field.rank() != 3) throw ShapeError("upsample_bilinear: expected [C,H,W]");
    if (factor == 1) return field;
    const std::size_t C = field.shape[0], H = field.shape[1], W = field.shape[2];
    TensorT<T> out({C, H * factor, W * factor});
    const std::size_t f = static_cast<std::size_t>(factor);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < H * f; ++y) {
            const std::size_t i0 = y / f, i1 = (i0 + 1) % H;
            const double wy = double(y % f) / double(f);
            for (std::size_t x = 0; x < W * f; ++x) {
                const std::size_t j0 = x / f, j1 = (j0 + 1) % W;
                const double wx = double(x % f) / double(f);
                const double v = (1 - wy) * (1 - wx) * field.at3(c, i0, j0) +
                                 (1 - wy) * wx * field.at3(c, i0, j1) +
                                 wy * (1 - wx) * field.at3(c, i1, j0) +
                                 wy * wx * field.at3(c, i1, j1);
                out.at3(c, y, x) = static_cast<T>(v);
            }
        }
    return out;
}

template <typename T>
TensorT<T> subsample(const TensorT<T>& field, int factor) {
    if (factor < 1) throw ArgError("subsample: factor must be >= 1");
    if (field.rank() != 3) throw ShapeError("subsample: expected [C,H,W]");
    if (factor == 1) return field;
    const std::size_t C = field.shape[0], H = field.shape[1], W = field.shape[2];
    const std::size_t f = static_cast<std::size_t>(factor);
    if (H % f != 0 || W % f != 0)
        throw ArgError("subsample: extents " + shape_str(field.shape) +
                       " not divisible by factor " + std::to_string(factor));
    TensorT<T> out({C, H / f, W / f});
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < H / f; ++i)
            for (std::size_t j = 0; j < W / f; ++j)
                out.at3(c, i, j) = field.at3(c, i * f, j * f);
    return out;
}

}  // namespace windscale

#endif
