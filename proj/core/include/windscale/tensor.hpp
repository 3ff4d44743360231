#ifndef WINDSCALE_TENSOR_HPP
#define WINDSCALE_TENSOR_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace windscale {

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ArgError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct StateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Dense row-major N-d array. The one numeric carrier shared by every module.
template <typename T>
struct TensorT {
    std::vector<std::size_t> shape;
    std::vector<T> data;

    TensorT() = default;
    TensorT(std::vector<std::size_t> s, T fill = T(0)) : shape(std::move(s)) {
        std::size_t n = 1;
        for (std::size_t e : shape) {
            if (e == 0) throw ShapeError("tensor extent must be positive");
            n *= e;
        }
        data.assign(n, fill);
    }

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }

    // 2-d / 3-d / 4-d indexers for the common layouts [H,W], [C,H,W], [T,C,H,W]
    T& at2(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    T at2(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
    T& at3(std::size_t c, std::size_t i, std::size_t j) {
        return data[(c * shape[1] + i) * shape[2] + j];
    }
    T at3(std::size_t c, std::size_t i, std::size_t j) const {
        return data[(c * shape[1] + i) * shape[2] + j];
    }
    T& at4(std::size_t t, std::size_t c, std::size_t i, std::size_t j) {
        return data[((t * shape[1] + c) * shape[2] + i) * shape[3] + j];
    }
    T at4(std::size_t t, std::size_t c, std::size_t i, std::size_t j) const {
        return data[((t * shape[1] + c) * shape[2] + i) * shape[3] + j];
    }

    bool same_shape(const TensorT& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <typename U>
    TensorT<U> cast() const {
        TensorT<U> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

using Tensor32 = TensorT<float>;
using Tensor64 = TensorT<double>;

template <typename T>
TensorT<T> make_field(const std::vector<std::size_t>& shape, T fill) {
    for (std::size_t e : shape)
        if (e == 0) throw ShapeError("make_field: zero extent");
    return TensorT<T>(shape, fill);
}

inline std::string shape_str(const std::vector<std::size_t>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

}  // namespace windscale

#endif
