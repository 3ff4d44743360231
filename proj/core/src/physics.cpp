#include "windscale/physics.hpp"

#include <cmath>

namespace windscale {

Tensor64 ddx(const Tensor64& f, double d_lon) {
    const std::size_t H = f.shape[0], W = f.shape[1];
    Tensor64 out({H, W});
    const double inv = 1.0 / (2.0 * d_lon);
    for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j)
            out.at2(i, j) = (f.at2(i, (j + 1) % W) - f.at2(i, (j + W - 1) % W)) * inv;
    return out;
}

Tensor64 ddy(const Tensor64& f, double d_lat) {
    const std::size_t H = f.shape[0], W = f.shape[1];
    Tensor64 out({H, W});
    const double inv = 1.0 / (2.0 * d_lat);
    for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j)
            out.at2(i, j) = (f.at2((i + 1) % H, j) - f.at2((i + H - 1) % H, j)) * inv;
    return out;
}

Tensor64 vorticity(const WindField& f) {
    f.validate();
    Tensor64 dvdx = ddx(f.v, f.d_lon);
    const Tensor64 dudy = ddy(f.u, f.d_lat);
    for (std::size_t i = 0; i < dvdx.data.size(); ++i) dvdx.data[i] -= dudy.data[i];
    return dvdx;
}

Tensor64 divergence(const WindField& f) {
    f.validate();
    Tensor64 dudx = ddx(f.u, f.d_lon);
    const Tensor64 dvdy = ddy(f.v, f.d_lat);
    for (std::size_t i = 0; i < dudx.data.size(); ++i) dudx.data[i] += dvdy.data[i];
    return dudx;
}

std::pair<Tensor64, Tensor64> advection(const WindField& f) {
    f.validate();
    const Tensor64 dudx = ddx(f.u, f.d_lon), dudy = ddy(f.u, f.d_lat);
    const Tensor64 dvdx = ddx(f.v, f.d_lon), dvdy = ddy(f.v, f.d_lat);
    Tensor64 au(f.u.shape), av(f.u.shape);
    for (std::size_t i = 0; i < au.data.size(); ++i) {
        au.data[i] = f.u.data[i] * dudx.data[i] + f.v.data[i] * dudy.data[i];
        av.data[i] = f.u.data[i] * dvdx.data[i] + f.v.data[i] * dvdy.data[i];
    }
    return {au, av};
}

namespace {

double mse(const Tensor64& a, const Tensor64& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        s += d * d;
    }
    return s / double(a.data.size());
}

double mae(const Tensor64& a, const Tensor64& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) s += std::fabs(a.data[i] - b.data[i]);
    return s / double(a.data.size());
}

}  // namespace

double physics_loss(const WindField& pred, const WindField& target, const PhysicsLossWeights& w) {
    w.validate();
    pred.validate();
    target.validate();
    if (!pred.u.same_shape(target.u)) throw ShapeError("physics_loss: shape mismatch");
    double loss = 0;
    if (w.w_mae > 0) loss += w.w_mae * 0.5 * (mae(pred.u, target.u) + mae(pred.v, target.v));
    if (w.w_mse > 0) loss += w.w_mse * 0.5 * (mse(pred.u, target.u) + mse(pred.v, target.v));
    if (w.w_adv > 0) {
        const auto [pau, pav] = advection(pred);
        const auto [tau, tav] = advection(target);
        loss += w.w_adv * 0.5 * (mse(pau, tau) + mse(pav, tav));
    }
    if (w.w_vort > 0) loss += w.w_vort * mse(vorticity(pred), vorticity(target));
    if (w.w_div > 0) loss += w.w_div * mse(divergence(pred), divergence(target));
    return loss;
}

}  // namespace windscale
