#ifndef WINDSCALE_PHYSICS_HPP
#define WINDSCALE_PHYSICS_HPP

#include <utility>

#include "windscale/tape.hpp"
#include "windscale/tensor.hpp"

namespace windscale {

/// One wind snapshot on a periodic planar grid, model units.
struct WindField {
    Tensor64 u;  // [H,W]
    Tensor64 v;  // [H,W]
    double d_lat = 1.0;
    double d_lon = 1.0;

    void validate() const {
        if (u.rank() != 2 || !u.same_shape(v)) throw ShapeError("WindField: u/v shape mismatch");
        if (u.shape[0] < 4 || u.shape[1] < 4) throw ShapeError("WindField: grid too small");
        if (d_lat <= 0 || d_lon <= 0) throw ArgError("WindField: spacing must be positive");
    }
};

struct PhysicsLossWeights {
    double w_mae = 1.0;
    double w_mse = 1.0;
    double w_adv = 0.1;
    double w_vort = 0.1;
    double w_div = 0.1;

    void validate() const {
        if (w_mae < 0 || w_mse < 0 || w_adv < 0 || w_vort < 0 || w_div < 0)
            throw ArgError("PhysicsLossWeights: weights must be non-negative");
        if (w_mae + w_mse + w_adv + w_vort + w_div == 0)
            throw ArgError("PhysicsLossWeights: at least one weight must be positive");
    }
};

// Second-order central differences, periodic boundaries. y axis = rows
// (spacing d_lat), x axis = columns (spacing d_lon).
Tensor64 ddx(const Tensor64& f, double d_lon);
Tensor64 ddy(const Tensor64& f, double d_lat);

/// zeta = dv/dx - du/dy
Tensor64 vorticity(const WindField& f);
/// du/dx + dv/dy
Tensor64 divergence(const WindField& f);
/// (u d/dx + v d/dy) applied to u and to v
std::pair<Tensor64, Tensor64> advection(const WindField& f);

/// Non-differentiable reference value of the training loss.
double physics_loss(const WindField& pred, const WindField& target, const PhysicsLossWeights& w);

// Tape-composed counterparts used by the trainers: central differences are
// built from roll ops so the whole loss differentiates through the engine.
template <typename T>
int tape_ddx(Tape<T>& tape, int f, double d_lon) {
    return tape.scale(tape.sub(tape.roll(f, 1, -1), tape.roll(f, 1, 1)), T(1.0 / (2.0 * d_lon)));
}

template <typename T>
int tape_ddy(Tape<T>& tape, int f, double d_lat) {
    return tape.scale(tape.sub(tape.roll(f, 0, -1), tape.roll(f, 0, 1)), T(1.0 / (2.0 * d_lat)));
}

template <typename T>
int tape_vorticity(Tape<T>& tape, int u, int v, double d_lat, double d_lon) {
    return tape.sub(tape_ddx(tape, v, d_lon), tape_ddy(tape, u, d_lat));
}

template <typename T>
int tape_divergence(Tape<T>& tape, int u, int v, double d_lat, double d_lon) {
    return tape.add(tape_ddx(tape, u, d_lon), tape_ddy(tape, v, d_lat));
}

template <typename T>
std::pair<int, int> tape_advection(Tape<T>& tape, int u, int v, double d_lat, double d_lon) {
    const int au = tape.add(tape.mul(u, tape_ddx(tape, u, d_lon)),
                            tape.mul(v, tape_ddy(tape, u, d_lat)));
    const int av = tape.add(tape.mul(u, tape_ddx(tape, v, d_lon)),
                            tape.mul(v, tape_ddy(tape, v, d_lat)));
    return {au, av};
}

template <typename T>
int tape_mse(Tape<T>& tape, int a, int b) {
    const int d = tape.sub(a, b);
    return tape.mean(tape.mul(d, d));
}

template <typename T>
int tape_mae(Tape<T>& tape, int a, int b) {
    return tape.mean(tape.abs(tape.sub(a, b)));
}

/// Weighted MAE + MSE + physics-consistency terms, comparing the operator of
/// the prediction to the operator of the target. pu/pv/tu/tv are [H,W] nodes.
template <typename T>
int tape_physics_loss(Tape<T>& tape, int pu, int pv, int tu, int tv,
                      const PhysicsLossWeights& w, double d_lat, double d_lon) {
    w.validate();
    int loss = tape.leaf(TensorT<T>({1}, T(0)));
    auto acc = [&](double wgt, int term) {
        if (wgt > 0) loss = tape.add(loss, tape.scale(term, T(wgt)));
    };
    acc(w.w_mae, tape.scale(tape.add(tape_mae(tape, pu, tu), tape_mae(tape, pv, tv)), T(0.5)));
    acc(w.w_mse, tape.scale(tape.add(tape_mse(tape, pu, tu), tape_mse(tape, pv, tv)), T(0.5)));
    if (w.w_adv > 0) {
        auto [pau, pav] = tape_advection(tape, pu, pv, d_lat, d_lon);
        auto [tau_, tav] = tape_advection(tape, tu, tv, d_lat, d_lon);
        acc(w.w_adv,
            tape.scale(tape.add(tape_mse(tape, pau, tau_), tape_mse(tape, pav, tav)), T(0.5)));
    }
    if (w.w_vort > 0)
        acc(w.w_vort, tape_mse(tape, tape_vorticity(tape, pu, pv, d_lat, d_lon),
                               tape_vorticity(tape, tu, tv, d_lat, d_lon)));
    if (w.w_div > 0)
        acc(w.w_div, tape_mse(tape, tape_divergence(tape, pu, pv, d_lat, d_lon),
                              tape_divergence(tape, tu, tv, d_lat, d_lon)));
    return loss;
}

}  // namespace windscale

#endif
