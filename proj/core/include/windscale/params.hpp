#ifndef WINDSCALE_PARAMS_HPP
#define WINDSCALE_PARAMS_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "windscale/tape.hpp"
#include "windscale/tensor.hpp"

namespace windscale {

/// Named parameter collection plus gradients and Adam state.
/// Names starting with '_' are frozen metadata (e.g. the residual std
/// estimate stored in a checkpoint) and are excluded from the trainable
/// count and from optimizer updates.
template <typename T>
class ParamStoreT {
  public:
    struct Entry {
        TensorT<T> value;
        TensorT<T> grad;
        TensorT<T> m1, m2;  // Adam moments
    };

    bool has(const std::string& name) const { return entries_.count(name) != 0; }

    TensorT<T>& add(const std::string& name, TensorT<T> v) {
        if (has(name)) throw ArgError("ParamStore: duplicate parameter '" + name + "'");
        Entry e;
        e.grad = TensorT<T>(v.shape, T(0));
        e.m1 = TensorT<T>(v.shape, T(0));
        e.m2 = TensorT<T>(v.shape, T(0));
        e.value = std::move(v);
        order_.push_back(name);
        return entries_.emplace(name, std::move(e)).first->second.value;
    }

    TensorT<T>& value(const std::string& name) { return at(name).value; }
    const TensorT<T>& value(const std::string& name) const { return at(name).value; }
    TensorT<T>& grad(const std::string& name) { return at(name).grad; }

    const std::vector<std::string>& names() const { return order_; }

    void zero_grad() {
        for (auto& [k, e] : entries_) e.grad.data.assign(e.grad.data.size(), T(0));
    }

    std::size_t count_trainable() const {
        std::size_t n = 0;
        for (const auto& [k, e] : entries_)
            if (k[0] != '_') n += e.value.numel();
        return n;
    }

    /// Standard bias-corrected Adam. Every trainable parameter must carry a
    /// gradient (possibly zero); the step counter advances once per call.
    void adam_step(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
        ++step_;
        const double bc1 = 1.0 - std::pow(beta1, double(step_));
        const double bc2 = 1.0 - std::pow(beta2, double(step_));
        for (const auto& name : order_) {
            if (name[0] == '_') continue;
            Entry& e = entries_.at(name);
            if (!e.grad.same_shape(e.value))
                throw StateError("adam_step: missing gradient for '" + name + "'");
            for (std::size_t i = 0; i < e.value.data.size(); ++i) {
                const double g = double(e.grad.data[i]);
                e.m1.data[i] = T(beta1 * double(e.m1.data[i]) + (1 - beta1) * g);
                e.m2.data[i] = T(beta2 * double(e.m2.data[i]) + (1 - beta2) * g * g);
                const double mh = double(e.m1.data[i]) / bc1;
                const double vh = double(e.m2.data[i]) / bc2;
                e.value.data[i] -= T(lr * mh / (std::sqrt(vh) + eps));
            }
        }
    }

    std::uint64_t step() const { return step_; }

    template <typename U>
    ParamStoreT<U> cast() const {
        ParamStoreT<U> out;
        for (const auto& name : order_) out.add(name, entries_.at(name).value.template cast<U>());
        return out;
    }

  private:
    std::map<std::string, Entry> entries_;
    std::vector<std::string> order_;  // insertion order, for stable serialization
    std::uint64_t step_ = 0;

    Entry& at(const std::string& name) {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw ArgError("ParamStore: unknown parameter '" + name + "'");
        return it->second;
    }
    const Entry& at(const std::string& name) const {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw ArgError("ParamStore: unknown parameter '" + name + "'");
        return it->second;
    }
};

using ParamStore32 = ParamStoreT<float>;
using ParamStore64 = ParamStoreT<double>;

// WTS1 checkpoint: magic "WTS1", u32 count, then per parameter:
// u32 name length, UTF-8 name, u32 rank, u32 extents..., f32 payload.
void write_wts1(const ParamStore32& ps, const std::string& path);
ParamStore32 read_wts1(const std::string& path);

/// Tape helper: bind every store entry as a leaf and collect gradients after
/// backward. Usage:
///   TapeBinding<T> bind(tape, ps);
///   ... build graph via bind.node("w") ...
///   tape.backward(loss); bind.collect();
template <typename T>
class TapeBinding {
  public:
    TapeBinding(Tape<T>& tape, ParamStoreT<T>& ps) : tape_(tape), ps_(ps) {}

    int node(const std::string& name) {
        auto it = ids_.find(name);
        if (it != ids_.end()) return it->second;
        const int id = tape_.leaf(ps_.value(name), true);
        ids_[name] = id;
        return id;
    }

    void collect() {
        for (const auto& [name, id] : ids_) {
            const auto& g = tape_.grad(id);
            auto& dst = ps_.grad(name);
            for (std::size_t i = 0; i < g.data.size(); ++i) dst.data[i] += g.data[i];
        }
    }

  private:
    Tape<T>& tape_;
    ParamStoreT<T>& ps_;
    std::map<std::string, int> ids_;
};

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    bool pass = false;
};

/// Central finite differences against the analytic gradient, per parameter
/// entry. f64 only; the loss function builds a fresh graph on each call and
/// returns a scalar.
inline GradCheckReport grad_check(
    ParamStore64& ps, const std::function<double(Tape<double>&, TapeBinding<double>&)>& loss_fn,
    double tol, double eps = 1e-5) {
    GradCheckReport rep;
    ps.zero_grad();
    {
        Tape<double> tape;
        TapeBinding<double> bind(tape, ps);
        double v = loss_fn(tape, bind);
        (void)v;
        bind.collect();
    }
    for (const auto& name : ps.names()) {
        if (name[0] == '_') continue;
        auto& val = ps.value(name);
        for (std::size_t i = 0; i < val.data.size(); ++i) {
            const double orig = val.data[i];
            val.data[i] = orig + eps;
            double fp, fm;
            {
                Tape<double> tape;
                TapeBinding<double> bind(tape, ps);
                fp = loss_fn(tape, bind);
            }
            val.data[i] = orig - eps;
            {
                Tape<double> tape;
                TapeBinding<double> bind(tape, ps);
                fm = loss_fn(tape, bind);
            }
            val.data[i] = orig;
            const double numeric = (fp - fm) / (2 * eps);
            const double analytic = ps.grad(name).data[i];
            const double denom = std::max({1.0, std::fabs(numeric), std::fabs(analytic)});
            const double rel = std::fabs(numeric - analytic) / denom;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_param = name;
                rep.worst_index = i;
            }
        }
    }
    rep.pass = rep.max_rel_err < tol;
    return rep;
}

/// Seeded parameter initializers.
template <typename T>
TensorT<T> randn_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, double stddev) {
    TensorT<T> t(std::move(shape));
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& v : t.data) v = T(dist(rng));
    return t;
}

template <typename T>
TensorT<T> he_conv_init(std::size_t cout, std::size_t cin, std::size_t k, std::mt19937_64& rng) {
    const double std = std::sqrt(2.0 / double(cin * k * k));
    return randn_tensor<T>({cout, cin, k, k}, rng, std);
}

}  // namespace windscale

#endif
