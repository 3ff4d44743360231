#ifndef WINDSCALE_TAPE_HPP
#define WINDSCALE_TAPE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "windscale/tensor.hpp"

namespace windscale {

/// Reverse-mode tape over the fixed op set the networks need. Define-by-run:
/// each builder records a node whose parents have smaller ids, so backward is
/// a single reverse sweep over creation order.
template <typename T>
class Tape {
  public:
    struct Node {
        TensorT<T> value;
        TensorT<T> grad;           // allocated lazily in backward()
        std::vector<int> parents;  // for reachability; backward closures hold ids too
        std::function<void()> backward;
        bool needs_grad = false;
        const char* op = "leaf";
    };

    int leaf(TensorT<T> v, bool needs_grad = false) {
        Node n;
        n.value = std::move(v);
        n.needs_grad = needs_grad;
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    const TensorT<T>& value(int id) const { return nodes_[id].value; }
    const TensorT<T>& grad(int id) const { return nodes_[id].grad; }
    std::size_t size() const { return nodes_.size(); }

    void backward(int root, const TensorT<T>* seed = nullptr) {
        if (root < 0 || root >= static_cast<int>(nodes_.size()))
            throw StateError("backward: invalid root node");
        if (ran_backward_) throw StateError("backward: tape already consumed");
        ran_backward_ = true;
        for (auto& n : nodes_) {
            n.grad.shape = n.value.shape;
            n.grad.data.assign(n.value.data.size(), T(0));
        }
        if (seed) {
            if (!seed->same_shape(nodes_[root].value))
                throw ShapeError("backward: seed gradient shape mismatch");
            nodes_[root].grad = *seed;
        } else {
            if (nodes_[root].value.numel() != 1)
                throw ShapeError("backward: non-scalar root needs an explicit seed");
            nodes_[root].grad.data[0] = T(1);
        }
        for (int id = root; id >= 0; --id)
            if (nodes_[id].backward) nodes_[id].backward();
    }

    // ---- elementwise ----

    int add(int a, int b) {
        check_same(a, b, "add");
        return binary(a, b, "add", [](T x, T y) { return x + y; },
                      [this](int a, int b, int out) {
                          axpy(a, T(1), out);
                          axpy(b, T(1), out);
                      });
    }

    int sub(int a, int b) {
        check_same(a, b, "sub");
        return binary(a, b, "sub", [](T x, T y) { return x - y; },
                      [this](int a, int b, int out) {
                          axpy(a, T(1), out);
                          axpy(b, T(-1), out);
                      });
    }

    int mul(int a, int b) {
        check_same(a, b, "mul");
        Node n;
        n.op = "mul";
        n.parents = {a, b};
        n.value = nodes_[a].value;
        for (std::size_t i = 0; i < n.value.data.size(); ++i)
            n.value.data[i] *= nodes_[b].value.data[i];
        const int out = push(std::move(n));
        nodes_[out].backward = [this, a, b, out]() {
            auto& g = nodes_[out].grad.data;
            auto& ga = nodes_[a].grad.data;
            auto& gb = nodes_[b].grad.data;
            auto& va = nodes_[a].value.data;
            auto& vb = nodes_[b].value.data;
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i] * vb[i];
                gb[i] += g[i] * va[i];
            }
        };
        return out;
    }

    int scale(int a, T s) {
        return unary(a, "scale", [s](T x) { return s * x; },
                     [this, s](int a, int out) { axpy(a, s, out); });
    }

    int add_scalar(int a, T c) {
        return unary(a, "add_scalar", [c](T x) { return x + c; },
                     [this](int a, int out) { axpy(a, T(1), out); });
    }

    int abs(int a) {
        Node n;
        n.op = "abs";
        n.parents = {a};
        n.value = nodes_[a].value;
        for (auto& v : n.value.data) v = std::fabs(v);
        const int out = push(std::move(n));
        nodes_[out].backward = [this, a, out]() {
            auto& g = nodes_[out].grad.data;
            auto& ga = nodes_[a].grad.data;
            auto& va = nodes_[a].value.data;
            for (std::size_t i = 0; i < g.size(); ++i)
                ga[i] += g[i] * (va[i] > T(0) ? T(1) : (va[i] < T(0) ? T(-1) : T(0)));
        };
        return out;
    }

    int sigmoid(int a) {
        Node n;
        n.op = "sigmoid";
        n.parents = {a};
        n.value = nodes_[a].value;
        for (auto& v : n.value.data) v = T(1) / (T(1) + std::exp(-v));
        const int out = push(std::move(n));
        nodes_[out].backward = [this, a, out]() {
            auto& g = nodes_[out].grad.data;
            auto& ga = nodes_[a].grad.data;
            auto& s = nodes_[out].value.data;
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s[i] * (T(1) - s[i]);
        };
        return out;
    }

    int silu(int a) {
        Node n;
        n.op = "silu";
        n.parents = {a};
        n.value = nodes_[a].value;
        for (auto& v : n.value.data) v = v / (T(1) + std::exp(-v));
        const int out = push(std::move(n));
        nodes_[out].backward = [this, a, out]() {
            auto& g = nodes_[out].grad.data;
            auto& ga = nodes_[a].grad.data;
            auto& x = nodes_[a].value.data;
            for (std::size_t i = 0; i < g.size(); ++i) {
                const T s = T(1) / (T(1) + std::exp(-x[i]));
                ga[i] += g[i] * s * (T(1) + x[i] * (T(1) - s));
            }
        };
        return out;
    }

    /// Softmax along the last axis.
    int softmax_last(int a) {
        const auto& x = nodes_[a].value;
        if (x.rank() < 1) throw ShapeError("softmax_last: rank-0 input");
        const std::size_t L = x.shape.back();
        const std::size_t rows = x.numel() / L;
        Node n;
        n.op = "softmax";
        n.parents = {a};
        n.value = x;
        for (std::size_t r = 0; r < rows; ++r) {
            T* p = &n.value.data[r * L];
            T mx = p[0];
            for (std::size_t i = 1; i < L; ++i) mx = std::max(mx, p[i]);
            T sum = T(0);
            for (std::size_t i = 0; i < L; ++i) {
                p[i] = std::exp(p[i] - mx);
                sum += p[i];
            }
            for (std::size_t i = 0; i < L; ++i) p[i] /= sum;
        }
        const int out = push(std::move(n));
        nodes_[out].backward = [this, a, out, L, rows]() {
            auto& g = nodes_[out].grad.data;
            auto& ga = nodes_[a].grad.data;
            auto& y = nodes_[out].value.data;
            for (std::size_t r = 0; r < rows; ++r) {
                T dot = T(0);
                for (std::size_t i = 0; i < L; ++i) dot += g[r * L + i] * y[r * L + i];
                for (std::size_t i = 0; i < L; ++i)
                    ga[r * L + i] += y[r * L + i] * (g[r * L + i] - dot);
            }
        };
        return out;
    }

    // ---- linear algebra ----

    int matmul(int a, int b) {
        const auto& A = nodes_[a].value;
        const auto& B = nodes_[b].value;
        if (A.rank() != 2 || B.rank() != 2 || A.shape[1] != B.shape[0])
            throw ShapeError("matmul: incompatible shapes " + shape_str(A.shape) + " x " +
                             shape_str(B.shape));
        const std::size_t M = A.shape[0], K = A.shape[1], N = B.shape[1];
        Node n;
        n.op = "matmul";
        n.parents = {a, b};
        n.value = TensorT<T>({M, N});
        for (std::size_t i = 0; i < M; ++i)
            for (std::size_t k = 0; k < K; ++k) {
                const T av = A.data[i * K + k];
                for (std::size_t j = 0; j < N; ++j)
                    n.value.data[i * N + j] += av * B.data[k * N + j];
            }
        const int out = push(std::move(n));
        nodes_[out].backward = [this, a, b, out, M, K, N]() {
            const auto& g = nodes_[out].grad.data;
            const auto& A = nodes_[a].value.data;
            const auto& B = nodes_[b].value.data;
            auto& ga = nodes_[a].grad.data;
            auto& gb = nodes_[b].grad.data;
            for (std::size_t i = 0; i < M; ++i)
                for (std::size_t j = 0; j < N; ++j) {
                    const T gv = g[i * N + j];
                    for (std::size_t k = 0; k < K; ++k) {
                        ga[i * K + k] += gv * B[k * N + j];
                        gb[k * N + j] += gv * A[i * K + k];
                    }
                }
        };
        return out;
    }

    // ---- convolutions (stride 1, zero padding, shape-preserving) ----

    /// x:[Cin,H,W]  w:[Cout,Cin,k,k]  b:[Cout]  (odd k)
    int conv2d(int x, int w, int b) {
        const auto& X = nodes_[x].value;
        const auto& W_ = nodes_[w].value;
        const auto& B = nodes_[b].value;
        if (X.rank() != 3 || W_.rank() != 4 || B.rank() != 1)
            throw ShapeError("conv2d: expected x[Cin,H,W], w[Cout,Cin,k,k], b[Cout]");
        if (W_.shape[1] != X.shape[0] || W_.shape[0] != B.shape[0] || W_.shape[2] != W_.shape[3] ||
            W_.shape[2] % 2 == 0)
            throw ShapeError("conv2d: shape mismatch x=" + shape_str(X.shape) +
                             " w=" + shape_str(W_.shape));
        const std::size_t Cin = X.shape[0], H = X.shape[1], Wd = X.shape[2];
        const std::size_t Cout = W_.shape[0], k = W_.shape[2];
        const std::size_t p = k / 2;
        Node n;
        n.op = "conv2d";
        n.parents = {x, w, b};
        n.value = TensorT<T>({Cout, H, Wd});
        conv_forward(X.data.data(), W_.data.data(), B.data.data(), n.value.data.data(), Cin, Cout,
                     H, Wd, k, p);
        const int out = push(std::move(n));
        nodes_[out].backward = [this, x, w, b, out, Cin, Cout, H, Wd, k, p]() {
            conv_backward(nodes_[x].value.data.data(), nodes_[w].value.data.data(),
                          nodes_[out].grad.data.data(), nodes_[x].grad.data.data(),
                          nodes_[w].grad.data.data(), nodes_[b].grad.data.data(), Cin, Cout, H, Wd,
                          k, p);
        };
        return out;
    }

    /// Depthwise conv, arbitrary odd kernel and dilation. x:[C,H,W] w:[C,k,k] b:[C]
    int dwconv2d(int x, int w, int b, int dilation) {
        const auto& X = nodes_[x].value;
        const auto& W_ = nodes_[w].value;
        if (X.rank() != 3 || W_.rank() != 3 || W_.shape[0] != X.shape[0] ||
            W_.shape[1] != W_.shape[2] || W_.shape[1] % 2 == 0)
            throw ShapeError("dwconv2d: shape mismatch x=" + shape_str(X.shape) +
                             " w=" + shape_str(W_.shape));
        if (dilation < 1) throw ArgError("dwconv2d: dilation must be >= 1");
        const std::size_t C = X.shape[0], H = X.shape[1], Wd = X.shape[2];
        const std::size_t k = W_.shape[1];
        const std::size_t d = static_cast<std::size_t>(dilation);
        const std::size_t p = d * (k - 1) / 2;
        Node n;
        n.op = "dwconv2d";
        n.parents = {x, w, b};
        n.value = TensorT<T>({C, H, Wd});
        {
            const T* xd = X.data.data();
            const T* wd = W_.data.data();
            const T* bd = nodes_[b].value.data.data();
            T* yd = n.value.data.data();
            for (std::size_t c = 0; c < C; ++c) {
                for (std::size_t i = 0; i < H * Wd; ++i) yd[c * H * Wd + i] = bd[c];
                for (std::size_t ky = 0; ky < k; ++ky)
                    for (std::size_t kx = 0; kx < k; ++kx) {
                        const T wv = wd[(c * k + ky) * k + kx];
                        if (wv == T(0)) continue;
                        const long oy0 = std::max<long>(0, long(p) - long(ky * d));
                        const long oy1 = std::min<long>(long(H), long(H) + long(p) - long(ky * d));
                        const long ox0 = std::max<long>(0, long(p) - long(kx * d));
                        const long ox1 = std::min<long>(long(Wd), long(Wd) + long(p) - long(kx * d));
                        for (long oy = oy0; oy < oy1; ++oy) {
                            const long iy = oy + long(ky * d) - long(p);
                            const T* xr = xd + (c * H + std::size_t(iy)) * Wd;
                            T* yr = yd + (c * H + std::size_t(oy)) * Wd;
                            const long sh = long(kx * d) - long(p);
                            for (long ox = ox0; ox < ox1; ++ox) yr[ox] += wv * xr[ox + sh];
                        }
                    }
            }
        }
        const int out = push(std::move(n));
        nodes_[out].backward = [this, x, w, b, out, C, H, Wd, k, d, p]() {
            const T* xd = nodes_[x].value.data.data();
            const T* wd = nodes_[w].value.data.data();
            const T* gd = nodes_[out].grad.data.data();
            T* gx = nodes_[x].grad.data.data();
            T* gw = nodes_[w].grad.data.data();
            T* gb = nodes_[b].grad.data.data();
            for (std::size_t c = 0; c < C; ++c) {
                T bsum = T(0);
                for (std::size_t i = 0; i < H * Wd; ++i) bsum += gd[c * H * Wd + i];
                gb[c] += bsum;
                for (std::size_t ky = 0; ky < k; ++ky)
                    for (std::size_t kx = 0; kx < k; ++kx) {
                        const T wv = wd[(c * k + ky) * k + kx];
                        T wacc = T(0);
                        const long oy0 = std::max<long>(0, long(p) - long(ky * d));
                        const long oy1 = std::min<long>(long(H), long(H) + long(p) - long(ky * d));
                        const long ox0 = std::max<long>(0, long(p) - long(kx * d));
                        const long ox1 = std::min<long>(long(Wd), long(Wd) + long(p) - long(kx * d));
                        for (long oy = oy0; oy < oy1; ++oy) {
                            const long iy = oy + long(ky * d) - long(p);
                            const T* xr = xd + (c * H + std::size_t(iy)) * Wd;
                            T* gxr = gx + (c * H + std::size_t(iy)) * Wd;
                            const T* gr = gd + (c * H + std::size_t(oy)) * Wd;
                            const long sh = long(kx * d) - long(p);
                            for (long ox = ox0; ox < ox1; ++ox) {
                                wacc += gr[ox] * xr[ox + sh];
                                gxr[ox + sh] += gr[ox] * wv;
                            }
                        }
                        gw[(c * k + ky) * k + kx] += wacc;
                    }
            }
        };
        return out;
    }

    // ---- normalization ----

    /// Group normalization over [C,H,W] with affine gamma/beta of shape [C].
    int groupnorm(int x, int gamma, int beta, int groups, T eps = T(1e-5)) {
        const auto& X = nodes_[x].value;
        if (X.rank() != 3) throw ShapeError("groupnorm: expected [C,H,W]");
        const std::size_t C = X.shape[0], H = X.shape[1], W = X.shape[2];
        if (groups < 1 || C % static_cast<std::size_t>(groups) != 0)
            throw ArgError("groupnorm: groups must divide channel count");
        const std::size_t G = static_cast<std::size_t>(groups);
        const std::size_t cg = C / G, m = cg * H * W;
        Node n;
        n.op = "groupnorm";
        n.parents = {x, gamma, beta};
        n.value = TensorT<T>({C, H, W});
        auto mu = std::make_shared<std::vector<T>>(G);
        auto inv_sd = std::make_shared<std::vector<T>>(G);
        auto xhat = std::make_shared<std::vector<T>>(C * H * W);
        const T* xd = X.data.data();
        const T* gm = nodes_[gamma].value.data.data();
        const T* bt = nodes_[beta].value.data.data();
        for (std::size_t g = 0; g < G; ++g) {
            const T* xg = xd + g * m;
            T s = T(0);
            for (std::size_t i = 0; i < m; ++i) s += xg[i];
            const T mean = s / T(m);
            T v = T(0);
            for (std::size_t i = 0; i < m; ++i) {
                const T dv = xg[i] - mean;
                v += dv * dv;
            }
            const T isd = T(1) / std::sqrt(v / T(m) + eps);
            (*mu)[g] = mean;
            (*inv_sd)[g] = isd;
            for (std::size_t i = 0; i < m; ++i) (*xhat)[g * m + i] = (xg[i] - mean) * isd;
        }
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < H * W; ++i)
                n.value.data[c * H * W + i] = (*xhat)[c * H * W + i] * gm[c] + bt[c];
        const int out = push(std::move(n));
        nodes_[out].backward = [this, x, gamma, beta, out, G, cg, m, C, H, W, inv_sd, xhat]() {
            const T* gd = nodes_[out].grad.data.data();
            const T* gm = nodes_[gamma].value.data.data();
            T* gx = nodes_[x].grad.data.data();
            T* ggm = nodes_[gamma].grad.data.data();
            T* gbt = nodes_[beta].grad.data.data();
            const std::size_t hw = H * W;
            for (std::size_t c = 0; c < C; ++c) {
                T sg = T(0), sgx = T(0);
                for (std::size_t i = 0; i < hw; ++i) {
                    sg += gd[c * hw + i];
                    sgx += gd[c * hw + i] * (*xhat)[c * hw + i];
                }
                gbt[c] += sg;
                ggm[c] += sgx;
            }
            for (std::size_t g = 0; g < G; ++g) {
                // dL/dxhat = g * gamma; dx = isd*(dxhat - mean(dxhat) - xhat*mean(dxhat*xhat))
                T s1 = T(0), s2 = T(0);
                for (std::size_t c = g * cg; c < (g + 1) * cg; ++c)
                    for (std::size_t i = 0; i < hw; ++i) {
                        const T dxh = gd[c * hw + i] * gm[c];
                        s1 += dxh;
                        s2 += dxh * (*xhat)[c * hw + i];
                    }
                s1 /= T(m);
                s2 /= T(m);
                const T isd = (*inv_sd)[g];
                for (std::size_t c = g * cg; c < (g + 1) * cg; ++c)
                    for (std::size_t i = 0; i < hw; ++i) {
                        const T dxh = gd[c * hw + i] * gm[c];
                        gx[c * hw + i] += isd * (dxh - s1 - (*xhat)[c * hw + i] * s2);
                    }
            }
        };
        return out;
    }

    // ---- pooling / resampling ----

    int global_avg_pool(int x) {
        const auto& X = nodes_[x].value;
        if (X.rank() != 3) throw ShapeError("global_avg_pool: expected [C,H,W]");
        const std::size_t C = X.shape[0], hw = X.shape[1] * X.shape[2];
        Node n;
        n.op = "gap";
        n.parents = {x};
        n.value = TensorT<T>({C});
        for (std::size_t c = 0; c < C; ++c) {
            T s = T(0);
            for (std::size_t i = 0; i < hw; ++i) s += X.data[c * hw + i];
            n.value.data[c] = s / T(hw);
        }
        const int out = push(std::move(n));
        nodes_[out].backward = [this, x, out, C, hw]() {
            auto& g = nodes_[out].grad.data;
            auto& gx = nodes_[x].grad.data;
            for (std::size_t c = 0; c < C; ++c) {
                const T v = g[c] / T(hw);
                for (std::size_t i = 0; i < hw; ++i) gx[c * hw + i] += v;
            }
        };
        return out;
    }

    int avgpool2(int x) {
        const auto& X = nodes_[x].value;
        if (X.rank() != 3 || X.shape[1] % 2 || X.shape[2] % 2)
            throw ShapeError("avgpool2: expected [C,2m,2n]");
        const std::size_t C = X.shape[0], H = X.shape[1], W = X.shape[2];
        Node n;
        n.op = "avgpool2";
        n.parents = {x};
        n.value = TensorT<T>({C, H / 2, W / 2});
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < H / 2; ++i)
                for (std::size_t j = 0; j < W / 2; ++j)
                    n.value.data[(c * (H / 2) + i) * (W / 2) + j] =
                        (X.at3(c, 2 * i, 2 * j) + X.at3(c, 2 * i, 2 * j + 1) +
                         X.at3(c, 2 * i + 1, 2 * j) + X.at3(c, 2 * i + 1, 2 * j + 1)) /
                        T(4);
        const int out = push(std::move(n));
        nodes_[out].backward = [this, x, out, C, H, W]() {
            auto& g = nodes_[out].grad;
            auto& gx = nodes_[x].grad;
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t i = 0; i < H / 2; ++i)
                    for (std::size_t j = 0; j < W / 2; ++j) {
                        const T v = g.data[(c * (H / 2) + i) * (W / 2) + j] / T(4);
                        gx.at3(c, 2 * i, 2 * j) += v;
                        gx.at3(c, 2 * i, 2 * j + 1) += v;
                        gx.at3(c, 2 * i + 1, 2 * j) += v;
                        gx.at3(c, 2 * i + 1, 2 * j + 1) += v;
                    }
        };
        return out;
    }

    /// Bilinear x2 upsample with periodic wrap, [C,H,W] -> [C,2H,2W].
    int upsample2(int x) {
        const auto& X = nodes_[x].value;
        if (X.rank() != 3) throw ShapeError("upsample2: expected [C,H,W]");
        const std::size_t C = X.shape[0], H = X.shape[1], W = X.shape[2];
        Node n;
        n.op = "upsample2";
        n.parents = {x};
        n.value = TensorT<T>({C, 2 * H, 2 * W});
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t y = 0; y < 2 * H; ++y) {
                const std::size_t i0 = y / 2, i1 = (i0 + 1) % H;
                const T wy = (y % 2) ? T(0.5) : T(0);
                for (std::size_t xo = 0; xo < 2 * W; ++xo) {
                    const std::size_t j0 = xo / 2, j1 = (j0 + 1) % W;
                    const T wx = (xo % 2) ? T(0.5) : T(0);
                    n.value.at3(c, y, xo) =
                        (T(1) - wy) * (T(1) - wx) * X.at3(c, i0, j0) +
                        (T(1) - wy) * wx * X.at3(c, i0, j1) + wy * (T(1) - wx) * X.at3(c, i1, j0) +
                        wy * wx * X.at3(c, i1, j1);
                }
            }
        const int out = push(std::move(n));
        nodes_[out].backward = [this, x, out, C, H, W]() {
            auto& g = nodes_[out].grad;
            auto& gx = nodes_[x].grad;
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t y = 0; y < 2 * H; ++y) {
                    const std::size_t i0 = y / 2, i1 = (i0 + 1) % H;
                    const T wy = (y % 2) ? T(0.5) : T(0);
                    for (std::size_t xo = 0; xo < 2 * W; ++xo) {
                        const std::size_t j0 = xo / 2, j1 = (j0 + 1) % W;
                        const T wx = (xo % 2) ? T(0.5) : T(0);
                        const T gv = g.at3(c, y, xo);
                        gx.at3(c, i0, j0) += (T(1) - wy) * (T(1) - wx) * gv;
                        gx.at3(c, i0, j1) += (T(1) - wy) * wx * gv;
                        gx.at3(c, i1, j0) += wy * (T(1) - wx) * gv;
                        gx.at3(c, i1, j1) += wy * wx * gv;
                    }
                }
        };
        return out;
    }

    // ---- structural ----

    int concat_ch(int a, int b) {
        const auto& A = nodes_[a].value;
        const auto& B = nodes_[b].value;
        if (A.rank() != 3 || B.rank() != 3 || A.shape[1] != B.shape[1] || A.shape[2] != B.shape[2])
            throw ShapeError("concat_ch: spatial mismatch " + shape_str(A.shape) + " vs " +
                             shape_str(B.shape));
        Node n;
        n.op = "concat_ch";
        n.parents = {a, b};
        n.value = TensorT<T>({A.shape[0] + B.shape[0], A.shape[1], A.shape[2]});
        std::copy(A.data.begin(), A.data.end(), n.value.data.begin());
        std::copy(B.data.begin(), B.data.end(), n.value.data.begin() + A.data.size());
        const int out = push(std::move(n));
        const std::size_t na = A.data.size();
        nodes_[out].backward = [this, a, b, out, na]() {
            auto& g = nodes_[out].grad.data;
            auto& ga = nodes_[a].grad.data;
            auto& gb = nodes_[b].grad.data;
            for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[na + i];
        };
        return out;
    }

    /// Channel slice [c0, c1) of [C,H,W].
    int slice_ch(int x, std::size_t c0, std::size_t c1) {
        const auto& X = nodes_[x].value;
        if (X.rank() != 3 || c0 >= c1 || c1 > X.shape[0]) throw ShapeError("slice_ch: bad range");
        const std::size_t hw = X.shape[1] * X.shape[2];
        Node n;
        n.op = "slice_ch";
        n.parents = {x};
        n.value = TensorT<T>({c1 - c0, X.shape[1], X.shape[2]});
        std::copy(X.data.begin() + c0 * hw, X.data.begin() + c1 * hw, n.value.data.begin());
        const int out = push(std::move(n));
        nodes_[out].backward = [this, x, out, c0, hw]() {
            auto& g = nodes_[out].grad.data;
            auto& gx = nodes_[x].grad.data;
            for (std::size_t i = 0; i < g.size(); ++i) gx[c0 * hw + i] += g[i];
        };
        return out;
    }

    int reshape(int x, std::vector<std::size_t> new_shape) {
        std::size_t n = 1;
        for (auto e : new_shape) n *= e;
        if (n != nodes_[x].value.numel())
            throw ShapeError("reshape: element count mismatch " + shape_str(nodes_[x].value.shape) +
                             " -> " + shape_str(new_shape));
        Node nd;
        nd.op = "reshape";
        nd.parents = {x};
        nd.value.shape = std::move(new_shape);
        nd.value.data = nodes_[x].value.data;
        const int out = push(std::move(nd));
        nodes_[out].backward = [this, x, out]() {
            auto& g = nodes_[out].grad.data;
            auto& gx = nodes_[x].grad.data;
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        };
        return out;
    }

    /// Circular shift along axis (of the last two dims), positive = toward
    /// higher index. Linear op, used by the differential operators.
    int roll(int x, int axis, int shift) {
        const auto& X = nodes_[x].value;
        if (X.rank() < 2) throw ShapeError("roll: need at least 2 dims");
        if (axis != 0 && axis != 1) throw ArgError("roll: axis must be 0 (rows) or 1 (cols)");
        const std::size_t H = X.shape[X.rank() - 2], W = X.shape[X.rank() - 1];
        const std::size_t planes = X.numel() / (H * W);
        Node n;
        n.op = "roll";
        n.parents = {x};
        n.value = X;
        roll_apply(X.data.data(), n.value.data.data(), planes, H, W, axis, shift);
        const int out = push(std::move(n));
        nodes_[out].backward = [this, x, out, planes, H, W, axis, shift]() {
            std::vector<T> tmp(nodes_[out].grad.data.size());
            roll_apply(nodes_[out].grad.data.data(), tmp.data(), planes, H, W, axis, -shift);
            auto& gx = nodes_[x].grad.data;
            for (std::size_t i = 0; i < tmp.size(); ++i) gx[i] += tmp[i];
        };
        return out;
    }

    // ---- broadcasting helpers ----

    /// x:[C,H,W] + b:[C]
    int bias_add_chw(int x, int b) {
        const auto& X = nodes_[x].value;
        const auto& B = nodes_[b].value;
        if (X.rank() != 3 || B.rank() != 1 || B.shape[0] != X.shape[0])
            throw ShapeError("bias_add_chw: shape mismatch");
        const std::size_t C = X.shape[0], hw = X.shape[1] * X.shape[2];
        Node n;
        n.op = "bias_add";
        n.parents = {x, b};
        n.value = X;
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < hw; ++i) n.value.data[c * hw + i] += B.data[c];
        const int out = push(std::move(n));
        nodes_[out].backward = [this, x, b, out, C, hw]() {
            auto& g = nodes_[out].grad.data;
            auto& gx = nodes_[x].grad.data;
            auto& gb = nodes_[b].grad.data;
            for (std::size_t c = 0; c < C; ++c) {
                T s = T(0);
                for (std::size_t i = 0; i < hw; ++i) {
                    gx[c * hw + i] += g[c * hw + i];
                    s += g[c * hw + i];
                }
                gb[c] += s;
            }
        };
        return out;
    }

    /// x:[C,H,W] scaled per-channel by s:[C]
    int chan_scale(int x, int s) {
        const auto& X = nodes_[x].value;
        const auto& S = nodes_[s].value;
        if (X.rank() != 3 || S.rank() != 1 || S.shape[0] != X.shape[0])
            throw ShapeError("chan_scale: shape mismatch");
        const std::size_t C = X.shape[0], hw = X.shape[1] * X.shape[2];
        Node n;
        n.op = "chan_scale";
        n.parents = {x, s};
        n.value = X;
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < hw; ++i) n.value.data[c * hw + i] *= S.data[c];
        const int out = push(std::move(n));
        nodes_[out].backward = [this, x, s, out, C, hw]() {
            auto& g = nodes_[out].grad.data;
            auto& gx = nodes_[x].grad.data;
            auto& gs = nodes_[s].grad.data;
            const auto& xv = nodes_[x].value.data;
            const auto& sv = nodes_[s].value.data;
            for (std::size_t c = 0; c < C; ++c) {
                T acc = T(0);
                for (std::size_t i = 0; i < hw; ++i) {
                    gx[c * hw + i] += g[c * hw + i] * sv[c];
                    acc += g[c * hw + i] * xv[c * hw + i];
                }
                gs[c] += acc;
            }
        };
        return out;
    }

    // ---- reductions ----

    int sum(int x) {
        Node n;
        n.op = "sum";
        n.parents = {x};
        n.value = TensorT<T>({1});
        T s = T(0);
        for (T v : nodes_[x].value.data) s += v;
        n.value.data[0] = s;
        const int out = push(std::move(n));
        nodes_[out].backward = [this, x, out]() {
            const T g = nodes_[out].grad.data[0];
            for (auto& v : nodes_[x].grad.data) v += g;
        };
        return out;
    }

    int mean(int x) {
        const std::size_t n_el = nodes_[x].value.numel();
        return scale(sum(x), T(1) / T(n_el));
    }

  private:
    std::vector<Node> nodes_;
    bool ran_backward_ = false;

    int push(Node n) {
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    void check_same(int a, int b, const char* op) {
        if (!nodes_[a].value.same_shape(nodes_[b].value))
            throw ShapeError(std::string(op) + ": shape mismatch " +
                             shape_str(nodes_[a].value.shape) + " vs " +
                             shape_str(nodes_[b].value.shape));
    }

    void axpy(int dst, T s, int src_grad) {
        auto& g = nodes_[src_grad].grad.data;
        auto& d = nodes_[dst].grad.data;
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += s * g[i];
    }

    template <typename F, typename B>
    int unary(int a, const char* op, F f, B bw) {
        Node n;
        n.op = op;
        n.parents = {a};
        n.value = nodes_[a].value;
        for (auto& v : n.value.data) v = f(v);
        const int out = push(std::move(n));
        nodes_[out].backward = [bw, a, out]() { bw(a, out); };
        return out;
    }

    template <typename F, typename B>
    int binary(int a, int b, const char* op, F f, B bw) {
        Node n;
        n.op = op;
        n.parents = {a, b};
        n.value = nodes_[a].value;
        for (std::size_t i = 0; i < n.value.data.size(); ++i)
            n.value.data[i] = f(n.value.data[i], nodes_[b].value.data[i]);
        const int out = push(std::move(n));
        nodes_[out].backward = [bw, a, b, out]() { bw(a, b, out); };
        return out;
    }

    static void conv_forward(const T* x, const T* w, const T* b, T* y, std::size_t Cin,
                             std::size_t Cout, std::size_t H, std::size_t W, std::size_t k,
                             std::size_t p) {
        for (std::size_t oc = 0; oc < Cout; ++oc) {
            T* yp = y + oc * H * W;
            for (std::size_t i = 0; i < H * W; ++i) yp[i] = b[oc];
            for (std::size_t ic = 0; ic < Cin; ++ic) {
                const T* xp = x + ic * H * W;
                const T* wp = w + (oc * Cin + ic) * k * k;
                for (std::size_t ky = 0; ky < k; ++ky)
                    for (std::size_t kx = 0; kx < k; ++kx) {
                        const T wv = wp[ky * k + kx];
                        const long oy0 = std::max<long>(0, long(p) - long(ky));
                        const long oy1 = std::min<long>(long(H), long(H) + long(p) - long(ky));
                        const long ox0 = std::max<long>(0, long(p) - long(kx));
                        const long ox1 = std::min<long>(long(W), long(W) + long(p) - long(kx));
                        const long sh = long(kx) - long(p);
                        for (long oy = oy0; oy < oy1; ++oy) {
                            const T* xr = xp + std::size_t(oy + long(ky) - long(p)) * W;
                            T* yr = yp + std::size_t(oy) * W;
                            for (long ox = ox0; ox < ox1; ++ox) yr[ox] += wv * xr[ox + sh];
                        }
                    }
            }
        }
    }

    static void conv_backward(const T* x, const T* w, const T* gy, T* gx, T* gw, T* gb,
                              std::size_t Cin, std::size_t Cout, std::size_t H, std::size_t W,
                              std::size_t k, std::size_t p) {
        for (std::size_t oc = 0; oc < Cout; ++oc) {
            const T* gp = gy + oc * H * W;
            T s = T(0);
            for (std::size_t i = 0; i < H * W; ++i) s += gp[i];
            gb[oc] += s;
            for (std::size_t ic = 0; ic < Cin; ++ic) {
                const T* xp = x + ic * H * W;
                T* gxp = gx + ic * H * W;
                const T* wp = w + (oc * Cin + ic) * k * k;
                T* gwp = gw + (oc * Cin + ic) * k * k;
                for (std::size_t ky = 0; ky < k; ++ky)
                    for (std::size_t kx = 0; kx < k; ++kx) {
                        const T wv = wp[ky * k + kx];
                        T wacc = T(0);
                        const long oy0 = std::max<long>(0, long(p) - long(ky));
                        const long oy1 = std::min<long>(long(H), long(H) + long(p) - long(ky));
                        const long ox0 = std::max<long>(0, long(p) - long(kx));
                        const long ox1 = std::min<long>(long(W), long(W) + long(p) - long(kx));
                        const long sh = long(kx) - long(p);
                        for (long oy = oy0; oy < oy1; ++oy) {
                            const T* xr = xp + std::size_t(oy + long(ky) - long(p)) * W;
                            T* gxr = gxp + std::size_t(oy + long(ky) - long(p)) * W;
                            const T* gr = gp + std::size_t(oy) * W;
                            for (long ox = ox0; ox < ox1; ++ox) {
                                wacc += gr[ox] * xr[ox + sh];
                                gxr[ox + sh] += gr[ox] * wv;
                            }
                        }
                        gwp[ky * k + kx] += wacc;
                    }
            }
        }
    }

    static void roll_apply(const T* src, T* dst, std::size_t planes, std::size_t H, std::size_t W,
                           int axis, int shift) {
        auto modp = [](long a, long m) { return ((a % m) + m) % m; };
        for (std::size_t pl = 0; pl < planes; ++pl) {
            const T* s = src + pl * H * W;
            T* d = dst + pl * H * W;
            if (axis == 0) {
                for (std::size_t i = 0; i < H; ++i) {
                    const std::size_t si = std::size_t(modp(long(i) - shift, long(H)));
                    std::copy(s + si * W, s + (si + 1) * W, d + i * W);
                }
            } else {
                for (std::size_t i = 0; i < H; ++i)
                    for (std::size_t j = 0; j < W; ++j)
                        d[i * W + j] = s[i * W + std::size_t(modp(long(j) - shift, long(W)))];
            }
        }
    }
};

}  // namespace windscale

#endif
