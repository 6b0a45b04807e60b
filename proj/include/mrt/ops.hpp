#pragma once

// Differentiable tensor operations. Every op returns a new graph node; the
// backward closures accumulate into the parents that require gradients.
//
// Broadcasting is only performed by the elementwise binary ops (add, sub, mul,
// div): operands must have equal rank and every dimension must either match
// or be 1 in one of the operands.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mrt/autograd.hpp"
#include "mrt/rng.hpp"

namespace mrt {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
Eigen::Map<RowMat<T>> mat(T* p, std::size_t r, std::size_t c) {
    return Eigen::Map<RowMat<T>>(p, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

template <typename T>
Eigen::Map<const RowMat<T>> cmat(const T* p, std::size_t r, std::size_t c) {
    return Eigen::Map<const RowMat<T>>(p, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

// Row-major block of `c` columns inside rows of length `ld`.
template <typename T>
Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>> strided(T* p, std::size_t r, std::size_t c, std::size_t ld) {
    return {p, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c), Eigen::OuterStride<>(static_cast<Eigen::Index>(ld))};
}

template <typename T>
Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>> cstrided(const T* p, std::size_t r, std::size_t c,
                                                               std::size_t ld) {
    return {p, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c), Eigen::OuterStride<>(static_cast<Eigen::Index>(ld))};
}

// Walks every index of `out` keeping two input offsets in step.
template <class F>
void for_each_strided(const Shape& out, const std::vector<std::size_t>& sa,
                      const std::vector<std::size_t>& sb, F&& f) {
    const std::size_t r = out.size();
    const std::size_t n = numel(out);
    std::vector<std::size_t> idx(r, 0);
    std::size_t ia = 0;
    std::size_t ib = 0;
    for (std::size_t i = 0; i < n; ++i) {
        f(i, ia, ib);
        for (std::size_t d = r; d-- > 0;) {
            ++idx[d];
            ia += sa[d];
            ib += sb[d];
            if (idx[d] < out[d]) {
                break;
            }
            ia -= sa[d] * out[d];
            ib -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
}

inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    if (a.size() != b.size()) {
        throw DimensionError(std::string(op) + ": rank mismatch " + shape_str(a) + " vs " + shape_str(b));
    }
    Shape out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] == b[i] || b[i] == 1) {
            out[i] = a[i];
        } else if (a[i] == 1) {
            out[i] = b[i];
        } else {
            throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " +
                                 shape_str(b));
        }
    }
    return out;
}

inline std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
    auto s = strides_of(in);
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (in[i] == 1 && out[i] != 1) {
            s[i] = 0;
        }
    }
    return s;
}

enum class BinaryKind { add, sub, mul, div };

template <typename T>
Var<T> binary(const Var<T>& a, const Var<T>& b, BinaryKind kind, const char* name) {
    const Shape out_shape = broadcast_shape(a.shape(), b.shape(), name);
    const auto sa = broadcast_strides(a.shape(), out_shape);
    const auto sb = broadcast_strides(b.shape(), out_shape);
    Tensor<T> out(out_shape);
    const auto& av = a.value();
    const auto& bv = b.value();
    const bool same = a.shape() == b.shape();
    auto apply = [&](std::size_t i, std::size_t ia, std::size_t ib) {
        const T x = av[ia];
        const T y = bv[ib];
        switch (kind) {
            case BinaryKind::add: out[i] = x + y; break;
            case BinaryKind::sub: out[i] = x - y; break;
            case BinaryKind::mul: out[i] = x * y; break;
            case BinaryKind::div: out[i] = x / y; break;
        }
    };
    if (same) {
        for (std::size_t i = 0; i < out.size(); ++i) {
            apply(i, i, i);
        }
    } else {
        for_each_strided(out_shape, sa, sb, apply);
    }
    auto an = a.node();
    auto bn = b.node();
    return make_result<T>(std::move(out), {a, b}, [an, bn, sa, sb, kind, same](Node<T>& o) {
        const auto& g = o.grad;
        Tensor<T>* ga = an->requires_grad ? &an->grad_buffer() : nullptr;
        Tensor<T>* gb = bn->requires_grad ? &bn->grad_buffer() : nullptr;
        const auto& av = an->value;
        const auto& bv = bn->value;
        auto step = [&](std::size_t i, std::size_t ia, std::size_t ib) {
            const T gi = g[i];
            switch (kind) {
                case BinaryKind::add:
                    if (ga) (*ga)[ia] += gi;
                    if (gb) (*gb)[ib] += gi;
                    break;
                case BinaryKind::sub:
                    if (ga) (*ga)[ia] += gi;
                    if (gb) (*gb)[ib] -= gi;
                    break;
                case BinaryKind::mul:
                    if (ga) (*ga)[ia] += gi * bv[ib];
                    if (gb) (*gb)[ib] += gi * av[ia];
                    break;
                case BinaryKind::div:
                    if (ga) (*ga)[ia] += gi / bv[ib];
                    if (gb) (*gb)[ib] -= gi * av[ia] / (bv[ib] * bv[ib]);
                    break;
            }
        };
        if (same) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                step(i, i, i);
            }
        } else {
            for_each_strided(o.value.shape(), sa, sb, step);
        }
    });
}

template <typename T>
void accumulate(const std::shared_ptr<Node<T>>& n, const Tensor<T>& g) {
    if (n->requires_grad) {
        auto& buf = n->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            buf[i] += g[i];
        }
    }
}

}  // namespace detail

template <typename T>
Var<T> constant(Tensor<T> value) {
    return Var<T>(std::move(value), false);
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    return detail::binary(a, b, detail::BinaryKind::add, "add");
}
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    return detail::binary(a, b, detail::BinaryKind::sub, "sub");
}
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    return detail::binary(a, b, detail::BinaryKind::mul, "mul");
}
template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
    return detail::binary(a, b, detail::BinaryKind::div, "div");
}

template <typename T>
Var<T> scale(const Var<T>& x, T c) {
    Tensor<T> out = x.value();
    for (auto& v : out.data()) {
        v *= c;
    }
    auto xn = x.node();
    return make_result<T>(std::move(out), {x}, [xn, c](Node<T>& o) {
        if (!xn->requires_grad) return;
        auto& g = xn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += c * o.grad[i];
    });
}

template <typename T>
Var<T> square(const Var<T>& x) {
    Tensor<T> out = x.value();
    for (auto& v : out.data()) {
        v *= v;
    }
    auto xn = x.node();
    return make_result<T>(std::move(out), {x}, [xn](Node<T>& o) {
        if (!xn->requires_grad) return;
        auto& g = xn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += T{2} * xn->value[i] * o.grad[i];
    });
}

template <typename T>
Var<T> sqrt(const Var<T>& x) {
    Tensor<T> out = x.value();
    for (auto& v : out.data()) {
        v = std::sqrt(v);
    }
    auto xn = x.node();
    return make_result<T>(out, {x}, [xn, out](Node<T>& o) {
        if (!xn->requires_grad) return;
        auto& g = xn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] / (T{2} * out[i]);
    });
}

template <typename T>
Var<T> sum_all(const Var<T>& x) {
    T s{0};
    for (T v : x.value().data()) s += v;
    auto xn = x.node();
    return make_result<T>(Tensor<T>(Shape{1}, s), {x}, [xn](Node<T>& o) {
        if (!xn->requires_grad) return;
        auto& g = xn->grad_buffer();
        for (auto& v : g.data()) v += o.grad[0];
    });
}

template <typename T>
Var<T> mean_all(const Var<T>& x) {
    return scale(sum_all(x), T{1} / static_cast<T>(x.size()));
}

// sqrt(mean((pred - target)^2)) over every element.
template <typename T>
Var<T> rmse(const Var<T>& pred, const Var<T>& target) {
    if (pred.shape() != target.shape()) {
        throw DimensionError("rmse: " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
    }
    return sqrt(mean_all(square(sub(pred, target))));
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
    Tensor<T> out = x.value().reshaped(std::move(shape));
    auto xn = x.node();
    return make_result<T>(std::move(out), {x}, [xn](Node<T>& o) { detail::accumulate(xn, o.grad); });
}

template <typename T>
Var<T> permute(const Var<T>& x, const std::vector<std::size_t>& perm) {
    const Shape& in = x.shape();
    if (perm.size() != in.size()) {
        throw DimensionError("permute: order of rank " + std::to_string(perm.size()) +
                             " for tensor " + shape_str(in));
    }
    Shape out_shape(in.size());
    const auto in_strides = strides_of(in);
    std::vector<std::size_t> s(in.size());
    std::vector<bool> used(in.size(), false);
    for (std::size_t i = 0; i < perm.size(); ++i) {
        if (perm[i] >= in.size() || used[perm[i]]) {
            throw DimensionError("permute: invalid axis order");
        }
        used[perm[i]] = true;
        out_shape[i] = in[perm[i]];
        s[i] = in_strides[perm[i]];
    }
    Tensor<T> out(out_shape);
    const auto& xv = x.value();
    std::vector<std::size_t> zero(in.size(), 0);
    detail::for_each_strided(out_shape, s, zero, [&](std::size_t i, std::size_t ia, std::size_t) {
        out[i] = xv[ia];
    });
    auto xn = x.node();
    return make_result<T>(std::move(out), {x}, [xn, s, zero](Node<T>& o) {
        if (!xn->requires_grad) return;
        auto& g = xn->grad_buffer();
        detail::for_each_strided(o.value.shape(), s, zero, [&](std::size_t i, std::size_t ia, std::size_t) {
            g[ia] += o.grad[i];
        });
    });
}

// Contiguous range [start, start+len) along `axis`.
template <typename T>
Var<T> slice(const Var<T>& x, std::size_t axis, std::size_t start, std::size_t len) {
    const Shape& in = x.shape();
    if (axis >= in.size() || start + len > in[axis]) {
        throw DimensionError("slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                             ") on axis " + std::to_string(axis) + " of " + shape_str(in));
    }
    std::size_t outer = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= in[i];
    std::size_t inner = 1;
    for (std::size_t i = axis + 1; i < in.size(); ++i) inner *= in[i];
    Shape out_shape = in;
    out_shape[axis] = len;
    Tensor<T> out(out_shape);
    const auto& xv = x.value();
    const std::size_t span_in = in[axis] * inner;
    const std::size_t span_out = len * inner;
    for (std::size_t o = 0; o < outer; ++o) {
        std::copy_n(xv.data().begin() + static_cast<std::ptrdiff_t>(o * span_in + start * inner), span_out,
                    out.data().begin() + static_cast<std::ptrdiff_t>(o * span_out));
    }
    auto xn = x.node();
    return make_result<T>(std::move(out), {x}, [xn, outer, inner, span_in, span_out, start](Node<T>& o) {
        if (!xn->requires_grad) return;
        auto& g = xn->grad_buffer();
        for (std::size_t q = 0; q < outer; ++q) {
            for (std::size_t j = 0; j < span_out; ++j) {
                g[q * span_in + start * inner + j] += o.grad[q * span_out + j];
            }
        }
    });
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& xs, std::size_t axis) {
    if (xs.empty()) {
        throw DimensionError("concat: no inputs");
    }
    Shape out_shape = xs.front().shape();
    if (axis >= out_shape.size()) {
        throw DimensionError("concat: axis out of range for " + shape_str(out_shape));
    }
    out_shape[axis] = 0;
    for (const auto& x : xs) {
        Shape s = x.shape();
        if (s.size() != out_shape.size()) {
            throw DimensionError("concat: rank mismatch " + shape_str(s));
        }
        out_shape[axis] += s[axis];
        s[axis] = 0;
        Shape ref = out_shape;
        ref[axis] = 0;
        if (s != ref) {
            throw DimensionError("concat: incompatible shapes " + shape_str(xs.front().shape()) + " and " +
                                 shape_str(x.shape()));
        }
    }
    std::size_t outer = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= out_shape[i];
    std::size_t inner = 1;
    for (std::size_t i = axis + 1; i < out_shape.size(); ++i) inner *= out_shape[i];
    const std::size_t span_out = out_shape[axis] * inner;
    Tensor<T> out(out_shape);
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const auto& x : xs) {
        offsets.push_back(off);
        const std::size_t span_in = x.shape()[axis] * inner;
        const auto& xv = x.value();
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy_n(xv.data().begin() + static_cast<std::ptrdiff_t>(o * span_in), span_in,
                        out.data().begin() + static_cast<std::ptrdiff_t>(o * span_out + off));
        }
        off += span_in;
    }
    std::vector<std::shared_ptr<Node<T>>> nodes;
    for (const auto& x : xs) nodes.push_back(x.node());
    return make_result<T>(std::move(out), xs, [nodes, offsets, outer, span_out](Node<T>& o) {
        for (std::size_t k = 0; k < nodes.size(); ++k) {
            if (!nodes[k]->requires_grad) continue;
            auto& g = nodes[k]->grad_buffer();
            const std::size_t span_in = g.size() / outer;
            for (std::size_t q = 0; q < outer; ++q) {
                for (std::size_t j = 0; j < span_in; ++j) {
                    g[q * span_in + j] += o.grad[q * span_out + offsets[k] + j];
                }
            }
        }
    });
}

// Repeats a size-1 axis n times.
template <typename T>
Var<T> expand(const Var<T>& x, std::size_t axis, std::size_t n) {
    const Shape& in = x.shape();
    if (axis >= in.size() || in[axis] != 1) {
        throw DimensionError("expand: axis " + std::to_string(axis) + " of " + shape_str(in) + " is not 1");
    }
    Shape ref = in;
    ref[axis] = n;
    return add(x, constant(Tensor<T>(ref)));
}

// out[..., j] = x[..., index[j]], or 0 where index[j] < 0.
template <typename T>
Var<T> gather_last(const Var<T>& x, const std::vector<std::ptrdiff_t>& index) {
    const Shape& in = x.shape();
    if (in.empty()) {
        throw DimensionError("gather_last: scalar input");
    }
    const std::size_t n_in = in.back();
    for (auto j : index) {
        if (j >= static_cast<std::ptrdiff_t>(n_in)) {
            throw DimensionError("gather_last: index " + std::to_string(j) + " out of range for " + shape_str(in));
        }
    }
    const std::size_t rows = x.size() / std::max<std::size_t>(n_in, 1);
    Shape out_shape = in;
    out_shape.back() = index.size();
    Tensor<T> out(out_shape);
    const auto& xv = x.value();
    const std::size_t m = index.size();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < m; ++j) {
            if (index[j] >= 0) out[r * m + j] = xv[r * n_in + static_cast<std::size_t>(index[j])];
        }
    }
    auto xn = x.node();
    return make_result<T>(std::move(out), {x}, [xn, index, rows, n_in, m](Node<T>& o) {
        if (!xn->requires_grad) return;
        auto& g = xn->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < m; ++j) {
                if (index[j] >= 0) g[r * n_in + static_cast<std::size_t>(index[j])] += o.grad[r * m + j];
            }
        }
    });
}

/// Affine map over the last dimension: x[..., X] * w[X, Y] + b[Y].
/// `b` may be an undefined Var for a bias-free map.
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b = Var<T>()) {
    const Shape& xs = x.shape();
    const Shape& ws = w.shape();
    if (xs.empty() || ws.size() != 2 || xs.back() != ws[0]) {
        throw DimensionError("linear: input " + shape_str(xs) + " incompatible with weight " + shape_str(ws));
    }
    const std::size_t in_dim = ws[0];
    const std::size_t out_dim = ws[1];
    if (b.defined() && (b.shape().size() != 1 || b.shape()[0] != out_dim)) {
        throw DimensionError("linear: bias " + shape_str(b.shape()) + " incompatible with weight " + shape_str(ws));
    }
    const std::size_t rows = in_dim ? x.size() / in_dim : 0;
    Shape out_shape = xs;
    out_shape.back() = out_dim;
    Tensor<T> out(out_shape);
    {
        auto O = detail::mat(out.data().data(), rows, out_dim);
        O.noalias() = detail::cmat(x.value().data().data(), rows, in_dim) *
                      detail::cmat(w.value().data().data(), in_dim, out_dim);
        if (b.defined()) {
            O.rowwise() += detail::cmat(b.value().data().data(), 1, out_dim).row(0);
        }
    }
    std::vector<Var<T>> inputs{x, w};
    if (b.defined()) inputs.push_back(b);
    auto xn = x.node();
    auto wn = w.node();
    auto bn = b.defined() ? b.node() : nullptr;
    return make_result<T>(std::move(out), inputs, [xn, wn, bn, rows, in_dim, out_dim](Node<T>& o) {
        auto G = detail::cmat(o.grad.data().data(), rows, out_dim);
        if (xn->requires_grad) {
            detail::mat(xn->grad_buffer().data().data(), rows, in_dim).noalias() +=
                G * detail::cmat(wn->value.data().data(), in_dim, out_dim).transpose();
        }
        if (wn->requires_grad) {
            detail::mat(wn->grad_buffer().data().data(), in_dim, out_dim).noalias() +=
                detail::cmat(xn->value.data().data(), rows, in_dim).transpose() * G;
        }
        if (bn && bn->requires_grad) {
            detail::mat(bn->grad_buffer().data().data(), 1, out_dim).row(0) += G.colwise().sum();
        }
    });
}

// GeLU, tanh approximation (max deviation from the erf form is below 1e-3).
template <typename T>
Var<T> gelu(const Var<T>& x) {
    constexpr T c = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
    constexpr T a = static_cast<T>(0.044715);
    Tensor<T> out = x.value();
    for (auto& v : out.data()) {
        const T u = c * (v + a * v * v * v);
        v = T{0.5} * v * (T{1} + std::tanh(u));
    }
    auto xn = x.node();
    return make_result<T>(std::move(out), {x}, [xn](Node<T>& o) {
        if (!xn->requires_grad) return;
        auto& g = xn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const T v = xn->value[i];
            const T t = std::tanh(c * (v + a * v * v * v));
            const T d = T{0.5} * (T{1} + t) + T{0.5} * v * (T{1} - t * t) * c * (T{1} + T{3} * a * v * v);
            g[i] += o.grad[i] * d;
        }
    });
}

// Inverted dropout: survivors scaled by 1/(1-p) in train mode, identity otherwise.
template <typename T>
Var<T> dropout(const Var<T>& x, double p, Rng& rng, bool train) {
    if (p < 0.0 || p >= 1.0) {
        throw ConfigError("dropout probability must lie in [0,1), got " + std::to_string(p));
    }
    if (!train || p == 0.0) {
        return x;
    }
    Tensor<T> mask(x.shape());
    const T keep = static_cast<T>(1.0 / (1.0 - p));
    for (auto& m : mask.data()) {
        m = rng.bernoulli(1.0 - p) ? keep : T{0};
    }
    return mul(x, constant(std::move(mask)));
}

// Normalizes each row over the last dimension; gamma/beta have the size of
// that dimension.
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T{1e-5}) {
    const Shape& xs = x.shape();
    const std::size_t f = xs.back();
    if (gamma.size() != f || beta.size() != f) {
        throw DimensionError("layer_norm: affine size " + std::to_string(gamma.size()) + " for input " + shape_str(xs));
    }
    const std::size_t rows = x.size() / f;
    Tensor<T> out(xs);
    Tensor<T> xhat(xs);
    std::vector<T> inv_std(rows);
    const auto& xv = x.value();
    for (std::size_t r = 0; r < rows; ++r) {
        T mean{0};
        for (std::size_t j = 0; j < f; ++j) mean += xv[r * f + j];
        mean /= static_cast<T>(f);
        T var{0};
        for (std::size_t j = 0; j < f; ++j) {
            const T d = xv[r * f + j] - mean;
            var += d * d;
        }
        var /= static_cast<T>(f);
        inv_std[r] = T{1} / std::sqrt(var + eps);
        for (std::size_t j = 0; j < f; ++j) {
            const T h = (xv[r * f + j] - mean) * inv_std[r];
            xhat[r * f + j] = h;
            out[r * f + j] = h * gamma.value()[j] + beta.value()[j];
        }
    }
    auto xn = x.node();
    auto gn = gamma.node();
    auto bn = beta.node();
    return make_result<T>(std::move(out), {x, gamma, beta}, [xn, gn, bn, xhat, inv_std, rows, f](Node<T>& o) {
        const auto& g = o.grad;
        if (gn->requires_grad || bn->requires_grad) {
            auto* gg = gn->requires_grad ? &gn->grad_buffer() : nullptr;
            auto* gb = bn->requires_grad ? &bn->grad_buffer() : nullptr;
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t j = 0; j < f; ++j) {
                    if (gg) (*gg)[j] += g[r * f + j] * xhat[r * f + j];
                    if (gb) (*gb)[j] += g[r * f + j];
                }
            }
        }
        if (!xn->requires_grad) return;
        auto& gx = xn->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
            T sum_d{0};
            T sum_dx{0};
            for (std::size_t j = 0; j < f; ++j) {
                const T d = g[r * f + j] * gn->value[j];
                sum_d += d;
                sum_dx += d * xhat[r * f + j];
            }
            const T invf = T{1} / static_cast<T>(f);
            for (std::size_t j = 0; j < f; ++j) {
                const T d = g[r * f + j] * gn->value[j];
                gx[r * f + j] += inv_std[r] * (d - invf * sum_d - xhat[r * f + j] * invf * sum_dx);
            }
        }
    });
}

/// Normalizes every coordinate of the trailing dims across the leading
/// `batch_axes` dims. Train mode uses batch statistics and updates the running
/// estimates; eval mode uses the running estimates only.
template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Tensor<T>& running_mean,
                  Tensor<T>& running_var, std::size_t batch_axes, bool train, T momentum = T{0.1},
                  T eps = T{1e-5}) {
    const Shape& xs = x.shape();
    if (batch_axes == 0 || batch_axes >= xs.size()) {
        throw DimensionError("batch_norm: batch axes " + std::to_string(batch_axes) + " for input " + shape_str(xs));
    }
    std::size_t n = 1;
    for (std::size_t i = 0; i < batch_axes; ++i) n *= xs[i];
    const std::size_t f = n ? x.size() / n : 0;
    if (gamma.size() != f || beta.size() != f || running_mean.size() != f || running_var.size() != f) {
        throw DimensionError("batch_norm: parameters of size " + std::to_string(gamma.size()) +
                             " for feature size " + std::to_string(f));
    }
    if (train && (xs[0] < 2 || n < 2)) {
        throw StatisticsError("batch_norm: train mode needs at least 2 samples, got B=" + std::to_string(xs[0]));
    }
    const auto& xv = x.value();
    std::vector<T> mean(f, T{0});
    std::vector<T> inv_std(f);
    if (train) {
        std::vector<T> var(f, T{0});
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < f; ++j) mean[j] += xv[r * f + j];
        for (auto& m : mean) m /= static_cast<T>(n);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < f; ++j) {
                const T d = xv[r * f + j] - mean[j];
                var[j] += d * d;
            }
        for (std::size_t j = 0; j < f; ++j) {
            var[j] /= static_cast<T>(n);
            inv_std[j] = T{1} / std::sqrt(var[j] + eps);
            running_mean[j] = (T{1} - momentum) * running_mean[j] + momentum * mean[j];
            const T unbiased = var[j] * static_cast<T>(n) / static_cast<T>(n - 1);
            running_var[j] = (T{1} - momentum) * running_var[j] + momentum * unbiased;
        }
    } else {
        for (std::size_t j = 0; j < f; ++j) {
            mean[j] = running_mean[j];
            inv_std[j] = T{1} / std::sqrt(running_var[j] + eps);
        }
    }
    Tensor<T> out(xs);
    Tensor<T> xhat(xs);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < f; ++j) {
            const T h = (xv[r * f + j] - mean[j]) * inv_std[j];
            xhat[r * f + j] = h;
            out[r * f + j] = h * gamma.value()[j] + beta.value()[j];
        }
    }
    auto xn = x.node();
    auto gn = gamma.node();
    auto bn = beta.node();
    return make_result<T>(std::move(out), {x, gamma, beta}, [xn, gn, bn, xhat, inv_std, n, f, train](Node<T>& o) {
        const auto& g = o.grad;
        auto* gg = gn->requires_grad ? &gn->grad_buffer() : nullptr;
        auto* gb = bn->requires_grad ? &bn->grad_buffer() : nullptr;
        std::vector<T> sum_d(f, T{0});
        std::vector<T> sum_dx(f, T{0});
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t j = 0; j < f; ++j) {
                const T gi = g[r * f + j];
                if (gg) (*gg)[j] += gi * xhat[r * f + j];
                if (gb) (*gb)[j] += gi;
                const T d = gi * gn->value[j];
                sum_d[j] += d;
                sum_dx[j] += d * xhat[r * f + j];
            }
        }
        if (!xn->requires_grad) return;
        auto& gx = xn->grad_buffer();
        const T invn = T{1} / static_cast<T>(n);
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t j = 0; j < f; ++j) {
                const T d = g[r * f + j] * gn->value[j];
                if (train) {
                    gx[r * f + j] += inv_std[j] * (d - invn * sum_d[j] - xhat[r * f + j] * invn * sum_dx[j]);
                } else {
                    gx[r * f + j] += inv_std[j] * d;
                }
            }
        }
    });
}

/// Unmasked scaled dot-product attention, split into `heads` heads over the
/// last dimension. q: [N,Tq,D], k,v: [N,Tk,D] -> [N,Tq,D]. When `probs` is
/// non-null it receives the attention weights [N,heads,Tq,Tk].
template <typename T>
Var<T> attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, std::size_t heads,
                 Tensor<T>* probs = nullptr) {
    const Shape& qs = q.shape();
    const Shape& ks = k.shape();
    if (qs.size() != 3 || ks.size() != 3 || v.shape() != ks || qs[0] != ks[0] || qs[2] != ks[2]) {
        throw DimensionError("attention: q " + shape_str(qs) + ", k " + shape_str(ks) + ", v " +
                             shape_str(v.shape()));
    }
    if (heads == 0 || qs[2] % heads != 0) {
        throw ConfigError("attention: " + std::to_string(heads) + " heads do not divide model dim " +
                          std::to_string(qs[2]));
    }
    const std::size_t n = qs[0];
    const std::size_t tq = qs[1];
    const std::size_t tk = ks[1];
    const std::size_t d = qs[2];
    const std::size_t dh = d / heads;
    const T sc = T{1} / std::sqrt(static_cast<T>(dh));
    Tensor<T> p(Shape{n, heads, tq, tk});
    Tensor<T> out(qs);
    const T* qv = q.value().data().data();
    const T* kv = k.value().data().data();
    const T* vv = v.value().data().data();
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
            auto P = detail::mat(p.data().data() + (b * heads + h) * tq * tk, tq, tk);
            P.noalias() = detail::cstrided(qv + b * tq * d + h * dh, tq, dh, d) *
                          detail::cstrided(kv + b * tk * d + h * dh, tk, dh, d).transpose();
            P *= sc;
            for (Eigen::Index i = 0; i < P.rows(); ++i) {
                auto row = P.row(i);
                row = (row.array() - row.maxCoeff()).exp().matrix();
                row /= row.sum();
            }
            detail::strided(out.data().data() + b * tq * d + h * dh, tq, dh, d).noalias() =
                P * detail::cstrided(vv + b * tk * d + h * dh, tk, dh, d);
        }
    }
    if (probs) *probs = p;
    auto qn = q.node();
    auto kn = k.node();
    auto vn = v.node();
    return make_result<T>(std::move(out), {q, k, v}, [qn, kn, vn, p, n, heads, tq, tk, d, dh, sc](Node<T>& o) {
        const T* g = o.grad.data().data();
        T* gq = qn->requires_grad ? qn->grad_buffer().data().data() : nullptr;
        T* gk = kn->requires_grad ? kn->grad_buffer().data().data() : nullptr;
        T* gv = vn->requires_grad ? vn->grad_buffer().data().data() : nullptr;
        const T* qv = qn->value.data().data();
        const T* kv = kn->value.data().data();
        const T* vv = vn->value.data().data();
        detail::RowMat<T> ds(tq, tk);
        for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t h = 0; h < heads; ++h) {
                const std::size_t qo = b * tq * d + h * dh;
                const std::size_t ko = b * tk * d + h * dh;
                auto P = detail::cmat(p.data().data() + (b * heads + h) * tq * tk, tq, tk);
                auto G = detail::cstrided(g + qo, tq, dh, d);
                if (gv) detail::strided(gv + ko, tk, dh, d).noalias() += P.transpose() * G;
                if (!gq && !gk) continue;
                ds.noalias() = G * detail::cstrided(vv + ko, tk, dh, d).transpose();
                const auto dot = (ds.array() * P.array()).rowwise().sum().eval();
                ds = (P.array() * (ds.array().colwise() - dot) * sc).matrix();
                if (gq) detail::strided(gq + qo, tq, dh, d).noalias() += ds * detail::cstrided(kv + ko, tk, dh, d);
                if (gk) detail::strided(gk + ko, tk, dh, d).noalias() += ds.transpose() * detail::cstrided(qv + qo, tq, dh, d);
            }
        }
    });
}

/// Population standard deviation over the last dimension restricted to
/// positions where mask == 1. Rows whose deviation falls below `eps` yield 1
/// (and no gradient); `fallback`, when non-null, receives one flag per row.
template <typename T>
Var<T> masked_row_std(const Var<T>& x, const Tensor<T>& mask, T eps, std::vector<bool>* fallback = nullptr) {
    if (mask.shape() != x.shape()) {
        throw DimensionError("masked_row_std: mask " + shape_str(mask.shape()) + " for input " + shape_str(x.shape()));
    }
    const std::size_t f = x.shape().back();
    const std::size_t rows = x.size() / f;
    Shape out_shape = x.shape();
    out_shape.back() = 1;
    Tensor<T> out(out_shape);
    std::vector<T> means(rows);
    std::vector<T> counts(rows);
    std::vector<bool> flat(rows, false);
    const auto& xv = x.value();
    for (std::size_t r = 0; r < rows; ++r) {
        T cnt{0};
        T s{0};
        for (std::size_t j = 0; j < f; ++j) {
            cnt += mask[r * f + j];
            s += mask[r * f + j] * xv[r * f + j];
        }
        if (cnt == T{0}) {
            throw DimensionError("masked_row_std: row " + std::to_string(r) + " has no unmasked positions");
        }
        const T mean = s / cnt;
        T var{0};
        for (std::size_t j = 0; j < f; ++j) {
            const T dv = xv[r * f + j] - mean;
            var += mask[r * f + j] * dv * dv;
        }
        const T sd = std::sqrt(var / cnt);
        means[r] = mean;
        counts[r] = cnt;
        if (sd < eps) {
            flat[r] = true;
            out[r] = T{1};
        } else {
            out[r] = sd;
        }
    }
    if (fallback) *fallback = flat;
    auto xn = x.node();
    Tensor<T> sd_vals = out;
    return make_result<T>(std::move(out), {x}, [xn, mask, means, counts, flat, sd_vals, rows, f](Node<T>& o) {
        if (!xn->requires_grad) return;
        auto& g = xn->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
            if (flat[r]) continue;
            const T coef = o.grad[r] / (counts[r] * sd_vals[r]);
            for (std::size_t j = 0; j < f; ++j) {
                g[r * f + j] += coef * mask[r * f + j] * (xn->value[r * f + j] - means[r]);
            }
        }
    });
}

}  // namespace mrt
