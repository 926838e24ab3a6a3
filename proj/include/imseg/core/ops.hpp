#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "imseg/core/errors.hpp"
#include "imseg/core/rng.hpp"
#include "imseg/core/tensor.hpp"

namespace imseg {

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <class T>
ConstMatMap<T> cmap(const std::vector<T>& v, std::size_t r, std::size_t c) {
    return ConstMatMap<T>(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}
template <class T>
Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> crow(const std::vector<T>& v, std::size_t n) {
    return Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(v.data(), static_cast<Eigen::Index>(n));
}
template <class T>
MatMap<T> mmap(std::vector<T>& v, std::size_t r, std::size_t c) {
    return MatMap<T>(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

template <class T>
void require_2d(const Tensor<T>& t, const char* op) {
    if (t.rank() != 2)
        throw DimensionError(std::string(op) + " expects a 2-D tensor, got " + shape_str(t.shape()));
}

// Binary broadcasting: equal shapes, a scalar, or one shape a suffix of the other.
inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    if (a == b)
        return a;
    const auto na = shape_size(a), nb = shape_size(b);
    auto suffix = [](const Shape& big, const Shape& small) {
        if (small.size() > big.size())
            return false;
        return std::equal(small.rbegin(), small.rend(), big.rbegin());
    };
    if (nb == 1 || (na >= nb && suffix(a, b)))
        return a;
    if (na == 1 || (nb >= na && suffix(b, a)))
        return b;
    throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " +
                         shape_str(b));
}

template <class T, class F, class DA, class DB>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, const char* name, F f, DA da, DB db) {
    Shape out_shape = broadcast_shape(a.shape(), b.shape(), name);
    const std::size_t n = shape_size(out_shape), na = a.size(), nb = b.size();
    std::vector<T> out(n);
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < n; ++i)
        out[i] = f(av[i % na], bv[i % nb]);
    return Tensor<T>::make(std::move(out_shape), std::move(out), {a, b}, [n, na, nb, da, db](TensorNode<T>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
            auto& g = pa.ensure_grad();
            for (std::size_t i = 0; i < n; ++i)
                g[i % na] += self.grad[i] * da(pa.value[i % na], pb.value[i % nb]);
        }
        if (pb.requires_grad) {
            auto& g = pb.ensure_grad();
            for (std::size_t i = 0; i < n; ++i)
                g[i % nb] += self.grad[i] * db(pa.value[i % na], pb.value[i % nb]);
        }
    });
}

// `df(x, y)` is the derivative given input x and output y.
template <class T, class F, class DF>
Tensor<T> unary(const Tensor<T>& x, F f, DF df) {
    const auto& xv = x.values();
    std::vector<T> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i)
        out[i] = f(xv[i]);
    return Tensor<T>::make(x.shape(), std::move(out), {x}, [df](TensorNode<T>& self) {
        auto& p = *self.parents[0];
        auto& g = p.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i)
            g[i] += self.grad[i] * df(p.value[i], self.value[i]);
    });
}

} // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

/// C = A·B for A [m×k], B [k×n].
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_2d(a, "matmul");
    detail::require_2d(b, "matmul");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k)
        throw DimensionError("matmul: inner extents differ, " + shape_str(a.shape()) + " · " +
                             shape_str(b.shape()));
    std::vector<T> out(m * n);
    detail::mmap(out, m, n).noalias() = detail::cmap(a.values(), m, k) * detail::cmap(b.values(), k, n);
    return Tensor<T>::make({m, n}, std::move(out), {a, b}, [m, k, n](TensorNode<T>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        auto dc = detail::cmap(self.grad, m, n);
        if (pa.requires_grad)
            detail::mmap(pa.ensure_grad(), m, k).noalias() += dc * detail::cmap(pb.value, k, n).transpose();
        if (pb.requires_grad)
            detail::mmap(pb.ensure_grad(), k, n).noalias() += detail::cmap(pa.value, m, k).transpose() * dc;
    });
}

/// C = A·Bᵀ for A [m×k], B [n×k].
template <class T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_2d(a, "matmul_nt");
    detail::require_2d(b, "matmul_nt");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
    if (b.dim(1) != k)
        throw DimensionError("matmul_nt: inner extents differ, " + shape_str(a.shape()) + " · " +
                             shape_str(b.shape()) + "ᵀ");
    std::vector<T> out(m * n);
    detail::mmap(out, m, n).noalias() =
        detail::cmap(a.values(), m, k) * detail::cmap(b.values(), n, k).transpose();
    return Tensor<T>::make({m, n}, std::move(out), {a, b}, [m, k, n](TensorNode<T>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        auto dc = detail::cmap(self.grad, m, n);
        if (pa.requires_grad)
            detail::mmap(pa.ensure_grad(), m, k).noalias() += dc * detail::cmap(pb.value, n, k);
        if (pb.requires_grad)
            detail::mmap(pb.ensure_grad(), n, k).noalias() += dc.transpose() * detail::cmap(pa.value, m, k);
    });
}

/// y = x·Wᵀ + b with W stored [out×in]; `bias` may be an empty tensor.
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
    detail::require_2d(x, "linear");
    detail::require_2d(weight, "linear");
    const std::size_t m = x.dim(0), in = x.dim(1), out_dim = weight.dim(0);
    if (weight.dim(1) != in)
        throw DimensionError("linear: input " + shape_str(x.shape()) + " vs weight " +
                             shape_str(weight.shape()));
    const bool has_bias = bias.size() > 0;
    if (has_bias && bias.size() != out_dim)
        throw DimensionError("linear: bias " + shape_str(bias.shape()) + " vs weight " +
                             shape_str(weight.shape()));
    std::vector<T> out(m * out_dim);
    auto y = detail::mmap(out, m, out_dim);
    y.noalias() = detail::cmap(x.values(), m, in) * detail::cmap(weight.values(), out_dim, in).transpose();
    if (has_bias)
        y.rowwise() += detail::crow(bias.values(), out_dim);
    std::vector<Tensor<T>> parents{x, weight};
    if (has_bias)
        parents.push_back(bias);
    return Tensor<T>::make({m, out_dim}, std::move(out), std::move(parents),
                           [m, in, out_dim, has_bias](TensorNode<T>& self) {
                               auto& px = *self.parents[0];
                               auto& pw = *self.parents[1];
                               auto dy = detail::cmap(self.grad, m, out_dim);
                               if (px.requires_grad)
                                   detail::mmap(px.ensure_grad(), m, in).noalias() +=
                                       dy * detail::cmap(pw.value, out_dim, in);
                               if (pw.requires_grad)
                                   detail::mmap(pw.ensure_grad(), out_dim, in).noalias() +=
                                       dy.transpose() * detail::cmap(px.value, m, in);
                               if (has_bias && self.parents[2]->requires_grad)
                                   detail::mmap(self.parents[2]->ensure_grad(), 1, out_dim) += dy.colwise().sum();
                           });
}

template <class T>
Tensor<T> transpose(const Tensor<T>& x) {
    detail::require_2d(x, "transpose");
    const std::size_t r = x.dim(0), c = x.dim(1);
    std::vector<T> out(r * c);
    detail::mmap(out, c, r) = detail::cmap(x.values(), r, c).transpose();
    return Tensor<T>::make({c, r}, std::move(out), {x}, [r, c](TensorNode<T>& self) {
        detail::mmap(self.parents[0]->ensure_grad(), r, c) += detail::cmap(self.grad, c, r).transpose();
    });
}

// ---------------------------------------------------------------------------
// Elementwise

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary(a, b, "add", [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
                          [](T, T) { return T(1); });
}
template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary(a, b, "sub", [](T x, T y) { return x - y; }, [](T, T) { return T(1); },
                          [](T, T) { return T(-1); });
}
template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary(a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y) { return y; },
                          [](T x, T) { return x; });
}
template <class T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary(a, b, "div", [](T x, T y) { return x / y; }, [](T, T y) { return T(1) / y; },
                          [](T x, T y) { return -x / (y * y); });
}

template <class T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <class T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <class T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }

template <class T>
Tensor<T> scale(const Tensor<T>& x, T s) {
    return detail::unary(x, [s](T v) { return v * s; }, [s](T, T) { return s; });
}
template <class T>
Tensor<T> add_scalar(const Tensor<T>& x, T s) {
    return detail::unary(x, [s](T v) { return v + s; }, [](T, T) { return T(1); });
}

/// GELU, tanh approximation: 0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³))).
template <class T>
Tensor<T> gelu(const Tensor<T>& x) {
    constexpr T k = T(0.7978845608028654); // √(2/π)
    constexpr T c = T(0.044715);
    using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
    const Eigen::Map<const Arr> v(x.data().data(), static_cast<Eigen::Index>(x.size()));
    std::vector<T> th(x.size()), out(x.size());
    Eigen::Map<Arr> t(th.data(), static_cast<Eigen::Index>(th.size()));
    t = (k * (v + c * v.cube())).tanh();
    Eigen::Map<Arr>(out.data(), static_cast<Eigen::Index>(out.size())) = T(0.5) * v * (T(1) + t);
    return Tensor<T>::make(x.shape(), std::move(out), {x}, [th = std::move(th)](TensorNode<T>& self) {
        auto& p = *self.parents[0];
        auto& g = p.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const T v = p.value[i];
            const T d = T(0.5) * (T(1) + th[i]) + T(0.5) * v * (T(1) - th[i] * th[i]) * k * (T(1) + T(3) * c * v * v);
            g[i] += self.grad[i] * d;
        }
    });
}

template <class T>
Tensor<T> sin(const Tensor<T>& x) {
    return detail::unary(x, [](T v) { return std::sin(v); }, [](T v, T) { return std::cos(v); });
}
template <class T>
Tensor<T> cos(const Tensor<T>& x) {
    return detail::unary(x, [](T v) { return std::cos(v); }, [](T v, T) { return -std::sin(v); });
}
template <class T>
Tensor<T> exp(const Tensor<T>& x) {
    return detail::unary(x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}
template <class T>
Tensor<T> log(const Tensor<T>& x) {
    for (std::size_t i = 0; i < x.size(); ++i)
        if (!(x[i] > T(0)))
            throw DomainError("log of non-positive value " + std::to_string(static_cast<double>(x[i])) +
                              " at index " + std::to_string(i));
    return detail::unary(x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

/// Clamp to [lo, hi]; the gradient is zero where the bound is active.
template <class T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
    return detail::unary(
        x, [lo, hi](T v) { return std::min(std::max(v, lo), hi); },
        [lo, hi](T v, T) { return (v < lo || v > hi) ? T(0) : T(1); });
}

// ---------------------------------------------------------------------------
// Reductions and normalization

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
    T s = 0;
    for (T v : x.values())
        s += v;
    return Tensor<T>::make({}, {s}, {x}, [](TensorNode<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (auto& v : g)
            v += self.grad[0];
    });
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
    return scale(sum(x), T(1) / static_cast<T>(std::max<std::size_t>(1, x.size())));
}

/// Column sums of a 2-D tensor: [m×n] -> [n].
template <class T>
Tensor<T> sum_rows(const Tensor<T>& x) {
    detail::require_2d(x, "sum_rows");
    const std::size_t m = x.dim(0), n = x.dim(1);
    std::vector<T> out(n, T(0));
    detail::mmap(out, 1, n) = detail::cmap(x.values(), m, n).colwise().sum();
    return Tensor<T>::make({n}, std::move(out), {x}, [m, n](TensorNode<T>& self) {
        detail::mmap(self.parents[0]->ensure_grad(), m, n).rowwise() += detail::crow(self.grad, n);
    });
}

/// Softmax along `axis` (negative counts from the back), max-shifted.
template <class T>
Tensor<T> softmax(const Tensor<T>& x, int axis = -1) {
    const int r = static_cast<int>(x.rank());
    if (r == 0)
        throw DimensionError("softmax of a scalar");
    if (axis < 0)
        axis += r;
    if (axis < 0 || axis >= r)
        throw DimensionError("softmax axis " + std::to_string(axis) + " out of range for " + shape_str(x.shape()));
    std::size_t outer = 1, inner = 1;
    const std::size_t len = x.dim(axis);
    for (int i = 0; i < axis; ++i)
        outer *= x.dim(i);
    for (int i = axis + 1; i < r; ++i)
        inner *= x.dim(i);
    const auto& xv = x.values();
    std::vector<T> out(xv.size());
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            T mx = xv[base];
            for (std::size_t k = 1; k < len; ++k)
                mx = std::max(mx, xv[base + k * inner]);
            T s = 0;
            for (std::size_t k = 0; k < len; ++k) {
                out[base + k * inner] = std::exp(xv[base + k * inner] - mx);
                s += out[base + k * inner];
            }
            for (std::size_t k = 0; k < len; ++k)
                out[base + k * inner] /= s;
        }
    return Tensor<T>::make(x.shape(), std::move(out), {x}, [outer, inner, len](TensorNode<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        const auto& y = self.value;
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t in = 0; in < inner; ++in) {
                const std::size_t base = o * len * inner + in;
                T dot = 0;
                for (std::size_t k = 0; k < len; ++k)
                    dot += self.grad[base + k * inner] * y[base + k * inner];
                for (std::size_t k = 0; k < len; ++k)
                    g[base + k * inner] += y[base + k * inner] * (self.grad[base + k * inner] - dot);
            }
    });
}

/// Normalizes each row (last axis) to zero mean, unit variance, then applies
/// gain and bias of extent cols().
template <class T>
Tensor<T> layernorm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps = T(1e-5)) {
    const std::size_t n = x.cols(), m = x.rows();
    if (gain.size() != n || bias.size() != n)
        throw DimensionError("layernorm: gain/bias " + shape_str(gain.shape()) + "/" + shape_str(bias.shape()) +
                             " vs input " + shape_str(x.shape()));
    const auto& xv = x.values();
    std::vector<T> out(xv.size()), xhat(xv.size()), inv_std(m);
    for (std::size_t i = 0; i < m; ++i) {
        const T* row = xv.data() + i * n;
        T mu = 0;
        for (std::size_t j = 0; j < n; ++j)
            mu += row[j];
        mu /= static_cast<T>(n);
        T var = 0;
        for (std::size_t j = 0; j < n; ++j)
            var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<T>(n);
        inv_std[i] = T(1) / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j) {
            xhat[i * n + j] = (row[j] - mu) * inv_std[i];
            out[i * n + j] = xhat[i * n + j] * gain[j] + bias[j];
        }
    }
    return Tensor<T>::make(
        x.shape(), std::move(out), {x, gain, bias},
        [m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](TensorNode<T>& self) {
            auto& px = *self.parents[0];
            auto& pg = *self.parents[1];
            auto& pb = *self.parents[2];
            const auto& dy = self.grad;
            if (pg.requires_grad) {
                auto& g = pg.ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j)
                        g[j] += dy[i * n + j] * xhat[i * n + j];
            }
            if (pb.requires_grad) {
                auto& g = pb.ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j)
                        g[j] += dy[i * n + j];
            }
            if (px.requires_grad) {
                auto& g = px.ensure_grad();
                for (std::size_t i = 0; i < m; ++i) {
                    T mean_d = 0, mean_dx = 0;
                    for (std::size_t j = 0; j < n; ++j) {
                        const T d = dy[i * n + j] * pg.value[j];
                        mean_d += d;
                        mean_dx += d * xhat[i * n + j];
                    }
                    mean_d /= static_cast<T>(n);
                    mean_dx /= static_cast<T>(n);
                    for (std::size_t j = 0; j < n; ++j) {
                        const T d = dy[i * n + j] * pg.value[j];
                        g[i * n + j] += inv_std[i] * (d - mean_d - xhat[i * n + j] * mean_dx);
                    }
                }
            }
        });
}

/// Inverted dropout. Identity (the same tensor) when not training or p == 0.
template <class T>
Tensor<T> dropout(const Tensor<T>& x, double p, Rng& rng, bool training) {
    if (!(p >= 0.0 && p < 1.0))
        throw ParameterError("dropout rate must lie in [0, 1), got " + std::to_string(p));
    if (!training || p == 0.0)
        return x;
    const T keep_scale = T(1.0 / (1.0 - p));
    // Four 16-bit draws per hash; an element is kept when its draw is >= p·2^16.
    const auto threshold = static_cast<std::uint32_t>(std::ceil(p * 65536.0));
    std::vector<T> mask(x.size());
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (i % 4 == 0)
            bits = rng.next_u64();
        mask[i] = static_cast<std::uint32_t>(bits & 0xffff) >= threshold ? keep_scale : T(0);
        bits >>= 16;
    }
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = x[i] * mask[i];
    return Tensor<T>::make(x.shape(), std::move(out), {x}, [mask = std::move(mask)](TensorNode<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i)
            g[i] += self.grad[i] * mask[i];
    });
}

// ---------------------------------------------------------------------------
// Shape manipulation

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    if (shape_size(shape) != x.size())
        throw DimensionError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
    return Tensor<T>::make(std::move(shape), x.values(), {x}, [](TensorNode<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i)
            g[i] += self.grad[i];
    });
}

/// Concatenates 2-D tensors with equal row counts along columns.
template <class T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
    if (parts.empty())
        throw DimensionError("concat_cols of nothing");
    const std::size_t m = parts[0].rows();
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const auto& p : parts) {
        detail::require_2d(p, "concat_cols");
        if (p.rows() != m)
            throw DimensionError("concat_cols: row counts " + std::to_string(m) + " and " + std::to_string(p.rows()));
        widths.push_back(p.cols());
        total += p.cols();
    }
    std::vector<T> out(m * total);
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto& v = parts[k].values();
        for (std::size_t i = 0; i < m; ++i)
            std::copy_n(v.data() + i * widths[k], widths[k], out.data() + i * total + off);
        off += widths[k];
    }
    return Tensor<T>::make({m, total}, std::move(out), parts, [m, total, widths](TensorNode<T>& self) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < widths.size(); ++k) {
            auto& p = *self.parents[k];
            if (p.requires_grad) {
                auto& g = p.ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < widths[k]; ++j)
                        g[i * widths[k] + j] += self.grad[i * total + off + j];
            }
            off += widths[k];
        }
    });
}

/// Stacks 2-D tensors with equal column counts along rows.
template <class T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
    if (parts.empty())
        throw DimensionError("concat_rows of nothing");
    const std::size_t n = parts[0].cols();
    std::size_t m = 0;
    std::vector<std::size_t> offsets;
    std::vector<T> out;
    for (const auto& p : parts) {
        detail::require_2d(p, "concat_rows");
        if (p.cols() != n)
            throw DimensionError("concat_rows: column counts " + std::to_string(n) + " and " + std::to_string(p.cols()));
        offsets.push_back(out.size());
        out.insert(out.end(), p.values().begin(), p.values().end());
        m += p.rows();
    }
    return Tensor<T>::make({m, n}, std::move(out), parts, [offsets](TensorNode<T>& self) {
        for (std::size_t k = 0; k < offsets.size(); ++k) {
            auto& p = *self.parents[k];
            if (!p.requires_grad)
                continue;
            auto& g = p.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i)
                g[i] += self.grad[offsets[k] + i];
        }
    });
}

/// Columns [begin, end) of a 2-D tensor.
template <class T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t begin, std::size_t end) {
    detail::require_2d(x, "slice_cols");
    const std::size_t m = x.dim(0), n = x.dim(1);
    if (begin > end || end > n)
        throw DimensionError("slice_cols [" + std::to_string(begin) + ", " + std::to_string(end) + ") of " +
                             shape_str(x.shape()));
    const std::size_t w = end - begin;
    std::vector<T> out(m * w);
    for (std::size_t i = 0; i < m; ++i)
        std::copy_n(x.values().data() + i * n + begin, w, out.data() + i * w);
    return Tensor<T>::make({m, w}, std::move(out), {x}, [m, n, w, begin](TensorNode<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j)
                g[i * n + begin + j] += self.grad[i * w + j];
    });
}

/// Rows `index` of a 2-D tensor, in the given order.
template <class T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::size_t> index) {
    detail::require_2d(x, "gather_rows");
    const std::size_t m = x.dim(0), n = x.dim(1);
    std::vector<T> out(index.size() * n);
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= m)
            throw ContractError("gather_rows: index " + std::to_string(index[i]) + " out of range " + std::to_string(m));
        std::copy_n(x.values().data() + index[i] * n, n, out.data() + i * n);
    }
    std::vector<std::size_t> idx(index.begin(), index.end());
    const std::size_t count = idx.size();
    return Tensor<T>::make({count, n}, std::move(out), {x}, [n, idx = std::move(idx)](TensorNode<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (std::size_t j = 0; j < n; ++j)
                g[idx[i] * n + j] += self.grad[i * n + j];
    });
}

/// Repeats a vector of extent n as m rows: [n] -> [m×n].
template <class T>
Tensor<T> broadcast_rows(const Tensor<T>& v, std::size_t m) {
    const std::size_t n = v.size();
    std::vector<T> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        std::copy_n(v.values().data(), n, out.data() + i * n);
    return Tensor<T>::make({m, n}, std::move(out), {v}, [m, n](TensorNode<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
                g[j] += self.grad[i * n + j];
    });
}

} // namespace imseg
