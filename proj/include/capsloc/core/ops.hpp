#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "capsloc/core/gemm.hpp"
#include "capsloc/core/tape.hpp"
#include "capsloc/core/tensor.hpp"

namespace capsloc::ops {

namespace detail {

template <class T>
inline void check_same_shape(Tensor<T> a, Tensor<T> b,
                             const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

struct AxisSplit {
  std::size_t outer, n, inner;
  int axis;
};

inline AxisSplit split_axis(const Shape& s, int axis) {
  int rank = static_cast<int>(s.size());
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank)
    throw DimensionError("axis " + std::to_string(axis) +
                         " out of range for shape " + shape_str(s));
  AxisSplit r{1, static_cast<std::size_t>(s[static_cast<std::size_t>(axis)]),
              1, axis};
  for (int a = 0; a < axis; ++a) r.outer *= static_cast<std::size_t>(s[static_cast<std::size_t>(a)]);
  for (int a = axis + 1; a < rank; ++a) r.inner *= static_cast<std::size_t>(s[static_cast<std::size_t>(a)]);
  return r;
}

inline Shape drop_axis(const Shape& s, int axis) {
  if (axis < 0) axis += static_cast<int>(s.size());
  Shape out;
  for (int a = 0; a < static_cast<int>(s.size()); ++a)
    if (a != axis) out.push_back(s[static_cast<std::size_t>(a)]);
  if (out.empty()) out.push_back(1);
  return out;
}

}  // namespace detail

/// C[M,N] = A[M,K] * B[K,N]
template <class T>
Tensor<T> matmul(Tape<T>* tape, Tensor<T> a, Tensor<T> b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> c({m, n});
  gemm(false, false, m, n, k, T(1), a.raw(), k, b.raw(), n, T(0), c.raw(), n);
  if (taped(tape, a, b)) {
    c.set_requires_grad(true);
    tape->record("matmul", [a, b, c, m, k, n]() mutable {
      if (a.requires_grad())
        gemm(false, true, m, k, n, T(1), c.grad().data(), n, b.raw(), n, T(1),
             a.grad().data(), k);
      if (b.requires_grad())
        gemm(true, false, k, n, m, T(1), a.raw(), k, c.grad().data(), n, T(1),
             b.grad().data(), n);
    });
  }
  return c;
}

template <class T>
Tensor<T> add(Tape<T>* tape, Tensor<T> a, Tensor<T> b) {
  detail::check_same_shape(a, b, "add");
  Tensor<T> y(a.shape());
  const T* pa = a.raw();
  const T* pb = b.raw();
  T* py = y.raw();
  for (std::size_t i = 0; i < y.size(); ++i) py[i] = pa[i] + pb[i];
  if (taped(tape, a, b)) {
    y.set_requires_grad(true);
    tape->record("add", [a, b, y]() mutable {
      auto g = y.grad();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return y;
}

template <class T>
Tensor<T> mul(Tape<T>* tape, Tensor<T> a, Tensor<T> b) {
  detail::check_same_shape(a, b, "mul");
  Tensor<T> y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i)
    y.raw()[i] = a.raw()[i] * b.raw()[i];
  if (taped(tape, a, b)) {
    y.set_requires_grad(true);
    tape->record("mul", [a, b, y]() mutable {
      auto g = y.grad();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b.raw()[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a.raw()[i];
      }
    });
  }
  return y;
}

/// x[N,D] + bias[D], broadcast over rows.
template <class T>
Tensor<T> add_rowvec(Tape<T>* tape, Tensor<T> x, Tensor<T> bias) {
  if (x.rank() != 2 || bias.rank() != 1 || x.dim(1) != bias.dim(0))
    throw DimensionError("add_rowvec: shapes " + shape_str(x.shape()) + " + " +
                         shape_str(bias.shape()));
  const int n = x.dim(0), d = x.dim(1);
  Tensor<T> y(x.shape());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      y.raw()[i * d + j] = x.raw()[i * d + j] + bias.raw()[j];
  if (taped(tape, x, bias)) {
    y.set_requires_grad(true);
    tape->record("add_rowvec", [x, bias, y, n, d]() mutable {
      auto g = y.grad();
      if (x.requires_grad()) {
        auto gx = x.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (bias.requires_grad()) {
        auto gb = bias.grad();
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < d; ++j) gb[j] += g[static_cast<std::size_t>(i) * d + j];
      }
    });
  }
  return y;
}

/// x[N,C,H,W] + bias[C], broadcast over batch and space.
template <class T>
Tensor<T> add_channel_bias(Tape<T>* tape, Tensor<T> x,
                           Tensor<T> bias) {
  if (x.rank() != 4 || bias.rank() != 1 || x.dim(1) != bias.dim(0))
    throw DimensionError("add_channel_bias: shapes " + shape_str(x.shape()) +
                         " + " + shape_str(bias.shape()));
  const std::size_t n = static_cast<std::size_t>(x.dim(0));
  const std::size_t c = static_cast<std::size_t>(x.dim(1));
  const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T b = bias.raw()[ch];
      const T* px = x.raw() + (i * c + ch) * hw;
      T* py = y.raw() + (i * c + ch) * hw;
      for (std::size_t p = 0; p < hw; ++p) py[p] = px[p] + b;
    }
  if (taped(tape, x, bias)) {
    y.set_requires_grad(true);
    tape->record("add_channel_bias", [x, bias, y, n, c, hw]() mutable {
      auto g = y.grad();
      if (x.requires_grad()) {
        auto gx = x.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (bias.requires_grad()) {
        auto gb = bias.grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t ch = 0; ch < c; ++ch) {
            const T* pg = g.data() + (i * c + ch) * hw;
            T acc = 0;
            for (std::size_t p = 0; p < hw; ++p) acc += pg[p];
            gb[ch] += acc;
          }
      }
    });
  }
  return y;
}

template <class T>
Tensor<T> mul_scalar(Tape<T>* tape, Tensor<T> x, T s) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y.raw()[i] = x.raw()[i] * s;
  if (taped(tape, x)) {
    y.set_requires_grad(true);
    tape->record("mul_scalar", [x, y, s]() mutable {
      if (!x.requires_grad()) return;
      auto g = y.grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += s * g[i];
    });
  }
  return y;
}

template <class T>
Tensor<T> relu(Tape<T>* tape, Tensor<T> x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i)
    y.raw()[i] = x.raw()[i] > T(0) ? x.raw()[i] : T(0);
  if (taped(tape, x)) {
    y.set_requires_grad(true);
    tape->record("relu", [x, y]() mutable {
      if (!x.requires_grad()) return;
      auto g = y.grad();
      auto gx = x.grad();
      const T* px = x.raw();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (px[i] > T(0)) gx[i] += g[i];
    });
  }
  return y;
}

template <class T>
Tensor<T> sigmoid(Tape<T>* tape, Tensor<T> x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i)
    y.raw()[i] = T(1) / (T(1) + std::exp(-x.raw()[i]));
  if (taped(tape, x)) {
    y.set_requires_grad(true);
    tape->record("sigmoid", [x, y]() mutable {
      if (!x.requires_grad()) return;
      auto g = y.grad();
      auto gx = x.grad();
      const T* py = y.raw();
      for (std::size_t i = 0; i < g.size(); ++i)
        gx[i] += g[i] * py[i] * (T(1) - py[i]);
    });
  }
  return y;
}

/// Stable softmax along `axis`; every slice sums to 1.
template <class T>
Tensor<T> softmax(Tape<T>* tape, Tensor<T> x, int axis) {
  const auto sp = detail::split_axis(x.shape(), axis);
  Tensor<T> y(x.shape());
  const T* px = x.raw();
  T* py = y.raw();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t in = 0; in < sp.inner; ++in) {
      const std::size_t base = o * sp.n * sp.inner + in;
      T mx = px[base];
      for (std::size_t j = 1; j < sp.n; ++j)
        mx = std::max(mx, px[base + j * sp.inner]);
      T sum = 0;
      for (std::size_t j = 0; j < sp.n; ++j) {
        T e = std::exp(px[base + j * sp.inner] - mx);
        py[base + j * sp.inner] = e;
        sum += e;
      }
      for (std::size_t j = 0; j < sp.n; ++j) py[base + j * sp.inner] /= sum;
    }
  if (taped(tape, x)) {
    y.set_requires_grad(true);
    tape->record("softmax", [x, y, sp]() mutable {
      if (!x.requires_grad()) return;
      auto g = y.grad();
      auto gx = x.grad();
      const T* py = y.raw();
      for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t in = 0; in < sp.inner; ++in) {
          const std::size_t base = o * sp.n * sp.inner + in;
          T dot = 0;
          for (std::size_t j = 0; j < sp.n; ++j)
            dot += g[base + j * sp.inner] * py[base + j * sp.inner];
          for (std::size_t j = 0; j < sp.n; ++j)
            gx[base + j * sp.inner] +=
                (g[base + j * sp.inner] - dot) * py[base + j * sp.inner];
        }
    });
  }
  return y;
}

/// Sum over `axis`, removing that axis.
template <class T>
Tensor<T> sum(Tape<T>* tape, Tensor<T> x, int axis) {
  const auto sp = detail::split_axis(x.shape(), axis);
  Tensor<T> y(detail::drop_axis(x.shape(), axis));
  const T* px = x.raw();
  T* py = y.raw();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t in = 0; in < sp.inner; ++in) {
      T acc = 0;
      for (std::size_t j = 0; j < sp.n; ++j)
        acc += px[o * sp.n * sp.inner + j * sp.inner + in];
      py[o * sp.inner + in] = acc;
    }
  if (taped(tape, x)) {
    y.set_requires_grad(true);
    tape->record("sum", [x, y, sp]() mutable {
      if (!x.requires_grad()) return;
      auto g = y.grad();
      auto gx = x.grad();
      for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t in = 0; in < sp.inner; ++in) {
          const T gv = g[o * sp.inner + in];
          for (std::size_t j = 0; j < sp.n; ++j)
            gx[o * sp.n * sp.inner + j * sp.inner + in] += gv;
        }
    });
  }
  return y;
}

/// Sum of all elements, as a scalar tensor.
template <class T>
Tensor<T> sum_all(Tape<T>* tape, Tensor<T> x) {
  Tensor<T> y({1});
  T acc = 0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x.raw()[i];
  y.raw()[0] = acc;
  if (taped(tape, x)) {
    y.set_requires_grad(true);
    tape->record("sum_all", [x, y]() mutable {
      if (!x.requires_grad()) return;
      const T gv = y.grad()[0];
      auto gx = x.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gv;
    });
  }
  return y;
}

/// Euclidean norm over `axis`, removing that axis.
template <class T>
Tensor<T> norm_l2(Tape<T>* tape, Tensor<T> x, int axis) {
  const auto sp = detail::split_axis(x.shape(), axis);
  Tensor<T> y(detail::drop_axis(x.shape(), axis));
  const T* px = x.raw();
  T* py = y.raw();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t in = 0; in < sp.inner; ++in) {
      T acc = 0;
      for (std::size_t j = 0; j < sp.n; ++j) {
        T v = px[o * sp.n * sp.inner + j * sp.inner + in];
        acc += v * v;
      }
      py[o * sp.inner + in] = std::sqrt(acc);
    }
  if (taped(tape, x)) {
    y.set_requires_grad(true);
    tape->record("norm_l2", [x, y, sp]() mutable {
      if (!x.requires_grad()) return;
      auto g = y.grad();
      auto gx = x.grad();
      const T* px = x.raw();
      const T* py = y.raw();
      for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t in = 0; in < sp.inner; ++in) {
          const T nrm = py[o * sp.inner + in];
          if (nrm <= T(0)) continue;  // zero vector: subgradient 0
          const T gv = g[o * sp.inner + in] / nrm;
          for (std::size_t j = 0; j < sp.n; ++j)
            gx[o * sp.n * sp.inner + j * sp.inner + in] +=
                gv * px[o * sp.n * sp.inner + j * sp.inner + in];
        }
    });
  }
  return y;
}

/// Concatenate along `axis`; all other dimensions must match.
template <class T>
Tensor<T> concat(Tape<T>* tape, const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  Shape out_shape = parts[0].shape();
  int rank = static_cast<int>(out_shape.size());
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank)
    throw DimensionError("concat: axis out of range");
  int total = 0;
  for (const auto& p : parts) {
    if (p.rank() != rank)
      throw DimensionError("concat: rank mismatch");
    for (int a = 0; a < rank; ++a)
      if (a != axis && p.shape()[static_cast<std::size_t>(a)] !=
                           out_shape[static_cast<std::size_t>(a)])
        throw DimensionError("concat: shape mismatch on axis " + std::to_string(a));
    total += p.dim(axis);
  }
  out_shape[static_cast<std::size_t>(axis)] = total;
  Tensor<T> y(out_shape);
  const auto spy = detail::split_axis(out_shape, axis);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto spp = detail::split_axis(p.shape(), axis);
    const T* src = p.raw();
    for (std::size_t o = 0; o < spp.outer; ++o)
      for (std::size_t j = 0; j < spp.n; ++j)
        std::copy_n(src + (o * spp.n + j) * spp.inner, spp.inner,
                    y.raw() + (o * spy.n + offset + j) * spy.inner);
    offset += spp.n;
  }
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (tape && any) {
    y.set_requires_grad(true);
    auto parts_copy = parts;
    tape->record("concat", [parts_copy, y, spy, axis]() mutable {
      auto g = y.grad();
      std::size_t offset = 0;
      for (auto& p : parts_copy) {
        const auto spp = detail::split_axis(p.shape(), axis);
        if (p.requires_grad()) {
          auto gp = p.grad();
          for (std::size_t o = 0; o < spp.outer; ++o)
            for (std::size_t j = 0; j < spp.n; ++j) {
              const T* src = g.data() + (o * spy.n + offset + j) * spy.inner;
              T* dst = gp.data() + (o * spp.n + j) * spp.inner;
              for (std::size_t i = 0; i < spp.inner; ++i) dst[i] += src[i];
            }
        }
        offset += spp.n;
      }
    });
  }
  return y;
}

/// Contiguous slice [start, start+len) along `axis`.
template <class T>
Tensor<T> slice(Tape<T>* tape, Tensor<T> x, int axis, int start,
                int len) {
  const auto sp = detail::split_axis(x.shape(), axis);
  if (start < 0 || len <= 0 || start + len > static_cast<int>(sp.n))
    throw DimensionError("slice: range [" + std::to_string(start) + "," +
                         std::to_string(start + len) + ") out of axis size " +
                         std::to_string(sp.n));
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(sp.axis)] = len;
  Tensor<T> y(out_shape);
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (int j = 0; j < len; ++j)
      std::copy_n(x.raw() + (o * sp.n + start + j) * sp.inner, sp.inner,
                  y.raw() + (o * static_cast<std::size_t>(len) + j) * sp.inner);
  if (taped(tape, x)) {
    y.set_requires_grad(true);
    tape->record("slice", [x, y, sp, start, len]() mutable {
      if (!x.requires_grad()) return;
      auto g = y.grad();
      auto gx = x.grad();
      for (std::size_t o = 0; o < sp.outer; ++o)
        for (int j = 0; j < len; ++j) {
          const T* src = g.data() + (o * static_cast<std::size_t>(len) + j) * sp.inner;
          T* dst = gx.data() + (o * sp.n + start + j) * sp.inner;
          for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
        }
    });
  }
  return y;
}

/// Same data, new shape. Shares storage with the input.
template <class T>
Tensor<T> reshape(Tape<T>* tape, Tensor<T> x, Shape shape) {
  Tensor<T> y = x.reshaped(std::move(shape)).detached();
  if (taped(tape, x)) {
    y.set_requires_grad(true);
    tape->record("reshape", [x, y]() mutable {
      if (!x.requires_grad()) return;
      auto g = y.grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return y;
}

}  // namespace capsloc::ops
