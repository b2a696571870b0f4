#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "capsloc/core/gemm.hpp"
#include "capsloc/core/tape.hpp"
#include "capsloc/core/tensor.hpp"

namespace capsloc::ops {

inline int conv_out_size(int in, int k, int s) {
  if (k <= 0 || s <= 0 || in < k)
    throw DimensionError("conv: input " + std::to_string(in) + ", kernel " +
                         std::to_string(k) + ", stride " + std::to_string(s));
  return (in - k) / s + 1;
}

inline int conv_transpose_out_size(int in, int k, int s) {
  if (k <= 0 || s <= 0 || in <= 0)
    throw DimensionError("conv_transpose: input " + std::to_string(in) +
                         ", kernel " + std::to_string(k) + ", stride " +
                         std::to_string(s));
  return (in - 1) * s + k;
}

namespace detail {

/// im[c,h,w] -> col[(c,ki,kj), (oh,ow)] with valid windows at stride s.
template <class T>
void im2col(const T* im, int channels, int h, int w, int k, int s, T* col) {
  const int oh = conv_out_size(h, k, s);
  const int ow = conv_out_size(w, k, s);
  const std::size_t plane = static_cast<std::size_t>(oh) * ow;
  std::size_t row = 0;
  for (int c = 0; c < channels; ++c)
    for (int ki = 0; ki < k; ++ki)
      for (int kj = 0; kj < k; ++kj, ++row) {
        const T* src = im + (static_cast<std::size_t>(c) * h + ki) * w + kj;
        T* dst = col + row * plane;
        for (int a = 0; a < oh; ++a) {
          const T* line = src + static_cast<std::size_t>(a) * s * w;
          for (int b = 0; b < ow; ++b) dst[static_cast<std::size_t>(a) * ow + b] = line[static_cast<std::size_t>(b) * s];
        }
      }
}

/// Adjoint of im2col: accumulates col[(c,ki,kj),(oh,ow)] back into im[c,h,w].
template <class T>
void col2im(const T* col, int channels, int h, int w, int k, int s, T* im) {
  const int oh = conv_out_size(h, k, s);
  const int ow = conv_out_size(w, k, s);
  const std::size_t plane = static_cast<std::size_t>(oh) * ow;
  std::size_t row = 0;
  for (int c = 0; c < channels; ++c)
    for (int ki = 0; ki < k; ++ki)
      for (int kj = 0; kj < k; ++kj, ++row) {
        T* dst = im + (static_cast<std::size_t>(c) * h + ki) * w + kj;
        const T* src = col + row * plane;
        for (int a = 0; a < oh; ++a) {
          T* line = dst + static_cast<std::size_t>(a) * s * w;
          for (int b = 0; b < ow; ++b) line[static_cast<std::size_t>(b) * s] += src[static_cast<std::size_t>(a) * ow + b];
        }
      }
}

}  // namespace detail

/// Valid convolution: x[N,C,H,W] * w[F,C,k,k] at stride s -> y[N,F,OH,OW].
/// No padding; bias is a separate op.
template <class T>
Tensor<T> conv2d(Tape<T>* tape, Tensor<T> x, Tensor<T> w,
                 int stride) {
  if (x.rank() != 4 || w.rank() != 4)
    throw DimensionError("conv2d: expected 4-d input and weight");
  if (x.dim(1) != w.dim(1) || w.dim(2) != w.dim(3))
    throw DimensionError("conv2d: weight " + shape_str(w.shape()) +
                         " does not match input " + shape_str(x.shape()));
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int f = w.dim(0), k = w.dim(2);
  const int oh = conv_out_size(h, k, stride);
  const int ow = conv_out_size(wd, k, stride);
  const int ckk = c * k * k;
  const std::size_t im_sz = static_cast<std::size_t>(c) * h * wd;
  const std::size_t out_sz = static_cast<std::size_t>(f) * oh * ow;
  Tensor<T> y({n, f, oh, ow});
  std::vector<T> col(static_cast<std::size_t>(ckk) * oh * ow);
  for (int i = 0; i < n; ++i) {
    detail::im2col(x.raw() + i * im_sz, c, h, wd, k, stride, col.data());
    gemm(false, false, f, oh * ow, ckk, T(1), w.raw(), ckk, col.data(),
         oh * ow, T(0), y.raw() + i * out_sz, oh * ow);
  }
  if (taped(tape, x, w)) {
    y.set_requires_grad(true);
    tape->record("conv2d", [x, w, y, stride, n, c, h, wd, f, k, oh, ow, ckk,
                            im_sz, out_sz]() mutable {
      std::vector<T> col(static_cast<std::size_t>(ckk) * oh * ow);
      std::vector<T> dcol(col.size());
      const T* gy = y.grad().data();
      for (int i = 0; i < n; ++i) {
        if (w.requires_grad()) {
          detail::im2col(x.raw() + i * im_sz, c, h, wd, k, stride, col.data());
          gemm(false, true, f, ckk, oh * ow, T(1), gy + i * out_sz, oh * ow,
               col.data(), oh * ow, T(1), w.grad().data(), ckk);
        }
        if (x.requires_grad()) {
          gemm(true, false, ckk, oh * ow, f, T(1), w.raw(), ckk, gy + i * out_sz,
               oh * ow, T(0), dcol.data(), oh * ow);
          detail::col2im(dcol.data(), c, h, wd, k, stride,
                         x.grad().data() + i * im_sz);
        }
      }
    });
  }
  return y;
}

/// Transposed convolution: x[N,C,H,W] * w[C,F,k,k] at stride s
/// -> y[N,F,(H-1)s+k,(W-1)s+k]. Adjoint of conv2d over the same geometry.
template <class T>
Tensor<T> conv_transpose2d(Tape<T>* tape, Tensor<T> x, Tensor<T> w,
                           int stride) {
  if (x.rank() != 4 || w.rank() != 4)
    throw DimensionError("conv_transpose2d: expected 4-d input and weight");
  if (x.dim(1) != w.dim(0) || w.dim(2) != w.dim(3))
    throw DimensionError("conv_transpose2d: weight " + shape_str(w.shape()) +
                         " does not match input " + shape_str(x.shape()));
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int f = w.dim(1), k = w.dim(2);
  const int oh = conv_transpose_out_size(h, k, stride);
  const int ow = conv_transpose_out_size(wd, k, stride);
  const int fkk = f * k * k;
  const std::size_t in_sz = static_cast<std::size_t>(c) * h * wd;
  const std::size_t out_sz = static_cast<std::size_t>(f) * oh * ow;
  Tensor<T> y({n, f, oh, ow});
  std::vector<T> col(static_cast<std::size_t>(fkk) * h * wd);
  for (int i = 0; i < n; ++i) {
    gemm(true, false, fkk, h * wd, c, T(1), w.raw(), fkk, x.raw() + i * in_sz,
         h * wd, T(0), col.data(), h * wd);
    detail::col2im(col.data(), f, oh, ow, k, stride, y.raw() + i * out_sz);
  }
  if (taped(tape, x, w)) {
    y.set_requires_grad(true);
    tape->record("conv_transpose2d", [x, w, y, stride, n, c, h, wd, f, k, oh,
                                      ow, fkk, in_sz, out_sz]() mutable {
      std::vector<T> dcol(static_cast<std::size_t>(fkk) * h * wd);
      const T* gy = y.grad().data();
      for (int i = 0; i < n; ++i) {
        detail::im2col(gy + i * out_sz, f, oh, ow, k, stride, dcol.data());
        if (x.requires_grad())
          gemm(false, false, c, h * wd, fkk, T(1), w.raw(), fkk, dcol.data(),
               h * wd, T(1), x.grad().data() + i * in_sz, h * wd);
        if (w.requires_grad())
          gemm(false, true, c, fkk, h * wd, T(1), x.raw() + i * in_sz, h * wd,
               dcol.data(), h * wd, T(1), w.grad().data(), fkk);
      }
    });
  }
  return y;
}

}  // namespace capsloc::ops
