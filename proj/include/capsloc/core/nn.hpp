#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "capsloc/core/ops.hpp"
#include "capsloc/core/tape.hpp"
#include "capsloc/core/tensor.hpp"

namespace capsloc::ops {

/// Squashing nonlinearity applied to every vector along `axis`:
///   v = (|s|^2 / (1 + |s|^2)) * s / |s|
/// Short vectors shrink toward zero, long ones saturate below unit norm.
template <class T>
Tensor<T> squash(Tape<T>* tape, Tensor<T> x, int axis) {
  const auto sp = detail::split_axis(x.shape(), axis);
  Tensor<T> y(x.shape());
  const T* px = x.raw();
  T* py = y.raw();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t in = 0; in < sp.inner; ++in) {
      const std::size_t base = o * sp.n * sp.inner + in;
      T n2 = 0;
      for (std::size_t j = 0; j < sp.n; ++j) {
        T v = px[base + j * sp.inner];
        n2 += v * v;
      }
      const T n = std::sqrt(n2);
      const T scale = n / (T(1) + n2);
      for (std::size_t j = 0; j < sp.n; ++j)
        py[base + j * sp.inner] = px[base + j * sp.inner] * scale;
    }
  if (taped(tape, x)) {
    y.set_requires_grad(true);
    tape->record("squash", [x, y, sp]() mutable {
      if (!x.requires_grad()) return;
      auto g = y.grad();
      auto gx = x.grad();
      const T* px = x.raw();
      for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t in = 0; in < sp.inner; ++in) {
          const std::size_t base = o * sp.n * sp.inner + in;
          T n2 = 0, gs = 0;
          for (std::size_t j = 0; j < sp.n; ++j) {
            const T v = px[base + j * sp.inner];
            n2 += v * v;
            gs += g[base + j * sp.inner] * v;
          }
          const T n = std::sqrt(n2);
          if (n <= T(0)) continue;  // Jacobian vanishes at the origin
          const T one_p = T(1) + n2;
          const T scale = n / one_p;
          const T coef = gs * (T(1) - n2) / (one_p * one_p * n);
          for (std::size_t j = 0; j < sp.n; ++j)
            gx[base + j * sp.inner] +=
                scale * g[base + j * sp.inner] + coef * px[base + j * sp.inner];
        }
    });
  }
  return y;
}

/// y[n,k,:] = x[n,k,:] * mask[n,k]. The mask is treated as a constant.
template <class T>
Tensor<T> mask_rows(Tape<T>* tape, Tensor<T> x, Tensor<T> mask) {
  if (x.rank() != 3 || mask.rank() != 2 || x.dim(0) != mask.dim(0) ||
      x.dim(1) != mask.dim(1))
    throw DimensionError("mask_rows: shapes " + shape_str(x.shape()) + " vs " +
                         shape_str(mask.shape()));
  const std::size_t rows = static_cast<std::size_t>(x.dim(0)) * x.dim(1);
  const std::size_t a = static_cast<std::size_t>(x.dim(2));
  Tensor<T> y(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T m = mask.raw()[r];
    for (std::size_t i = 0; i < a; ++i) y.raw()[r * a + i] = x.raw()[r * a + i] * m;
  }
  if (taped(tape, x)) {
    y.set_requires_grad(true);
    tape->record("mask_rows", [x, mask, y, rows, a]() mutable {
      if (!x.requires_grad()) return;
      auto g = y.grad();
      auto gx = x.grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const T m = mask.raw()[r];
        for (std::size_t i = 0; i < a; ++i) gx[r * a + i] += g[r * a + i] * m;
      }
    });
  }
  return y;
}

/// Per-class margin loss on capsule activations, averaged over the batch:
///   L_k = T_k max(0, m_plus - |v_k|)^2
///       + lambda (1 - T_k) max(0, |v_k| - m_minus)^2
/// `norms` is [N,K], `targets` is [N,K] with entries in {0,1} (multi-hot is
/// fine; every present class contributes its positive term).
template <class T>
Tensor<T> margin_loss(Tape<T>* tape, Tensor<T> norms,
                      Tensor<T> targets, T m_plus, T m_minus, T lambda) {
  detail::check_same_shape(norms, targets, "margin_loss");
  if (norms.rank() != 2) throw DimensionError("margin_loss: expected [N,K]");
  const int n = norms.dim(0), k = norms.dim(1);
  T total = 0;
  for (int i = 0; i < n * k; ++i) {
    const T t = targets.raw()[i];
    const T v = norms.raw()[i];
    const T pos = std::max(T(0), m_plus - v);
    const T neg = std::max(T(0), v - m_minus);
    total += t * pos * pos + lambda * (T(1) - t) * neg * neg;
  }
  Tensor<T> y = Tensor<T>::scalar(total / static_cast<T>(n));
  if (taped(tape, norms)) {
    y.set_requires_grad(true);
    tape->record("margin_loss",
                 [norms, targets, y, n, k, m_plus, m_minus, lambda]() mutable {
      if (!norms.requires_grad()) return;
      const T g = y.grad()[0] / static_cast<T>(n);
      auto gn = norms.grad();
      for (int i = 0; i < n * k; ++i) {
        const T t = targets.raw()[i];
        const T v = norms.raw()[i];
        const T pos = std::max(T(0), m_plus - v);
        const T neg = std::max(T(0), v - m_minus);
        gn[i] += g * (t * T(-2) * pos + lambda * (T(1) - t) * T(2) * neg);
      }
    });
  }
  return y;
}

/// Sum of squared errors per sample, averaged over the batch (axis 0).
template <class T>
Tensor<T> sse_mean(Tape<T>* tape, Tensor<T> pred,
                   Tensor<T> target) {
  detail::check_same_shape(pred, target, "sse_mean");
  const T n = static_cast<T>(pred.dim(0));
  T total = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const T d = pred.raw()[i] - target.raw()[i];
    total += d * d;
  }
  Tensor<T> y = Tensor<T>::scalar(total / n);
  if (taped(tape, pred)) {
    y.set_requires_grad(true);
    tape->record("sse_mean", [pred, target, y, n]() mutable {
      if (!pred.requires_grad()) return;
      const T g = y.grad()[0] * T(2) / n;
      auto gp = pred.grad();
      for (std::size_t i = 0; i < gp.size(); ++i)
        gp[i] += g * (pred.raw()[i] - target.raw()[i]);
    });
  }
  return y;
}

/// Mean cross-entropy of softmax(logits[N,K]) against class indices.
template <class T>
Tensor<T> softmax_xent(Tape<T>* tape, Tensor<T> logits,
                       const std::vector<int>& labels) {
  if (logits.rank() != 2 ||
      labels.size() != static_cast<std::size_t>(logits.dim(0)))
    throw DimensionError("softmax_xent: logits " + shape_str(logits.shape()) +
                         " with " + std::to_string(labels.size()) + " labels");
  const int n = logits.dim(0), k = logits.dim(1);
  Tensor<T> probs({n, k});
  T total = 0;
  for (int i = 0; i < n; ++i) {
    const T* row = logits.raw() + static_cast<std::size_t>(i) * k;
    T mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    T sum = 0;
    for (int j = 0; j < k; ++j) {
      T e = std::exp(row[j] - mx);
      probs.raw()[static_cast<std::size_t>(i) * k + j] = e;
      sum += e;
    }
    for (int j = 0; j < k; ++j) probs.raw()[static_cast<std::size_t>(i) * k + j] /= sum;
    if (labels[static_cast<std::size_t>(i)] < 0 || labels[static_cast<std::size_t>(i)] >= k)
      throw DimensionError("softmax_xent: label out of range");
    total -= std::log(std::max(
        probs.raw()[static_cast<std::size_t>(i) * k + labels[static_cast<std::size_t>(i)]],
        std::numeric_limits<T>::min()));
  }
  Tensor<T> y = Tensor<T>::scalar(total / static_cast<T>(n));
  if (taped(tape, logits)) {
    y.set_requires_grad(true);
    tape->record("softmax_xent", [logits, probs, labels, y, n, k]() mutable {
      if (!logits.requires_grad()) return;
      const T g = y.grad()[0] / static_cast<T>(n);
      auto gl = logits.grad();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < k; ++j) {
          T p = probs.raw()[static_cast<std::size_t>(i) * k + j];
          if (j == labels[static_cast<std::size_t>(i)]) p -= T(1);
          gl[static_cast<std::size_t>(i) * k + j] += g * p;
        }
    });
  }
  return y;
}

}  // namespace capsloc::ops
