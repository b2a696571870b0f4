#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "capsloc/core/gemm.hpp"
#include "capsloc/core/tape.hpp"
#include "capsloc/core/tensor.hpp"

namespace capsloc::ops {

/// Regroups a primary-capsule feature map x[N, Tt*A, G, G] into capsule
/// vectors u[N, I, A] with I = Tt*G*G and capsule i = (type, row, col).
template <class T>
Tensor<T> primary_caps_gather(Tape<T>* tape, Tensor<T> x, int types,
                              int atoms) {
  if (x.rank() != 4 || x.dim(1) != types * atoms || x.dim(2) != x.dim(3))
    throw DimensionError("primary_caps_gather: input " + shape_str(x.shape()) +
                         " with " + std::to_string(types) + " types x " +
                         std::to_string(atoms) + " atoms");
  const int n = x.dim(0), g = x.dim(2);
  const int gg = g * g;
  const int caps = types * gg;
  Tensor<T> u({n, caps, atoms});
  const std::size_t xs = static_cast<std::size_t>(types) * atoms * gg;
  const std::size_t us = static_cast<std::size_t>(caps) * atoms;
  for (int i = 0; i < n; ++i)
    for (int t = 0; t < types; ++t)
      for (int a = 0; a < atoms; ++a) {
        const T* src = x.raw() + i * xs + (static_cast<std::size_t>(t) * atoms + a) * gg;
        T* dst = u.raw() + i * us + static_cast<std::size_t>(t) * gg * atoms + a;
        for (int p = 0; p < gg; ++p) dst[static_cast<std::size_t>(p) * atoms] = src[p];
      }
  if (taped(tape, x)) {
    u.set_requires_grad(true);
    tape->record("primary_caps_gather",
                 [x, u, n, types, atoms, gg, xs, us]() mutable {
      if (!x.requires_grad()) return;
      auto gu = u.grad();
      auto gx = x.grad();
      for (int i = 0; i < n; ++i)
        for (int t = 0; t < types; ++t)
          for (int a = 0; a < atoms; ++a) {
            const T* src = gu.data() + i * us + static_cast<std::size_t>(t) * gg * atoms + a;
            T* dst = gx.data() + i * xs + (static_cast<std::size_t>(t) * atoms + a) * gg;
            for (int p = 0; p < gg; ++p) dst[p] += src[static_cast<std::size_t>(p) * atoms];
          }
    });
  }
  return u;
}

/// Prediction vectors u_hat[n,i,j,:] = u[n,i,:] * W[type(i),:,j,:].
/// The transform is shared across grid positions of a capsule type, so
/// W is [types, A_in, J, A_out] and i is ordered (type, row, col).
template <class T>
Tensor<T> capsule_transform(Tape<T>* tape, Tensor<T> u,
                            Tensor<T> w, int types) {
  if (u.rank() != 3 || w.rank() != 4 || w.dim(0) != types ||
      w.dim(1) != u.dim(2) || u.dim(1) % types != 0)
    throw DimensionError("capsule_transform: u " + shape_str(u.shape()) +
                         ", w " + shape_str(w.shape()));
  const int n = u.dim(0), caps = u.dim(1), a_in = u.dim(2);
  const int j = w.dim(2), a_out = w.dim(3);
  const int per_type = caps / types;
  const int ja = j * a_out;
  Tensor<T> u_hat({n, caps, j, a_out});
  const std::size_t us = static_cast<std::size_t>(caps) * a_in;
  const std::size_t hs = static_cast<std::size_t>(caps) * ja;
  const std::size_t ws = static_cast<std::size_t>(a_in) * ja;
  for (int i = 0; i < n; ++i)
    for (int t = 0; t < types; ++t)
      gemm(false, false, per_type, ja, a_in, T(1),
           u.raw() + i * us + static_cast<std::size_t>(t) * per_type * a_in, a_in,
           w.raw() + t * ws, ja, T(0),
           u_hat.raw() + i * hs + static_cast<std::size_t>(t) * per_type * ja, ja);
  if (taped(tape, u, w)) {
    u_hat.set_requires_grad(true);
    tape->record("capsule_transform",
                 [u, w, u_hat, n, types, per_type, a_in, ja, us, hs, ws]() mutable {
      const T* gh = u_hat.grad().data();
      for (int i = 0; i < n; ++i)
        for (int t = 0; t < types; ++t) {
          const T* ghs = gh + i * hs + static_cast<std::size_t>(t) * per_type * ja;
          if (u.requires_grad())
            gemm(false, true, per_type, a_in, ja, T(1), ghs, ja,
                 w.raw() + t * ws, ja, T(1),
                 u.grad().data() + i * us + static_cast<std::size_t>(t) * per_type * a_in,
                 a_in);
          if (w.requires_grad())
            gemm(true, false, a_in, ja, per_type, T(1),
                 u.raw() + i * us + static_cast<std::size_t>(t) * per_type * a_in, a_in,
                 ghs, ja, T(1), w.grad().data() + t * ws, ja);
        }
    });
  }
  return u_hat;
}

/// s[n,j,:] = sum_i c[n,i,j] * u_hat[n,i,j,:]
template <class T>
Tensor<T> capsule_weighted_sum(Tape<T>* tape, Tensor<T> c,
                               Tensor<T> u_hat) {
  if (c.rank() != 3 || u_hat.rank() != 4 || c.dim(0) != u_hat.dim(0) ||
      c.dim(1) != u_hat.dim(1) || c.dim(2) != u_hat.dim(2))
    throw DimensionError("capsule_weighted_sum: c " + shape_str(c.shape()) +
                         ", u_hat " + shape_str(u_hat.shape()));
  const int n = c.dim(0), caps = c.dim(1), j = c.dim(2), a = u_hat.dim(3);
  Tensor<T> s({n, j, a});
  const std::size_t cs = static_cast<std::size_t>(caps) * j;
  const std::size_t hsz = cs * a;
  const std::size_t ss = static_cast<std::size_t>(j) * a;
  for (int i = 0; i < n; ++i) {
    T* ps = s.raw() + i * ss;
    for (int ci = 0; ci < caps; ++ci)
      for (int cj = 0; cj < j; ++cj) {
        const T cv = c.raw()[i * cs + static_cast<std::size_t>(ci) * j + cj];
        const T* ph = u_hat.raw() + i * hsz + (static_cast<std::size_t>(ci) * j + cj) * a;
        T* dst = ps + static_cast<std::size_t>(cj) * a;
        for (int k = 0; k < a; ++k) dst[k] += cv * ph[k];
      }
  }
  if (taped(tape, c, u_hat)) {
    s.set_requires_grad(true);
    tape->record("capsule_weighted_sum",
                 [c, u_hat, s, n, caps, j, a, cs, hsz, ss]() mutable {
      auto gs = s.grad();
      for (int i = 0; i < n; ++i)
        for (int ci = 0; ci < caps; ++ci)
          for (int cj = 0; cj < j; ++cj) {
            const std::size_t cidx = i * cs + static_cast<std::size_t>(ci) * j + cj;
            const T* pg = gs.data() + i * ss + static_cast<std::size_t>(cj) * a;
            const T* ph = u_hat.raw() + cidx * a;
            if (c.requires_grad()) {
              T acc = 0;
              for (int k = 0; k < a; ++k) acc += pg[k] * ph[k];
              c.grad()[cidx] += acc;
            }
            if (u_hat.requires_grad()) {
              const T cv = c.raw()[cidx];
              T* gh = u_hat.grad().data() + cidx * a;
              for (int k = 0; k < a; ++k) gh[k] += cv * pg[k];
            }
          }
    });
  }
  return s;
}

/// Coupling-weighted average of the constant capsule coordinates:
///   o[n,j,:] = sum_i c[n,i,j] * coords[i,:] / sum_i c[n,i,j]
/// Always a convex combination, so o stays inside the coordinate hull.
template <class T>
Tensor<T> coordinate_average(Tape<T>* tape, Tensor<T> c,
                             Tensor<T> coords) {
  if (c.rank() != 3 || coords.rank() != 2 || c.dim(1) != coords.dim(0))
    throw DimensionError("coordinate_average: c " + shape_str(c.shape()) +
                         ", coords " + shape_str(coords.shape()));
  const int n = c.dim(0), caps = c.dim(1), j = c.dim(2), d = coords.dim(1);
  Tensor<T> o({n, j, d});
  Tensor<T> den({n, j});
  const std::size_t cs = static_cast<std::size_t>(caps) * j;
  for (int i = 0; i < n; ++i)
    for (int cj = 0; cj < j; ++cj) {
      T dsum = 0;
      std::vector<T> acc(static_cast<std::size_t>(d), T(0));
      for (int ci = 0; ci < caps; ++ci) {
        const T cv = c.raw()[i * cs + static_cast<std::size_t>(ci) * j + cj];
        dsum += cv;
        for (int k = 0; k < d; ++k) acc[static_cast<std::size_t>(k)] += cv * coords.raw()[static_cast<std::size_t>(ci) * d + k];
      }
      if (!(dsum > T(0)))
        throw DegenerateError("coordinate_average: coupling mass vanished for capsule " +
                              std::to_string(cj));
      den.raw()[i * static_cast<std::size_t>(j) + cj] = dsum;
      for (int k = 0; k < d; ++k)
        o.raw()[(i * static_cast<std::size_t>(j) + cj) * d + k] = acc[static_cast<std::size_t>(k)] / dsum;
    }
  if (taped(tape, c)) {
    o.set_requires_grad(true);
    tape->record("coordinate_average",
                 [c, coords, o, den, n, caps, j, d, cs]() mutable {
      if (!c.requires_grad()) return;
      auto go = o.grad();
      auto gc = c.grad();
      for (int i = 0; i < n; ++i)
        for (int cj = 0; cj < j; ++cj) {
          const T dsum = den.raw()[i * static_cast<std::size_t>(j) + cj];
          const T* po = o.raw() + (i * static_cast<std::size_t>(j) + cj) * d;
          const T* pg = go.data() + (i * static_cast<std::size_t>(j) + cj) * d;
          for (int ci = 0; ci < caps; ++ci) {
            T acc = 0;
            for (int k = 0; k < d; ++k)
              acc += pg[k] * (coords.raw()[static_cast<std::size_t>(ci) * d + k] - po[k]);
            gc[i * cs + static_cast<std::size_t>(ci) * j + cj] += acc / dsum;
          }
        }
    });
  }
  return o;
}

/// Agreement update for the routing logits, using the full 18-atom vectors
/// without materializing them:
///   delta[n,i,j] = u_hat[n,i,j,:] . v[n,j,:] + coords[i,:] . o[n,j,:]
template <class T>
Tensor<T> agreement(Tape<T>* tape, Tensor<T> u_hat, Tensor<T> v,
                    Tensor<T> coords, Tensor<T> o) {
  if (u_hat.rank() != 4 || v.rank() != 3 || coords.rank() != 2 || o.rank() != 3)
    throw DimensionError("agreement: bad ranks");
  const int n = u_hat.dim(0), caps = u_hat.dim(1), j = u_hat.dim(2),
            a = u_hat.dim(3);
  const int d = coords.dim(1);
  if (v.dim(0) != n || v.dim(1) != j || v.dim(2) != a || coords.dim(0) != caps ||
      o.dim(0) != n || o.dim(1) != j || o.dim(2) != d)
    throw DimensionError("agreement: u_hat " + shape_str(u_hat.shape()) +
                         ", v " + shape_str(v.shape()) + ", o " +
                         shape_str(o.shape()));
  Tensor<T> delta({n, caps, j});
  const std::size_t hs = static_cast<std::size_t>(caps) * j * a;
  const std::size_t vs = static_cast<std::size_t>(j) * a;
  const std::size_t os = static_cast<std::size_t>(j) * d;
  const std::size_t ds = static_cast<std::size_t>(caps) * j;
  for (int i = 0; i < n; ++i)
    for (int ci = 0; ci < caps; ++ci)
      for (int cj = 0; cj < j; ++cj) {
        const T* ph = u_hat.raw() + i * hs + (static_cast<std::size_t>(ci) * j + cj) * a;
        const T* pv = v.raw() + i * vs + static_cast<std::size_t>(cj) * a;
        T acc = 0;
        for (int k = 0; k < a; ++k) acc += ph[k] * pv[k];
        const T* pc = coords.raw() + static_cast<std::size_t>(ci) * d;
        const T* po = o.raw() + i * os + static_cast<std::size_t>(cj) * d;
        for (int k = 0; k < d; ++k) acc += pc[k] * po[k];
        delta.raw()[i * ds + static_cast<std::size_t>(ci) * j + cj] = acc;
      }
  if (taped(tape, u_hat, v, o)) {
    delta.set_requires_grad(true);
    tape->record("agreement",
                 [u_hat, v, coords, o, delta, n, caps, j, a, d, hs, vs, os,
                  ds]() mutable {
      auto gd = delta.grad();
      for (int i = 0; i < n; ++i)
        for (int ci = 0; ci < caps; ++ci)
          for (int cj = 0; cj < j; ++cj) {
            const T g = gd[i * ds + static_cast<std::size_t>(ci) * j + cj];
            if (g == T(0)) continue;
            const std::size_t hoff = i * hs + (static_cast<std::size_t>(ci) * j + cj) * a;
            if (u_hat.requires_grad()) {
              const T* pv = v.raw() + i * vs + static_cast<std::size_t>(cj) * a;
              T* gh = u_hat.grad().data() + hoff;
              for (int k = 0; k < a; ++k) gh[k] += g * pv[k];
            }
            if (v.requires_grad()) {
              const T* ph = u_hat.raw() + hoff;
              T* gv = v.grad().data() + i * vs + static_cast<std::size_t>(cj) * a;
              for (int k = 0; k < a; ++k) gv[k] += g * ph[k];
            }
            if (o.requires_grad()) {
              const T* pc = coords.raw() + static_cast<std::size_t>(ci) * d;
              T* go = o.grad().data() + i * os + static_cast<std::size_t>(cj) * d;
              for (int k = 0; k < d; ++k) go[k] += g * pc[k];
            }
          }
    });
  }
  return delta;
}

}  // namespace capsloc::ops
