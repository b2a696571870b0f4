#pragma once

#include "capsloc/core/capsule.hpp"
#include "capsloc/core/nn.hpp"
#include "capsloc/core/ops.hpp"
#include "capsloc/core/tape.hpp"
#include "capsloc/core/tensor.hpp"

namespace capsloc {

template <class T>
struct RoutingResult {
  Tensor<T> v;  // squashed digit-capsule pose vectors [N, J, pose_atoms]
  Tensor<T> o;  // derived coordinates [N, J, 2]
  Tensor<T> c;  // final coupling coefficients [N, I, J]
};

/// Routing by agreement between primary and digit capsules, with the two
/// constant coordinate atoms riding along. Per iteration:
///   c = softmax(b) over digit capsules
///   s_j = sum_i c_ij u_hat_{j|i}         (pose atoms only)
///   v_j = squash(s_j)
///   o_j = sum_i c_ij coords_i / sum_i c_ij
///   b_ij += [coords_i | u_hat_{j|i}] . [o_j | v_j]
/// The logits start at bias_real for every real class and bias_unknown for
/// the last (unknown) capsule, re-initialized on every forward pass.
/// Gradients flow through every unrolled iteration; coords are constants.
template <class T>
RoutingResult<T> route_with_coordinates(Tape<T>* tape, Tensor<T> u_hat,
                                        Tensor<T> coords, int iterations,
                                        T bias_real, T bias_unknown) {
  if (iterations < 1)
    throw ConfigError("routing needs at least one iteration");
  if (u_hat.rank() != 4 || coords.rank() != 2 || coords.dim(0) != u_hat.dim(1))
    throw DimensionError("routing: u_hat " + shape_str(u_hat.shape()) +
                         ", coords " + shape_str(coords.shape()));
  const int n = u_hat.dim(0), caps = u_hat.dim(1), j = u_hat.dim(2);
  Tensor<T> b({n, caps, j});
  for (int i = 0; i < n * caps; ++i) {
    T* row = b.raw() + static_cast<std::size_t>(i) * j;
    for (int cj = 0; cj < j; ++cj)
      row[cj] = (cj == j - 1) ? bias_unknown : bias_real;
  }
  RoutingResult<T> out;
  for (int it = 0; it < iterations; ++it) {
    out.c = ops::softmax(tape, b, 2);
    Tensor<T> s = ops::capsule_weighted_sum(tape, out.c, u_hat);
    out.v = ops::squash(tape, s, 2);
    out.o = ops::coordinate_average(tape, out.c, coords);
    Tensor<T> delta = ops::agreement(tape, u_hat, out.v, coords, out.o);
    b = ops::add(tape, b, delta);
  }
  return out;
}

}  // namespace capsloc
