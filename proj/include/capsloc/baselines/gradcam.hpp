#pragma once

#include <cmath>
#include <utility>

#include "capsloc/baselines/convnet.hpp"
#include "capsloc/core/error.hpp"
#include "capsloc/core/ops.hpp"
#include "capsloc/core/tape.hpp"
#include "capsloc/core/tensor.hpp"
#include "capsloc/grid.hpp"

namespace capsloc {

/// Class-relevance map over one image's final conv features: channel weights
/// are the spatially averaged gradients, the weighted channel sum is clipped
/// at zero.
template <class T>
Tensor<T> build_gradmap(const Tensor<T>& activations,
                        const Tensor<T>& gradients) {
  if (activations.rank() != 3 || activations.shape() != gradients.shape())
    throw DimensionError("gradmap inputs must both be [F,G,G]");
  const int f = activations.dim(0), g = activations.dim(1);
  const int plane = g * g;
  Tensor<T> map({g, g});
  for (int ch = 0; ch < f; ++ch) {
    T w = 0;
    const T* gr = gradients.raw() + static_cast<std::size_t>(ch) * plane;
    for (int p = 0; p < plane; ++p) w += gr[p];
    w /= static_cast<T>(plane);
    const T* act = activations.raw() + static_cast<std::size_t>(ch) * plane;
    for (int p = 0; p < plane; ++p) map.raw()[p] += w * act[p];
  }
  for (int p = 0; p < plane; ++p) map.raw()[p] = std::max(map.raw()[p], T(0));
  return map;
}

/// Relevance-weighted mean of the receptive-field centers: the gradient-map
/// analogue of the capsule coordinate average.
template <class T>
std::pair<double, double> gradmap_center(const Tensor<T>& map,
                                         const CoordinateGrid& grid) {
  if (map.rank() != 2 || map.dim(0) != grid.g || map.dim(1) != grid.g)
    throw DimensionError("gradmap shape " + shape_str(map.shape()) +
                         " does not match the " + std::to_string(grid.g) +
                         "-cell grid");
  double mass = 0, x = 0, y = 0;
  for (int r = 0; r < grid.g; ++r)
    for (int c = 0; c < grid.g; ++c) {
      const double m = static_cast<double>(map.at({r, c}));
      if (m < 0) throw NumericError("gradmap must be nonnegative");
      auto [cx, cy] = grid.at(r, c);
      mass += m;
      x += m * cx;
      y += m * cy;
    }
  if (mass <= 0)
    throw DegenerateError("all-zero gradient map has no coordinate");
  return {x / mass, y / mass};
}

/// Coordinates for one (image, class) pair: forward, differentiate that
/// class's score w.r.t. the final conv features, reduce per the gradmap
/// recipe. Throws DegenerateError when the map carries no mass.
template <class T>
std::pair<double, double> gradcam_coords(ConvBenchmark<T>& model,
                                         Tensor<T> image, int class_id) {
  if (image.rank() != 4 || image.dim(0) != 1)
    throw DimensionError("gradcam takes one image [1,1,H,W]");
  if (class_id < 0 || class_id >= model.config().trunk.num_classes)
    throw DimensionError("class id out of range");
  Tape<T> tape;
  auto out = model.forward(&tape, image, nullptr, false);
  out.trunk.zero_grad();
  auto score = ops::slice(&tape, out.scores, 1, class_id, 1);
  tape.backward(score);

  const int f = out.trunk.dim(1), g = out.trunk.dim(2);
  Tensor<T> act({f, g, g});
  Tensor<T> grad({f, g, g});
  std::copy(out.trunk.raw(), out.trunk.raw() + act.size(), act.raw());
  auto tg = out.trunk.grad();
  std::copy(tg.begin(), tg.begin() + grad.size(), grad.raw());
  // evaluation must not leak gradient mass into the training state
  for (auto& [name, p] : model.named_params()) p.zero_grad();
  return gradmap_center(build_gradmap(act, grad), model.grid());
}

}  // namespace capsloc
