#pragma once

#include <string>
#include <utility>
#include <vector>

#include "capsloc/config.hpp"
#include "capsloc/core/tensor.hpp"

namespace capsloc {

/// Normalized receptive-field centers of the primary-capsule feature map.
/// Entry (r,c) is (x,y) with x = centers[r] read top-down and y = centers[c]
/// read left-right; all capsule types at a spatial index share the entry.
struct CoordinateGrid {
  int g = 0;
  std::vector<double> centers;

  std::pair<double, double> at(int r, int c) const {
    return {centers[static_cast<std::size_t>(r)],
            centers[static_cast<std::size_t>(c)]};
  }

  /// Constant per-capsule coordinates [types*g*g, 2] with capsule index
  /// ordered (type, row, col); rows repeat across types.
  template <class T>
  Tensor<T> capsule_coords(int types) const {
    Tensor<T> out({types * g * g, 2});
    for (int t = 0; t < types; ++t)
      for (int r = 0; r < g; ++r)
        for (int c = 0; c < g; ++c) {
          const int i = (t * g + r) * g + c;
          out.at({i, 0}) = static_cast<T>(centers[static_cast<std::size_t>(r)]);
          out.at({i, 1}) = static_cast<T>(centers[static_cast<std::size_t>(c)]);
        }
    return out;
  }
};

/// Exact receptive-field composition through a stack of valid convolutions.
/// After layers (k_l, s_l): effective stride S = prod s_l, field size
/// R = 1 + sum (k_l - 1) * prod_{m<l} s_m, and output index r sees input
/// pixels [r*S, r*S + R), centered at r*S + R/2 (integer midpoint).
struct ReceptiveField {
  int stride = 1;
  int size = 1;
};

inline ReceptiveField compose_receptive_field(
    const std::vector<std::pair<int, int>>& kernel_stride) {
  ReceptiveField rf;
  for (auto [k, s] : kernel_stride) {
    rf.size += (k - 1) * rf.stride;
    rf.stride *= s;
  }
  return rf;
}

inline CoordinateGrid compute_coordinate_grid(const CapsNetConfig& cfg) {
  int g = cfg.image_size;
  for (auto [k, s] : {std::pair{cfg.conv1.kernel, cfg.conv1.stride},
                      {cfg.conv2.kernel, cfg.conv2.stride},
                      {cfg.primary_kernel, cfg.primary_stride}}) {
    if (g < k)
      throw ConfigError("feature map vanished: size " + std::to_string(g) +
                        " under kernel " + std::to_string(k));
    g = (g - k) / s + 1;
  }
  const ReceptiveField rf = compose_receptive_field(
      {{cfg.conv1.kernel, cfg.conv1.stride},
       {cfg.conv2.kernel, cfg.conv2.stride},
       {cfg.primary_kernel, cfg.primary_stride}});
  CoordinateGrid grid;
  grid.g = g;
  grid.centers.resize(static_cast<std::size_t>(g));
  for (int r = 0; r < g; ++r)
    grid.centers[static_cast<std::size_t>(r)] =
        static_cast<double>(r * rf.stride + rf.size / 2) / cfg.image_size;
  return grid;
}

}  // namespace capsloc
