#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "capsloc/capsnet.hpp"
#include "capsloc/eval/pgm.hpp"

namespace capsloc {

/// One decoded image of a manipulation grid: the chosen coordinate atom was
/// set to (derived value + offset) before decoding. `out_of_range` flags
/// atom values pushed outside [0,1], where decodes get unreliable.
template <class T>
struct ManipulationRow {
  double offset = 0;
  double value = 0;
  bool out_of_range = false;
  Tensor<T> image;      // [H, W]
  double centroid_x = 0;  // vertical, in [0,1]
  double centroid_y = 0;  // horizontal, in [0,1]
};

template <class T>
struct ManipulationGrid {
  int class_id = 0;
  int axis = 0;  // 0 = vertical (x), 1 = horizontal (y)
  double derived = 0;
  std::vector<ManipulationRow<T>> rows;
};

inline std::vector<double> default_offsets() {
  std::vector<double> v;
  for (int i = -4; i <= 4; ++i) v.push_back(i * 0.05);
  return v;
}

/// Intensity-weighted mean pixel position over the foreground, defined as
/// pixels at or above 0.2 of the maximum intensity. Positions are pixel
/// centers normalized by the image side.
template <class T>
std::pair<double, double> foreground_centroid(const Tensor<T>& img) {
  if (img.rank() != 2) throw DimensionError("centroid expects [H,W]");
  const int h = img.dim(0), w = img.dim(1);
  T peak = img.raw()[0];
  for (std::size_t i = 1; i < img.size(); ++i)
    peak = std::max(peak, img.raw()[i]);
  if (!(peak > T(0))) throw DegenerateError("image has no foreground");
  const T cut = T(0.2) * peak;
  double mass = 0, mr = 0, mc = 0;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const double v = img.at({r, c});
      if (v < cut) continue;
      mass += v;
      mr += v * (r + 0.5);
      mc += v * (c + 0.5);
    }
  return {mr / mass / h, mc / mass / w};
}

/// Decode the true-class capsule of one [1,1,H,W] image at a ladder of
/// coordinate offsets. Offset 0 reproduces the unmodified reconstruction
/// bit-exactly because the stored atom value is reused unchanged.
template <class T>
ManipulationGrid<T> manipulate_coordinate(
    CapsNet<T>& net, const Tensor<T>& image, int class_id, int axis,
    const std::vector<double>& offsets = default_offsets()) {
  const auto& cfg = net.config();
  if (axis != 0 && axis != 1)
    throw ConfigError("axis must be 0 (vertical) or 1 (horizontal)");
  if (offsets.empty()) throw ConfigError("need at least one offset");
  auto fwd = net.forward(nullptr, image, nullptr, false);
  if (class_id < 0) {
    auto mask = net.argmax_mask(fwd.norms);
    for (int k = 0; k < cfg.num_classes; ++k)
      if (mask.at({0, k}) > T(0)) class_id = k;
  }
  if (class_id >= cfg.num_classes)
    throw DimensionError("class id out of range");

  Tensor<T> mask({1, cfg.num_classes});
  mask.at({0, class_id}) = T(1);

  ManipulationGrid<T> grid;
  grid.class_id = class_id;
  grid.axis = axis;
  grid.derived = fwd.digit_caps.at({0, class_id, axis});

  const int h = cfg.image_size;
  for (double off : offsets) {
    ManipulationRow<T> row;
    row.offset = off;
    Tensor<T> caps = fwd.digit_caps.clone();
    if (off != 0.0)
      caps.at({0, class_id, axis}) =
          static_cast<T>(grid.derived + off);
    row.value = caps.at({0, class_id, axis});
    row.out_of_range = row.value < 0.0 || row.value > 1.0;
    auto decoded = net.decode(nullptr, caps, mask);
    row.image = Tensor<T>({h, h});
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < h; ++c)
        row.image.at({r, c}) = decoded.at({0, 0, r, c});
    auto [cx, cy] = foreground_centroid(row.image);
    row.centroid_x = cx;
    row.centroid_y = cy;
    grid.rows.push_back(std::move(row));
  }
  return grid;
}

/// offset,value,out_of_range,centroid_x,centroid_y per decoded row.
template <class T>
void write_manipulation_csv(const std::filesystem::path& path,
                            const ManipulationGrid<T>& g) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataFormatError("cannot open " + path.string());
  out << "offset,value,out_of_range,centroid_x,centroid_y\n";
  char buf[160];
  for (const auto& r : g.rows) {
    std::snprintf(buf, sizeof buf, "%.9g,%.9g,%d,%.9g,%.9g\n", r.offset,
                  r.value, r.out_of_range ? 1 : 0, r.centroid_x,
                  r.centroid_y);
    out << buf;
  }
  if (!out) throw DataFormatError("short write to " + path.string());
}

/// All decoded rows side by side in one raster, in offset order.
template <class T>
GrayImage manipulation_montage(const ManipulationGrid<T>& g) {
  if (g.rows.empty()) throw DimensionError("empty manipulation grid");
  const int h = g.rows.front().image.dim(0);
  const int w = g.rows.front().image.dim(1);
  GrayImage img(h, w * int(g.rows.size()));
  for (std::size_t i = 0; i < g.rows.size(); ++i) {
    GrayImage one = to_gray(g.rows[i].image);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c)
        img.at(r, int(i) * w + c) = one.at(r, c);
  }
  return img;
}

}  // namespace capsloc
