#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "capsloc/capsnet.hpp"
#include "capsloc/eval/pgm.hpp"

namespace capsloc {

/// Final-iteration routing probabilities c_i from every primary capsule to
/// one digit capsule, with fixed-width bin counts over [0,1].
struct RoutingHistogram {
  int class_id = 0;
  std::vector<double> couplings;   // one per primary capsule
  std::vector<long long> bins;
  double bin_width = 0;

  double max_coupling() const {
    return *std::max_element(couplings.begin(), couplings.end());
  }

  /// (max over capsules) / (median over capsules); the sparsity score.
  double max_median_ratio() const {
    std::vector<double> s = couplings;
    std::sort(s.begin(), s.end());
    const std::size_t n = s.size();
    const double median =
        n % 2 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
    if (median <= 0) throw NumericError("median coupling is zero");
    return s.back() / median;
  }
};

template <class T>
RoutingHistogram routing_histogram(CapsNet<T>& net, const Tensor<T>& image,
                                   int class_id, int num_bins = 50) {
  if (class_id < 0 || class_id >= net.config().digit_capsules())
    throw DimensionError("class id out of range");
  if (num_bins < 1) throw ConfigError("need at least one bin");
  if (image.rank() != 4 || image.dim(0) != 1)
    throw DimensionError("histogram takes one image [1,1,H,W]");
  auto fwd = net.forward(nullptr, image, nullptr, false);
  RoutingHistogram h;
  h.class_id = class_id;
  h.bin_width = 1.0 / num_bins;
  h.bins.assign(std::size_t(num_bins), 0);
  const int caps_in = fwd.c.dim(1);
  h.couplings.resize(std::size_t(caps_in));
  for (int i = 0; i < caps_in; ++i) {
    const double c = fwd.c.at({0, i, class_id});
    h.couplings[std::size_t(i)] = c;
    int b = int(c / h.bin_width);
    if (b >= num_bins) b = num_bins - 1;
    ++h.bins[std::size_t(b)];
  }
  return h;
}

inline void write_couplings_csv(const std::filesystem::path& path,
                                const RoutingHistogram& h) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataFormatError("cannot open " + path.string());
  out << "capsule,coupling\n";
  char buf[64];
  for (std::size_t i = 0; i < h.couplings.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g\n", i, h.couplings[i]);
    out << buf;
  }
  if (!out) throw DataFormatError("short write to " + path.string());
}

inline void write_histogram_csv(const std::filesystem::path& path,
                                const RoutingHistogram& h) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataFormatError("cannot open " + path.string());
  out << "bin_lo,bin_hi,count\n";
  char buf[96];
  for (std::size_t b = 0; b < h.bins.size(); ++b) {
    std::snprintf(buf, sizeof buf, "%.9g,%.9g,%lld\n", b * h.bin_width,
                  (b + 1) * h.bin_width, h.bins[b]);
    out << buf;
  }
  if (!out) throw DataFormatError("short write to " + path.string());
}

/// Bar chart of the bin counts as a grayscale raster: one column block per
/// bin, white bars on black, height scaled to the largest count.
inline GrayImage histogram_image(const RoutingHistogram& h, int height = 128,
                                 int bar_width = 4) {
  const int n = int(h.bins.size());
  const long long peak =
      std::max<long long>(1, *std::max_element(h.bins.begin(), h.bins.end()));
  GrayImage img(height, n * bar_width);
  for (int b = 0; b < n; ++b) {
    const int bar =
        int(std::llround(double(h.bins[std::size_t(b)]) * height / double(peak)));
    for (int r = height - bar; r < height; ++r)
      for (int c = b * bar_width; c < (b + 1) * bar_width; ++c)
        img.at(r, c) = 255;
  }
  return img;
}

}  // namespace capsloc
