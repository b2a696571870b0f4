#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "capsloc/core/error.hpp"
#include "capsloc/core/tensor.hpp"

namespace capsloc {

/// 8-bit grayscale image for report artifacts (binary P5 portable graymap).
struct GrayImage {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(int r, int c) : rows(r), cols(c), pixels(std::size_t(r) * c, 0) {}

  std::uint8_t& at(int r, int c) { return pixels[std::size_t(r) * cols + c]; }
  std::uint8_t at(int r, int c) const {
    return pixels[std::size_t(r) * cols + c];
  }
};

/// Quantize a [H,W] tensor of intensities in [0,1] to 8-bit gray.
template <class T>
GrayImage to_gray(const Tensor<T>& img) {
  if (img.rank() != 2) throw DimensionError("to_gray expects [H,W]");
  GrayImage g(img.dim(0), img.dim(1));
  for (std::size_t i = 0; i < img.size(); ++i) {
    double v = static_cast<double>(img.raw()[i]);
    v = v < 0 ? 0 : (v > 1 ? 1 : v);
    g.pixels[i] = static_cast<std::uint8_t>(std::llround(v * 255.0));
  }
  return g;
}

inline void write_pgm(const std::filesystem::path& path, const GrayImage& g) {
  if (g.rows <= 0 || g.cols <= 0 ||
      g.pixels.size() != std::size_t(g.rows) * g.cols)
    throw DimensionError("pgm image has inconsistent dimensions");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataFormatError("cannot open " + path.string());
  out << "P5\n" << g.cols << " " << g.rows << "\n255\n";
  out.write(reinterpret_cast<const char*>(g.pixels.data()),
            static_cast<std::streamsize>(g.pixels.size()));
  if (!out) throw DataFormatError("short write to " + path.string());
}

inline GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataFormatError("cannot open " + path.string());
  std::string magic;
  int cols = 0, rows = 0, maxval = 0;
  in >> magic >> cols >> rows >> maxval;
  if (magic != "P5" || cols <= 0 || rows <= 0 || maxval != 255)
    throw DataFormatError(path.string() + " is not an 8-bit P5 graymap");
  in.get();  // single whitespace byte after the header
  GrayImage g(rows, cols);
  in.read(reinterpret_cast<char*>(g.pixels.data()),
          static_cast<std::streamsize>(g.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(g.pixels.size()))
    throw DataFormatError(path.string() + " is truncated");
  return g;
}

}  // namespace capsloc
