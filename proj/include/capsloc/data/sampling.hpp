#pragma once

#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

#include "capsloc/core/error.hpp"
#include "capsloc/core/random.hpp"
#include "capsloc/data/moving.hpp"

namespace capsloc::data {

/// Flat supervised set drawn from sequences: one item per picked frame,
/// carrying the frame pixels, every digit label, and the analytic centers.
struct SupervisedSet {
  int count = 0;
  int digits = 0;
  int canvas = 0;
  std::vector<std::uint8_t> images;   // [M, canvas, canvas]
  std::vector<std::uint8_t> labels;   // [M, D]
  std::vector<float> centers;         // [M, D, 2]

  const std::uint8_t* image(int i) const {
    return images.data() + static_cast<std::size_t>(i) * canvas * canvas;
  }
};

/// Picks `frames_per_sequence` distinct frames from every sequence and
/// shuffles the resulting items. frames_per_sequence equal to the sequence
/// length takes every frame exactly once.
inline SupervisedSet sample_frames(const MovingDataset& ds,
                                   int frames_per_sequence,
                                   std::uint64_t seed) {
  if (frames_per_sequence < 1 || frames_per_sequence > ds.frames_per_seq)
    throw ConfigError("frames_per_sequence must be in 1.." +
                      std::to_string(ds.frames_per_seq));
  Rng rng(seed);
  std::vector<std::pair<int, int>> picks;  // (sequence, frame)
  picks.reserve(static_cast<std::size_t>(ds.count) * frames_per_sequence);
  std::vector<int> frame_ids(static_cast<std::size_t>(ds.frames_per_seq));
  std::iota(frame_ids.begin(), frame_ids.end(), 0);
  for (int n = 0; n < ds.count; ++n) {
    rng.shuffle(frame_ids);
    for (int k = 0; k < frames_per_sequence; ++k)
      picks.emplace_back(n, frame_ids[static_cast<std::size_t>(k)]);
  }
  rng.shuffle(picks);

  SupervisedSet out;
  out.count = static_cast<int>(picks.size());
  out.digits = ds.digits_per_seq;
  out.canvas = ds.canvas;
  const std::size_t fb = ds.frame_bytes();
  out.images.resize(static_cast<std::size_t>(out.count) * fb);
  out.labels.resize(static_cast<std::size_t>(out.count) * out.digits);
  out.centers.resize(static_cast<std::size_t>(out.count) * out.digits * 2);
  for (int i = 0; i < out.count; ++i) {
    const auto [n, t] = picks[static_cast<std::size_t>(i)];
    const std::uint8_t* src = ds.frame(n, t);
    std::copy(src, src + fb, out.images.begin() + static_cast<std::size_t>(i) * fb);
    for (int d = 0; d < out.digits; ++d) {
      out.labels[static_cast<std::size_t>(i) * out.digits + d] =
          ds.labels[static_cast<std::size_t>(n) * out.digits + d];
      out.centers[(static_cast<std::size_t>(i) * out.digits + d) * 2 + 0] =
          ds.traj_at(n, t, d, 0);
      out.centers[(static_cast<std::size_t>(i) * out.digits + d) * 2 + 1] =
          ds.traj_at(n, t, d, 1);
    }
  }
  return out;
}

}  // namespace capsloc::data
