#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "capsloc/core/error.hpp"
#include "capsloc/core/random.hpp"
#include "capsloc/data/idx.hpp"

namespace capsloc::data {

/// One digit's bookkeeping inside a sequence.
struct MovingDigit {
  int label = 0;
  int source_index = 0;
  int speed = 0;  // pixels per frame
};

/// A generated sequence: frames, the digits riding in it, and the analytic
/// trajectory of each digit's patch center, normalized by the canvas size.
struct MovingSample {
  std::vector<std::uint8_t> frames;  // [T, canvas, canvas]
  std::vector<MovingDigit> digits;
  std::vector<float> traj;           // [T, D, 2] as (x=row, y=col)
};

/// A full set of sequences in flat buffers, ready for the on-disk container.
struct MovingDataset {
  int count = 0;
  int frames_per_seq = 0;
  int digits_per_seq = 0;
  int canvas = 64;
  int patch = 28;
  std::uint64_t seed = 0;
  std::vector<std::uint8_t> frames;  // [N, T, canvas, canvas]
  std::vector<std::uint8_t> labels;  // [N, D]
  std::vector<float> traj;           // [N, T, D, 2]

  std::size_t frame_bytes() const {
    return static_cast<std::size_t>(canvas) * canvas;
  }
  const std::uint8_t* frame(int n, int t) const {
    return frames.data() +
           (static_cast<std::size_t>(n) * frames_per_seq + t) * frame_bytes();
  }
  float traj_at(int n, int t, int d, int axis) const {
    return traj[((static_cast<std::size_t>(n) * frames_per_seq + t) *
                     digits_per_seq +
                 d) *
                    2 +
                axis];
  }
};

namespace detail {

/// Advances a 1-d real position with elastic reflection so the patch's
/// top-left stays inside [0, limit].
inline void bounce_step(double& p, double& v, double limit) {
  p += v;
  while (p < 0.0 || p > limit) {
    if (p < 0.0) {
      p = -p;
      v = -v;
    } else {
      p = 2.0 * limit - p;
      v = -v;
    }
  }
}

}  // namespace detail

/// Straight-line motion with elastic bounce. Returns the patch's top-left
/// position (row, col) for each of `frames` frames, the first entry being
/// the start position itself.
inline std::vector<std::pair<double, double>> simulate_positions(
    double row, double col, double v_row, double v_col, int frames,
    int canvas, int patch) {
  const double limit = canvas - patch;
  if (row < 0 || row > limit || col < 0 || col > limit)
    throw DataFormatError("start position puts the patch outside the canvas");
  std::vector<std::pair<double, double>> out;
  out.reserve(static_cast<std::size_t>(frames));
  out.emplace_back(row, col);
  for (int t = 1; t < frames; ++t) {
    detail::bounce_step(row, v_row, limit);
    detail::bounce_step(col, v_col, limit);
    out.emplace_back(row, col);
  }
  return out;
}

/// Overlap composition: per-pixel maximum of the patch onto the frame.
inline void compose_max(std::uint8_t* frame, int canvas,
                        const std::uint8_t* patch, int patch_size, int r0,
                        int c0) {
  for (int r = 0; r < patch_size; ++r) {
    const int fr = r0 + r;
    if (fr < 0 || fr >= canvas) continue;
    for (int c = 0; c < patch_size; ++c) {
      const int fc = c0 + c;
      if (fc < 0 || fc >= canvas) continue;
      std::uint8_t& px = frame[fr * canvas + fc];
      px = std::max(px, patch[r * patch_size + c]);
    }
  }
}

/// One sequence: distinct classes, uniform start over in-canvas placements,
/// direction uniform on the circle, integer speed in pixels/frame. Positions
/// evolve as reals; rendering rounds to the nearest pixel while the
/// trajectory records the exact analytic centers.
inline MovingSample generate_moving_sample(
    const DigitSet& source, const std::vector<std::vector<int>>& by_class,
    int digits, int frames, int canvas, Rng& rng) {
  std::vector<int> classes;
  for (int k = 0; k < static_cast<int>(by_class.size()); ++k)
    if (!by_class[static_cast<std::size_t>(k)].empty()) classes.push_back(k);
  if (digits < 1 || digits > static_cast<int>(classes.size()))
    throw ConfigError("cannot place " + std::to_string(digits) +
                      " digits with " + std::to_string(classes.size()) +
                      " distinct classes available");
  const int patch = source.rows;
  if (source.rows != source.cols || patch > canvas)
    throw DataFormatError("digit patches must be square and fit the canvas");
  rng.shuffle(classes);

  MovingSample s;
  s.frames.assign(static_cast<std::size_t>(frames) * canvas * canvas, 0);
  s.traj.assign(static_cast<std::size_t>(frames) * digits * 2, 0.f);
  const double limit = canvas - patch;
  const double half = patch / 2.0;
  for (int d = 0; d < digits; ++d) {
    MovingDigit md;
    md.label = classes[static_cast<std::size_t>(d)];
    const auto& pool = by_class[static_cast<std::size_t>(md.label)];
    md.source_index = pool[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1))];
    const double row = rng.uniform(0.0, limit);
    const double col = rng.uniform(0.0, limit);
    const double theta = rng.uniform(0.0, 8.0 * std::atan(1.0));
    md.speed = static_cast<int>(rng.uniform_int(1, 9));
    const double v_row = md.speed * std::cos(theta);
    const double v_col = md.speed * std::sin(theta);
    auto pos = simulate_positions(row, col, v_row, v_col, frames, canvas, patch);
    const std::uint8_t* glyph =
        source.images.data() +
        static_cast<std::size_t>(md.source_index) * patch * patch;
    for (int t = 0; t < frames; ++t) {
      compose_max(s.frames.data() + static_cast<std::size_t>(t) * canvas * canvas,
                  canvas, glyph, patch,
                  static_cast<int>(std::llround(pos[t].first)),
                  static_cast<int>(std::llround(pos[t].second)));
      float* tr = s.traj.data() + (static_cast<std::size_t>(t) * digits + d) * 2;
      tr[0] = static_cast<float>((pos[t].first + half) / canvas);
      tr[1] = static_cast<float>((pos[t].second + half) / canvas);
    }
    s.digits.push_back(md);
  }
  return s;
}

/// N sequences with per-sample forked RNG streams, so generation order (or
/// parallel generation) cannot change the content.
inline MovingDataset generate_moving_dataset(const DigitSet& source,
                                             int n_samples,
                                             int digits_per_sample,
                                             std::uint64_t seed,
                                             int frames = 20,
                                             int canvas = 64) {
  if (n_samples <= 0) throw ConfigError("n_samples must be positive");
  if (frames <= 0) throw ConfigError("frames must be positive");
  MovingDataset ds;
  ds.count = n_samples;
  ds.frames_per_seq = frames;
  ds.digits_per_seq = digits_per_sample;
  ds.canvas = canvas;
  ds.patch = source.rows;
  ds.seed = seed;
  ds.frames.resize(static_cast<std::size_t>(n_samples) * frames * canvas * canvas);
  ds.labels.resize(static_cast<std::size_t>(n_samples) * digits_per_sample);
  ds.traj.resize(static_cast<std::size_t>(n_samples) * frames *
                 digits_per_sample * 2);
  const auto by_class = indices_by_class(source);
  const Rng master(seed);
  for (int n = 0; n < n_samples; ++n) {
    Rng rng = master.fork(static_cast<std::uint64_t>(n));
    MovingSample s = generate_moving_sample(source, by_class,
                                            digits_per_sample, frames, canvas,
                                            rng);
    std::copy(s.frames.begin(), s.frames.end(),
              ds.frames.begin() +
                  static_cast<std::size_t>(n) * frames * canvas * canvas);
    for (int d = 0; d < digits_per_sample; ++d)
      ds.labels[static_cast<std::size_t>(n) * digits_per_sample + d] =
          static_cast<std::uint8_t>(s.digits[static_cast<std::size_t>(d)].label);
    std::copy(s.traj.begin(), s.traj.end(),
              ds.traj.begin() + static_cast<std::size_t>(n) * frames *
                                    digits_per_sample * 2);
  }
  return ds;
}

}  // namespace capsloc::data
