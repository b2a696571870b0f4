#pragma once

#include <cstdint>
#include <cstring>

#include "capsloc/core/error.hpp"
#include "capsloc/core/random.hpp"
#include "capsloc/data/idx.hpp"

namespace capsloc::data {

/// Seven-segment style digit glyphs on a 28x28 canvas. A self-contained
/// stand-in digit source: ten visually distinct classes, deterministic given
/// the seed, served through the same IDX pipeline as real scans.
namespace detail {

// segment bit order: A top, B top-right, C bottom-right, D bottom,
// E bottom-left, F top-left, G middle
inline constexpr std::uint8_t kSegments[10] = {
    0b0111111,  // 0: ABCDEF
    0b0000110,  // 1: BC
    0b1011011,  // 2: ABDEG
    0b1001111,  // 3: ABCDG
    0b1100110,  // 4: BCFG
    0b1101101,  // 5: ACDFG
    0b1111101,  // 6: ACDEFG
    0b0000111,  // 7: ABC
    0b1111111,  // 8: all
    0b1101111,  // 9: ABCDFG
};

inline void fill_rect(std::uint8_t* img, int r0, int r1, int c0, int c1,
                      int dr, int dc, std::uint8_t value) {
  for (int r = r0 + dr; r <= r1 + dr; ++r)
    for (int c = c0 + dc; c <= c1 + dc; ++c)
      if (r >= 0 && r < 28 && c >= 0 && c < 28)
        img[r * 28 + c] = value;
}

}  // namespace detail

/// Renders one digit glyph into a zeroed 28x28 buffer, shifted by (dr, dc)
/// pixels at the given stroke intensity.
inline void draw_glyph(int digit, std::uint8_t intensity, int dr, int dc,
                       std::uint8_t* img) {
  if (digit < 0 || digit > 9)
    throw DataFormatError("glyph class out of range 0..9");
  std::memset(img, 0, 28 * 28);
  const std::uint8_t seg = detail::kSegments[digit];
  // horizontals: rows A=6..7, G=13..14, D=21..22; cols 9..18
  if (seg & 0b0000001) detail::fill_rect(img, 6, 7, 9, 18, dr, dc, intensity);
  if (seg & 0b1000000) detail::fill_rect(img, 13, 14, 9, 18, dr, dc, intensity);
  if (seg & 0b0001000) detail::fill_rect(img, 21, 22, 9, 18, dr, dc, intensity);
  // verticals: cols left=7..8, right=19..20; rows 6..14 upper, 14..22 lower
  if (seg & 0b0100000) detail::fill_rect(img, 6, 14, 7, 8, dr, dc, intensity);
  if (seg & 0b0000010) detail::fill_rect(img, 6, 14, 19, 20, dr, dc, intensity);
  if (seg & 0b0010000) detail::fill_rect(img, 14, 22, 7, 8, dr, dc, intensity);
  if (seg & 0b0000100) detail::fill_rect(img, 14, 22, 19, 20, dr, dc, intensity);
}

/// A balanced synthetic digit set: classes cycle 0..9 so any count >= 10
/// covers every class; stroke intensity and a small shift vary per sample.
inline DigitSet synthetic_digits(int count, std::uint64_t seed) {
  if (count <= 0) throw DataFormatError("synthetic set needs a positive count");
  DigitSet set;
  set.count = count;
  set.rows = 28;
  set.cols = 28;
  set.images.resize(static_cast<std::size_t>(count) * 28 * 28);
  set.labels.resize(static_cast<std::size_t>(count));
  Rng rng(seed);
  for (int i = 0; i < count; ++i) {
    const int digit = i % 10;
    set.labels[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(digit);
    const auto intensity =
        static_cast<std::uint8_t>(rng.uniform_int(190, 255));
    const int dr = static_cast<int>(rng.uniform_int(-2, 2));
    const int dc = static_cast<int>(rng.uniform_int(-2, 2));
    draw_glyph(digit, intensity, dr, dc,
               set.images.data() + static_cast<std::size_t>(i) * 28 * 28);
  }
  return set;
}

}  // namespace capsloc::data
