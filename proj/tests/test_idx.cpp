#include <catch2/catch_amalgamated.hpp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "capsloc/data/idx.hpp"
#include "capsloc/data/synth.hpp"

using capsloc::DataFormatError;
using capsloc::data::DigitSet;
using capsloc::data::draw_glyph;
using capsloc::data::load_idx;
using capsloc::data::save_idx;
using capsloc::data::synthetic_digits;

namespace {

void write_raw(const std::string& path, const std::vector<unsigned char>& b) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(b.data()),
            static_cast<std::streamsize>(b.size()));
}

void push_be(std::vector<unsigned char>& b, std::uint32_t v) {
  b.push_back(static_cast<unsigned char>(v >> 24));
  b.push_back(static_cast<unsigned char>(v >> 16));
  b.push_back(static_cast<unsigned char>(v >> 8));
  b.push_back(static_cast<unsigned char>(v));
}

}  // namespace

TEST_CASE("idx round trip, plain and gzip") {
  DigitSet set = synthetic_digits(23, 5);
  for (bool compress : {false, true}) {
    save_idx(set, "idx_imgs.bin", "idx_labels.bin", compress);
    if (compress) {
      std::ifstream in("idx_imgs.bin", std::ios::binary);
      unsigned char m[2];
      in.read(reinterpret_cast<char*>(m), 2);
      CHECK(m[0] == 0x1f);
      CHECK(m[1] == 0x8b);
    }
    DigitSet back = load_idx("idx_imgs.bin", "idx_labels.bin");
    CHECK(back.count == 23);
    CHECK(back.rows == 28);
    CHECK(back.cols == 28);
    REQUIRE(back.images == set.images);
    REQUIRE(back.labels == set.labels);
  }
  std::remove("idx_imgs.bin");
  std::remove("idx_labels.bin");
}

TEST_CASE("idx loader rejects malformed inputs") {
  // wrong image magic
  std::vector<unsigned char> imgs;
  push_be(imgs, 0x00000805);
  push_be(imgs, 1);
  push_be(imgs, 2);
  push_be(imgs, 2);
  imgs.insert(imgs.end(), {1, 2, 3, 4});
  write_raw("bad_imgs.bin", imgs);

  std::vector<unsigned char> labels;
  push_be(labels, 0x00000801);
  push_be(labels, 1);
  labels.push_back(3);
  write_raw("ok_labels.bin", labels);
  CHECK_THROWS_AS(load_idx("bad_imgs.bin", "ok_labels.bin"), DataFormatError);

  // valid images with mismatched label count
  imgs.clear();
  push_be(imgs, 0x00000803);
  push_be(imgs, 2);
  push_be(imgs, 2);
  push_be(imgs, 2);
  imgs.insert(imgs.end(), {1, 2, 3, 4, 5, 6, 7, 8});
  write_raw("ok_imgs.bin", imgs);
  std::vector<unsigned char> two_labels;
  push_be(two_labels, 0x00000801);
  push_be(two_labels, 3);
  two_labels.insert(two_labels.end(), {1, 2, 3});
  write_raw("bad_labels.bin", two_labels);
  CHECK_THROWS_AS(load_idx("ok_imgs.bin", "bad_labels.bin"), DataFormatError);

  // truncated image payload
  imgs.resize(imgs.size() - 3);
  write_raw("short_imgs.bin", imgs);
  CHECK_THROWS_AS(load_idx("short_imgs.bin", "ok_labels.bin"), DataFormatError);

  // label value out of range
  std::vector<unsigned char> hot_labels;
  push_be(hot_labels, 0x00000801);
  push_be(hot_labels, 2);
  hot_labels.insert(hot_labels.end(), {4, 11});
  write_raw("hot_labels.bin", hot_labels);
  CHECK_THROWS_AS(load_idx("ok_imgs.bin", "hot_labels.bin"), DataFormatError);

  for (const char* f : {"bad_imgs.bin", "ok_labels.bin", "ok_imgs.bin",
                        "bad_labels.bin", "short_imgs.bin", "hot_labels.bin"})
    std::remove(f);
}

TEST_CASE("synthetic digits are balanced, deterministic, and distinct") {
  DigitSet a = synthetic_digits(30, 11);
  DigitSet b = synthetic_digits(30, 11);
  DigitSet c = synthetic_digits(30, 12);
  REQUIRE(a.images == b.images);
  CHECK(a.images != c.images);
  for (int i = 0; i < 30; ++i) CHECK(a.labels[i] == i % 10);

  // every glyph has visible ink
  for (int i = 0; i < 30; ++i) {
    long ink = 0;
    for (int p = 0; p < 28 * 28; ++p) ink += a.images[i * 28 * 28 + p] > 0;
    CHECK(ink > 30);
  }

  // the ten classes render pairwise differently under identical jitter
  std::vector<std::vector<std::uint8_t>> glyphs(10,
                                                std::vector<std::uint8_t>(784));
  for (int d = 0; d < 10; ++d) draw_glyph(d, 255, 0, 0, glyphs[d].data());
  for (int i = 0; i < 10; ++i)
    for (int j = i + 1; j < 10; ++j)
      CHECK(glyphs[i] != glyphs[j]);

  CHECK_THROWS_AS(synthetic_digits(0, 1), DataFormatError);
  std::vector<std::uint8_t> buf(784);
  CHECK_THROWS_AS(draw_glyph(10, 255, 0, 0, buf.data()), DataFormatError);
}
