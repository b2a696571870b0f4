#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <zlib.h>

#include "capsloc/core/error.hpp"

namespace capsloc::data {

/// A set of labeled digit images in their native resolution.
struct DigitSet {
  int count = 0;
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> images;  // [count, rows, cols]
  std::vector<std::uint8_t> labels;  // [count], values 0..9
};

namespace detail {

/// RAII gzFile. gzread transparently passes through files that are not
/// gzip-compressed, so one code path serves both encodings.
class GzReader {
 public:
  explicit GzReader(const std::string& path) : f_(gzopen(path.c_str(), "rb")) {
    if (!f_) throw DataFormatError("cannot open " + path);
    path_ = path;
  }
  ~GzReader() { gzclose(f_); }
  GzReader(const GzReader&) = delete;
  GzReader& operator=(const GzReader&) = delete;

  void read(void* dst, std::size_t len) {
    if (gzread(f_, dst, static_cast<unsigned>(len)) !=
        static_cast<int>(len))
      throw DataFormatError(path_ + ": truncated file");
  }

  std::uint32_t read_be_u32() {
    unsigned char b[4];
    read(b, 4);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
  }

  bool at_eof() {
    char c;
    return gzread(f_, &c, 1) == 0;
  }

 private:
  gzFile f_;
  std::string path_;
};

class GzWriter {
 public:
  GzWriter(const std::string& path, bool compress)
      : f_(gzopen(path.c_str(), compress ? "wb" : "wbT")), path_(path) {
    if (!f_) throw DataFormatError("cannot write " + path);
  }
  ~GzWriter() { gzclose(f_); }
  GzWriter(const GzWriter&) = delete;
  GzWriter& operator=(const GzWriter&) = delete;

  void write(const void* src, std::size_t len) {
    if (gzwrite(f_, src, static_cast<unsigned>(len)) !=
        static_cast<int>(len))
      throw DataFormatError(path_ + ": short write");
  }

  void write_be_u32(std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v)};
    write(b, 4);
  }

 private:
  gzFile f_;
  std::string path_;
};

}  // namespace detail

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Reads an IDX image/label file pair (plain or gzip-compressed) and checks
/// the two files describe the same number of items.
inline DigitSet load_idx(const std::string& images_path,
                         const std::string& labels_path) {
  DigitSet set;
  {
    detail::GzReader in(images_path);
    if (in.read_be_u32() != kIdxImagesMagic)
      throw DataFormatError(images_path + ": bad image magic");
    set.count = static_cast<int>(in.read_be_u32());
    set.rows = static_cast<int>(in.read_be_u32());
    set.cols = static_cast<int>(in.read_be_u32());
    if (set.count < 0 || set.rows <= 0 || set.cols <= 0)
      throw DataFormatError(images_path + ": bad dimensions");
    set.images.resize(static_cast<std::size_t>(set.count) * set.rows * set.cols);
    in.read(set.images.data(), set.images.size());
    if (!in.at_eof())
      throw DataFormatError(images_path + ": trailing bytes");
  }
  {
    detail::GzReader in(labels_path);
    if (in.read_be_u32() != kIdxLabelsMagic)
      throw DataFormatError(labels_path + ": bad label magic");
    const int n = static_cast<int>(in.read_be_u32());
    if (n != set.count)
      throw DataFormatError(labels_path + ": " + std::to_string(n) +
                            " labels for " + std::to_string(set.count) +
                            " images");
    set.labels.resize(static_cast<std::size_t>(n));
    in.read(set.labels.data(), set.labels.size());
    if (!in.at_eof())
      throw DataFormatError(labels_path + ": trailing bytes");
  }
  for (std::uint8_t l : set.labels)
    if (l > 9)
      throw DataFormatError(labels_path + ": label out of range 0..9");
  return set;
}

inline std::vector<std::vector<int>> indices_by_class(const DigitSet& set) {
  std::vector<std::vector<int>> by(10);
  for (int i = 0; i < set.count; ++i) by[set.labels[i]].push_back(i);
  return by;
}

/// Writes an IDX pair, optionally gzip-compressed.
inline void save_idx(const DigitSet& set, const std::string& images_path,
                     const std::string& labels_path, bool compress = false) {
  if (set.images.size() !=
          static_cast<std::size_t>(set.count) * set.rows * set.cols ||
      set.labels.size() != static_cast<std::size_t>(set.count))
    throw DimensionError("digit set buffers do not match its counts");
  {
    detail::GzWriter out(images_path, compress);
    out.write_be_u32(kIdxImagesMagic);
    out.write_be_u32(static_cast<std::uint32_t>(set.count));
    out.write_be_u32(static_cast<std::uint32_t>(set.rows));
    out.write_be_u32(static_cast<std::uint32_t>(set.cols));
    out.write(set.images.data(), set.images.size());
  }
  {
    detail::GzWriter out(labels_path, compress);
    out.write_be_u32(kIdxLabelsMagic);
    out.write_be_u32(static_cast<std::uint32_t>(set.count));
    out.write(set.labels.data(), set.labels.size());
  }
}

}  // namespace capsloc::data
