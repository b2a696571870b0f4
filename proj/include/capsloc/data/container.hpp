#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "capsloc/config.hpp"
#include "capsloc/core/digest.hpp"
#include "capsloc/core/error.hpp"
#include "capsloc/data/moving.hpp"

namespace capsloc::data {

static_assert(std::endian::native == std::endian::little,
              "traj.bin stores little-endian 32-bit reals");

/// Directory layout of a dataset:
///   meta.json   counts, geometry, generator seed, format version
///   frames.bin  raw bytes [N, T, canvas, canvas]
///   labels.bin  raw bytes [N, D]
///   traj.bin    little-endian 32-bit reals [N, T, D, 2]
namespace detail {

inline void write_file(const std::filesystem::path& p, const void* data,
                       std::size_t len) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw DataFormatError("cannot write " + p.string());
  out.write(static_cast<const char*>(data),
            static_cast<std::streamsize>(len));
  if (!out) throw DataFormatError("short write to " + p.string());
}

inline std::vector<char> read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataFormatError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace detail

inline void write_container(const std::string& dir, const MovingDataset& ds) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  json meta{{"format_version", 1},
            {"count", ds.count},
            {"frames_per_seq", ds.frames_per_seq},
            {"digits_per_seq", ds.digits_per_seq},
            {"canvas", ds.canvas},
            {"patch", ds.patch},
            {"seed", ds.seed}};
  const std::string m = meta.dump(2) + "\n";
  detail::write_file(fs::path(dir) / "meta.json", m.data(), m.size());
  detail::write_file(fs::path(dir) / "frames.bin", ds.frames.data(),
                     ds.frames.size());
  detail::write_file(fs::path(dir) / "labels.bin", ds.labels.data(),
                     ds.labels.size());
  detail::write_file(fs::path(dir) / "traj.bin", ds.traj.data(),
                     sizeof(float) * ds.traj.size());
}

inline MovingDataset read_container(const std::string& dir) {
  namespace fs = std::filesystem;
  const auto meta_bytes = detail::read_file(fs::path(dir) / "meta.json");
  json meta;
  try {
    meta = json::parse(meta_bytes.begin(), meta_bytes.end());
  } catch (const json::exception& e) {
    throw DataFormatError(dir + "/meta.json: " + e.what());
  }
  check_known_keys(meta, "dataset meta",
                   {"format_version", "count", "frames_per_seq",
                    "digits_per_seq", "canvas", "patch", "seed"});
  if (meta.value("format_version", 0) != 1)
    throw DataFormatError(dir + ": unsupported dataset format version");

  MovingDataset ds;
  ds.count = meta.at("count").get<int>();
  ds.frames_per_seq = meta.at("frames_per_seq").get<int>();
  ds.digits_per_seq = meta.at("digits_per_seq").get<int>();
  ds.canvas = meta.at("canvas").get<int>();
  ds.patch = meta.at("patch").get<int>();
  ds.seed = meta.at("seed").get<std::uint64_t>();
  if (ds.count <= 0 || ds.frames_per_seq <= 0 || ds.digits_per_seq <= 0 ||
      ds.canvas <= 0)
    throw DataFormatError(dir + ": non-positive dataset dimensions");

  const auto frames = detail::read_file(fs::path(dir) / "frames.bin");
  const auto labels = detail::read_file(fs::path(dir) / "labels.bin");
  const auto traj = detail::read_file(fs::path(dir) / "traj.bin");
  const std::size_t want_frames = static_cast<std::size_t>(ds.count) *
                                  ds.frames_per_seq * ds.canvas * ds.canvas;
  const std::size_t want_labels =
      static_cast<std::size_t>(ds.count) * ds.digits_per_seq;
  const std::size_t want_traj = static_cast<std::size_t>(ds.count) *
                                ds.frames_per_seq * ds.digits_per_seq * 2;
  if (frames.size() != want_frames)
    throw DataFormatError(dir + "/frames.bin: expected " +
                          std::to_string(want_frames) + " bytes, got " +
                          std::to_string(frames.size()));
  if (labels.size() != want_labels)
    throw DataFormatError(dir + "/labels.bin: expected " +
                          std::to_string(want_labels) + " bytes, got " +
                          std::to_string(labels.size()));
  if (traj.size() != sizeof(float) * want_traj)
    throw DataFormatError(dir + "/traj.bin: expected " +
                          std::to_string(sizeof(float) * want_traj) +
                          " bytes, got " + std::to_string(traj.size()));

  ds.frames.assign(frames.begin(), frames.end());
  ds.labels.assign(labels.begin(), labels.end());
  ds.traj.resize(want_traj);
  std::memcpy(ds.traj.data(), traj.data(), traj.size());
  return ds;
}

/// Content digest of a dataset directory: the SHA-256 of each file's digest,
/// keyed by name, so any byte change in any file changes the result.
inline std::string container_digest(const std::string& dir) {
  namespace fs = std::filesystem;
  Sha256 h;
  for (const char* name : {"meta.json", "frames.bin", "labels.bin", "traj.bin"}) {
    h.update(std::string(name) + ":");
    h.update(sha256_file((fs::path(dir) / name).string()) + "\n");
  }
  return h.hex();
}

}  // namespace capsloc::data
