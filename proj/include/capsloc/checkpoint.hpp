#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "capsloc/config.hpp"
#include "capsloc/core/error.hpp"
#include "capsloc/core/tensor.hpp"

namespace capsloc {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is written as little-endian raw floats");

/// On-disk model/optimizer snapshot.
///
/// Byte layout:
///   bytes 0..7    magic "CAPSLOC1"
///   bytes 8..15   unsigned 64-bit little-endian manifest length M
///   bytes 16..16+M-1   manifest, UTF-8 JSON
///   remainder     payload: raw little-endian 32-bit floats, densely packed
///
/// The manifest holds format_version, model_kind, the model config block,
/// epoch, the serialized RNG state, free-form extra metadata, and one entry
/// per tensor: name, shape, dtype ("f32") and byte offset into the payload.
struct Checkpoint {
  static constexpr char kMagic[9] = "CAPSLOC1";

  std::string model_kind;
  json config = json::object();
  json extra = json::object();
  long long epoch = 0;
  std::string rng_state;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;

  Tensor<float>* find(const std::string& name) {
    for (auto& [n, t] : tensors)
      if (n == name) return &t;
    return nullptr;
  }

  const Tensor<float>& require(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return t;
    throw DataFormatError("checkpoint has no tensor named " + name);
  }

  void save(const std::string& path) const {
    json manifest;
    manifest["format_version"] = 1;
    manifest["model_kind"] = model_kind;
    manifest["config"] = config;
    manifest["epoch"] = epoch;
    manifest["rng"] = rng_state;
    manifest["extra"] = extra;
    json entries = json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : tensors) {
      entries.push_back({{"name", name},
                         {"shape", t.shape()},
                         {"dtype", "f32"},
                         {"offset", offset}});
      offset += sizeof(float) * t.size();
    }
    manifest["tensors"] = entries;
    const std::string m = manifest.dump();

    const std::string tmp = path + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw DataFormatError("cannot write " + tmp);
      out.write(kMagic, 8);
      const std::uint64_t mlen = m.size();
      char len[8];
      for (int i = 0; i < 8; ++i)
        len[i] = static_cast<char>((mlen >> (8 * i)) & 0xff);
      out.write(len, 8);
      out.write(m.data(), static_cast<std::streamsize>(m.size()));
      for (const auto& [name, t] : tensors)
        out.write(reinterpret_cast<const char*>(t.raw()),
                  static_cast<std::streamsize>(sizeof(float) * t.size()));
      if (!out) throw DataFormatError("short write to " + tmp);
    }
    std::filesystem::rename(tmp, path);
  }

  static Checkpoint load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataFormatError("cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
      throw DataFormatError(path + ": not a checkpoint file");
    char len[8];
    in.read(len, 8);
    if (!in) throw DataFormatError(path + ": truncated header");
    std::uint64_t mlen = 0;
    for (int i = 0; i < 8; ++i)
      mlen |= static_cast<std::uint64_t>(static_cast<unsigned char>(len[i]))
              << (8 * i);
    std::string m(mlen, '\0');
    in.read(m.data(), static_cast<std::streamsize>(mlen));
    if (!in) throw DataFormatError(path + ": truncated manifest");

    json manifest;
    try {
      manifest = json::parse(m);
    } catch (const json::exception& e) {
      throw DataFormatError(path + ": bad manifest: " + e.what());
    }
    check_known_keys(manifest, "checkpoint manifest",
                     {"format_version", "model_kind", "config", "epoch", "rng",
                      "extra", "tensors"});
    if (manifest.value("format_version", 0) != 1)
      throw DataFormatError(path + ": unsupported format version");

    Checkpoint ck;
    ck.model_kind = manifest.value("model_kind", "");
    ck.config = manifest.value("config", json::object());
    ck.epoch = manifest.value("epoch", 0LL);
    ck.rng_state = manifest.value("rng", "");
    ck.extra = manifest.value("extra", json::object());

    std::vector<char> payload(std::istreambuf_iterator<char>(in), {});
    std::uint64_t expect = 0;
    for (const auto& e : manifest.value("tensors", json::array())) {
      check_known_keys(e, "checkpoint tensor", {"name", "shape", "dtype", "offset"});
      if (e.value("dtype", "") != "f32")
        throw DataFormatError(path + ": unsupported dtype");
      Shape shape = e.at("shape").get<Shape>();
      const std::uint64_t offset = e.at("offset").get<std::uint64_t>();
      const std::size_t n = shape_numel(shape);
      if (offset != expect ||
          offset + sizeof(float) * n > payload.size())
        throw DataFormatError(path + ": tensor payload out of bounds");
      expect = offset + sizeof(float) * n;
      Tensor<float> t(std::move(shape));
      std::memcpy(t.raw(), payload.data() + offset, sizeof(float) * n);
      ck.tensors.emplace_back(e.at("name").get<std::string>(), std::move(t));
    }
    if (expect != payload.size())
      throw DataFormatError(path + ": trailing payload bytes");
    return ck;
  }
};

}  // namespace capsloc
