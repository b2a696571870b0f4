#include <catch2/catch_amalgamated.hpp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "capsloc/checkpoint.hpp"
#include "capsloc/config.hpp"
#include "capsloc/core/digest.hpp"
#include "capsloc/core/random.hpp"

using capsloc::CapsNetConfig;
using capsloc::Checkpoint;
using capsloc::Rng;
using capsloc::Tensor;
using capsloc::json;

namespace {

Checkpoint sample_checkpoint() {
  Rng rng(17);
  Checkpoint ck;
  ck.model_kind = "capsnet-bias";
  ck.config = CapsNetConfig::desk_scale();
  ck.epoch = 12;
  ck.rng_state = rng.serialize();
  ck.extra = json{{"loss", 0.25}, {"step", 3400}};
  Tensor<float> a({3, 4});
  Tensor<float> b({2, 2, 5});
  Tensor<float> c({7});
  for (auto& v : a.data()) v = static_cast<float>(rng.normal());
  for (auto& v : b.data()) v = static_cast<float>(rng.normal());
  for (auto& v : c.data()) v = static_cast<float>(rng.normal());
  ck.tensors = {{"enc.w", a}, {"enc.b", b}, {"head.w", c}};
  return ck;
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("checkpoint round trip is bit exact") {
  const std::string path = "ck_roundtrip.bin";
  Checkpoint ck = sample_checkpoint();
  ck.save(path);
  Checkpoint back = Checkpoint::load(path);
  CHECK(back.model_kind == ck.model_kind);
  CHECK(back.epoch == ck.epoch);
  CHECK(back.rng_state == ck.rng_state);
  CHECK(back.extra == ck.extra);
  CHECK(json(back.config) == json(ck.config));
  REQUIRE(back.tensors.size() == ck.tensors.size());
  for (std::size_t i = 0; i < ck.tensors.size(); ++i) {
    CHECK(back.tensors[i].first == ck.tensors[i].first);
    REQUIRE(back.tensors[i].second.shape() == ck.tensors[i].second.shape());
    REQUIRE(std::memcmp(back.tensors[i].second.raw(),
                        ck.tensors[i].second.raw(),
                        sizeof(float) * ck.tensors[i].second.size()) == 0);
  }
  CHECK(back.find("enc.b") != nullptr);
  CHECK(back.find("missing") == nullptr);

  // the restored generator continues the original stream
  Rng restored = Rng::deserialize(back.rng_state);
  Rng original = Rng::deserialize(ck.rng_state);
  for (int i = 0; i < 5; ++i)
    CHECK(restored.next_u64() == original.next_u64());
  std::remove(path.c_str());
}

TEST_CASE("checkpoint bytes follow the documented layout") {
  const std::string path = "ck_layout.bin";
  Checkpoint ck = sample_checkpoint();
  ck.save(path);
  auto bytes = slurp(path);
  REQUIRE(bytes.size() > 16);
  CHECK(std::memcmp(bytes.data(), "CAPSLOC1", 8) == 0);
  std::uint64_t mlen = 0;
  for (int i = 0; i < 8; ++i)
    mlen |= static_cast<std::uint64_t>(
                static_cast<unsigned char>(bytes[8 + i]))
            << (8 * i);
  REQUIRE(16 + mlen < bytes.size());
  json manifest = json::parse(std::string(bytes.data() + 16, mlen));
  CHECK(manifest.at("format_version") == 1);
  CHECK(manifest.at("model_kind") == "capsnet-bias");
  CHECK(manifest.at("epoch") == 12);
  REQUIRE(manifest.at("tensors").size() == 3);
  CHECK(manifest["tensors"][0]["name"] == "enc.w");
  CHECK(manifest["tensors"][0]["dtype"] == "f32");
  CHECK(manifest["tensors"][0]["offset"] == 0);
  CHECK(manifest["tensors"][1]["offset"] == 12 * 4);
  CHECK(manifest["tensors"][2]["offset"] == (12 + 20) * 4);

  // payload is the tensors' raw little-endian floats back to back
  const char* payload = bytes.data() + 16 + mlen;
  const std::size_t payload_len = bytes.size() - 16 - mlen;
  REQUIRE(payload_len == (12 + 20 + 7) * 4);
  std::size_t off = 0;
  for (auto& [name, t] : ck.tensors) {
    REQUIRE(std::memcmp(payload + off, t.raw(), 4 * t.size()) == 0);
    off += 4 * t.size();
  }
  std::remove(path.c_str());
}

TEST_CASE("identical checkpoints produce identical file digests") {
  Checkpoint ck = sample_checkpoint();
  ck.save("ck_a.bin");
  ck.save("ck_b.bin");
  CHECK(capsloc::sha256_file("ck_a.bin") == capsloc::sha256_file("ck_b.bin"));
  std::remove("ck_a.bin");
  std::remove("ck_b.bin");
}

TEST_CASE("checkpoint loader rejects malformed files") {
  const std::string path = "ck_bad.bin";
  Checkpoint ck = sample_checkpoint();
  ck.save(path);
  auto good = slurp(path);

  auto write = [&](const std::vector<char>& b) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(b.data(), static_cast<std::streamsize>(b.size()));
  };

  auto corrupted = good;
  corrupted[0] = 'X';
  write(corrupted);
  CHECK_THROWS_AS(Checkpoint::load(path), capsloc::DataFormatError);

  auto truncated = good;
  truncated.resize(truncated.size() - 5);
  write(truncated);
  CHECK_THROWS_AS(Checkpoint::load(path), capsloc::DataFormatError);

  auto padded = good;
  padded.push_back('\0');
  write(padded);
  CHECK_THROWS_AS(Checkpoint::load(path), capsloc::DataFormatError);

  std::remove(path.c_str());
  CHECK_THROWS_AS(Checkpoint::load("ck_nowhere.bin"), capsloc::DataFormatError);
}
