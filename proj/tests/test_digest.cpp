#include <catch2/catch_amalgamated.hpp>
#include <cstdio>
#include <fstream>
#include <string>

#include "capsloc/core/digest.hpp"

using capsloc::Sha256;
using capsloc::sha256_file;
using capsloc::sha256_hex;

TEST_CASE("sha-256 matches published test vectors") {
  CHECK(sha256_hex("") ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("The quick brown fox jumps over the lazy dog") ==
        "d7a8fbb307d7809469ca9abcb0082e4f8d5651e46d3cdb762d02d0bf37c9e592");
}

TEST_CASE("incremental updates equal the one-shot digest") {
  Sha256 h;
  h.update("The quick brown fox ");
  h.update("jumps over the lazy dog");
  CHECK(h.hex() ==
        "d7a8fbb307d7809469ca9abcb0082e4f8d5651e46d3cdb762d02d0bf37c9e592");
}

TEST_CASE("file digest equals the digest of its bytes") {
  const std::string path = "digest_test_tmp.bin";
  const std::string content(100000, 'x');
  {
    std::ofstream out(path, std::ios::binary);
    out << content;
  }
  CHECK(sha256_file(path) == sha256_hex(content));
  std::remove(path.c_str());
  CHECK_THROWS_AS(sha256_file("no_such_file_anywhere.bin"),
                  capsloc::DataFormatError);
}
