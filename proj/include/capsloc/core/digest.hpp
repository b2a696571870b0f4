#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "capsloc/core/error.hpp"

namespace capsloc {

/// Incremental SHA-256, hex-encoded. Used for dataset/checkpoint content
/// digests so reruns can be compared by string equality.
class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1)
      throw NumericError("sha256 init failed");
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  Sha256& update(const void* data, std::size_t len) {
    if (EVP_DigestUpdate(ctx_, data, len) != 1)
      throw NumericError("sha256 update failed");
    return *this;
  }

  Sha256& update(const std::string& s) { return update(s.data(), s.size()); }

  std::string hex() {
    unsigned char out[EVP_MAX_MD_SIZE];
    unsigned int n = 0;
    if (EVP_DigestFinal_ex(ctx_, out, &n) != 1)
      throw NumericError("sha256 final failed");
    static const char* digits = "0123456789abcdef";
    std::string h;
    h.reserve(2 * n);
    for (unsigned int i = 0; i < n; ++i) {
      h.push_back(digits[out[i] >> 4]);
      h.push_back(digits[out[i] & 0xf]);
    }
    return h;
  }

 private:
  EVP_MD_CTX* ctx_;
};

inline std::string sha256_hex(const void* data, std::size_t len) {
  Sha256 h;
  h.update(data, len);
  return h.hex();
}

inline std::string sha256_hex(const std::string& s) {
  return sha256_hex(s.data(), s.size());
}

inline std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataFormatError("cannot open " + path);
  Sha256 h;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

}  // namespace capsloc
