#include "contamkit/hash.hpp"

#include <openssl/evp.h>

#include <array>

#include "contamkit/error.hpp"

namespace contamkit {

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len,
                 EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::io, "SHA-256 digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

std::string to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::io: return "io";
    case ErrorCode::parse: return "parse";
    case ErrorCode::invariant: return "invariant";
    case ErrorCode::parameter: return "parameter";
    case ErrorCode::pairing: return "pairing";
    case ErrorCode::config: return "config";
    case ErrorCode::capability: return "capability";
    case ErrorCode::auth: return "auth";
    case ErrorCode::exhausted_retries: return "exhausted_retries";
    case ErrorCode::domain: return "domain";
  }
  return "unknown";
}

}  // namespace contamkit
