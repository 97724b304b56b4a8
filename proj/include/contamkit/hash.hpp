#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace contamkit {

// FNV-1a with the published 64-bit offset basis and prime. Hand-rolled so
// that n-gram index files hash identically on every platform and build.
inline constexpr uint64_t kFnv64OffsetBasis = 0xcbf29ce484222325ULL;
inline constexpr uint64_t kFnv64Prime = 0x100000001b3ULL;

inline uint64_t fnv1a64_step(uint64_t h, unsigned char byte) {
  return (h ^ byte) * kFnv64Prime;
}

inline uint64_t fnv1a64(std::string_view bytes, uint64_t h = kFnv64OffsetBasis) {
  for (unsigned char c : bytes) h = fnv1a64_step(h, c);
  return h;
}

// Bit mixer used to derive the second Bloom hash from an FNV value
// (Kirsch-Mitzenmacher double hashing needs two independent streams).
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Hex-encoded SHA-256; used for request cache keys and replay fingerprints.
std::string sha256_hex(std::string_view bytes);

}  // namespace contamkit
