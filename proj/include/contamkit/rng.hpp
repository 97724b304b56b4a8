#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <vector>

namespace contamkit {

// All sampling and shuffling flows through mt19937_64 (output sequence is
// fixed by the C++ standard) plus the helpers below. std::shuffle and
// std::uniform_int_distribution are implementation-defined, which would
// break byte-identical reruns across standard libraries.
using Rng = std::mt19937_64;

// Unbiased draw in [0, n) by rejection sampling. n must be > 0.
inline uint64_t uniform_below(Rng& rng, uint64_t n) {
  const uint64_t max = std::numeric_limits<uint64_t>::max();
  const uint64_t limit = max - max % n;  // multiple of n; reject above it
  uint64_t x = rng();
  while (x >= limit) x = rng();
  return x % n;
}

// Fisher-Yates, back to front.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (size_t i = v.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(uniform_below(rng, i));
    using std::swap;
    swap(v[i - 1], v[j]);
  }
}

// Uniform sample of k distinct indices from [0, n), in draw order
// (partial Fisher-Yates). k must be <= n.
inline std::vector<size_t> sample_without_replacement(size_t n, size_t k, Rng& rng) {
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  for (size_t i = 0; i < k; ++i) {
    size_t j = i + static_cast<size_t>(uniform_below(rng, n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace contamkit
