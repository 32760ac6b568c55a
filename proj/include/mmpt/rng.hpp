#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace mmpt {

// All randomness flows through these helpers. <random> distributions are
// implementation-defined, so mapping engine output to values is done by hand
// to keep runs bit-reproducible across standard libraries.
using Rng = std::mt19937_64;

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Independent stream for (seed, stream id) pairs, e.g. per-epoch engines.
inline Rng make_rng(uint64_t seed, uint64_t stream = 0) {
  return Rng(splitmix64(splitmix64(seed) ^ stream));
}

// Uniform in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

// Uniform integer in [0, n) by rejection; unbiased for any n >= 1.
inline uint64_t uniform_int(Rng& rng, uint64_t n) {
  uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

// Standard normal via Box-Muller; the sine branch is discarded so the
// draw count per call is fixed.
inline double normal(Rng& rng) {
  double u1 = 1.0 - uniform01(rng);  // (0, 1]
  double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

// First k entries of a seeded Fisher-Yates shuffle of 0..n-1.
inline std::vector<int> sample_without_replacement(Rng& rng, int n, int k) {
  std::vector<int> idx(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  for (int i = 0; i < k; ++i) {
    int j = i + static_cast<int>(uniform_int(rng, static_cast<uint64_t>(n - i)));
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
  }
  idx.resize(static_cast<size_t>(k));
  return idx;
}

template <typename T>
inline void shuffle(Rng& rng, std::vector<T>& v) {
  for (size_t i = v.size(); i > 1; --i) {
    size_t j = uniform_int(rng, i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace mmpt
