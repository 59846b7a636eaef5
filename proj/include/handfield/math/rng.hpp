#pragma once

#include <cstdint>

#include "handfield/math/geometry.hpp"

namespace handfield {

// Counter-based generator (splitmix64). Stateless hashing of (seed, indices)
// keeps per-ray sampling independent of thread scheduling.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t hash_combine(uint64_t a, uint64_t b) { return splitmix64(a ^ splitmix64(b)); }

struct HashRng {
  uint64_t state;

  explicit HashRng(uint64_t seed) : state(splitmix64(seed)) {}
  HashRng(uint64_t seed, uint64_t stream) : state(splitmix64(hash_combine(seed, stream))) {}

  uint64_t next_u64() {
    state = splitmix64(state);
    return state;
  }
  // Uniform in [0, 1).
  Real next_real() { return Real(next_u64() >> 11) * Real(0x1.0p-53); }
  Real next_real(Real lo, Real hi) { return lo + (hi - lo) * next_real(); }
  uint64_t next_below(uint64_t n) { return next_u64() % n; }
  // Standard normal via Box-Muller.
  Real next_normal() {
    const Real u1 = std::max(next_real(), Real(1e-300));
    const Real u2 = next_real();
    return std::sqrt(-2 * std::log(u1)) * std::cos(2 * Real(3.14159265358979323846) * u2);
  }
};

}  // namespace handfield
