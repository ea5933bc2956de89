#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace dnnh {

// SplitMix64 finalizer, used only to derive independent stream seeds.
inline std::uint64_t Mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Stream splitting: a child seed is a pure function of the parent seed and a
// path of stream identifiers, so replication r / subject i always sees the
// same stream regardless of scheduling.
inline std::uint64_t DeriveSeed(std::uint64_t seed,
                                std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = Mix64(seed);
  for (std::uint64_t id : path) s = Mix64(s ^ Mix64(id + 0x632be59bd9b4e019ULL));
  return s;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t NextU64() { return engine_(); }

  // Uniform on the open interval (0, 1).
  double Uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }

  // Unit-rate exponential by inversion.
  double Exponential() { return -std::log(Uniform()); }

  // Index in [0, n).
  std::uint64_t Below(std::uint64_t n) {
    // Lemire-free rejection keeps the mapping platform independent.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % n;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace dnnh
