#pragma once

#include <cstdint>
#include <random>

namespace psbf {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Deterministic random stream. Every randomized operation in the library
/// draws from one of these, so results are reproducible from a single seed
/// and independent of the standard library's distribution implementations.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : gen_(splitmix64(seed)) {}

  // Independent child stream for a tagged purpose.
  static RngStream derive(std::uint64_t seed, std::uint64_t tag) {
    return RngStream(splitmix64(seed) ^ splitmix64(tag * 0x9e3779b97f4a7c15ULL + 1));
  }

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform on [0, 1).
  double unit() { return double(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1); never returns an exact endpoint.
  double unit_open() { return (double(next_u64() >> 12) + 0.5) * 0x1.0p-52; }

  bool bernoulli(double p) { return unit() < p; }

  /// Unbiased uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    __uint128_t m = static_cast<__uint128_t>(next_u64()) * n;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < n) {
      const std::uint64_t t = (0 - n) % n;
      while (lo < t) {
        m = static_cast<__uint128_t>(next_u64()) * n;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  /// Uniform integer in [lo, hi], inclusive.
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace psbf
