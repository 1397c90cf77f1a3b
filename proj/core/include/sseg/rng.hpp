#pragma once

#include <cstdint>

namespace sseg {

// Deterministic PRNG with hand-rolled distributions. std::uniform_*_distribution
// is implementation-defined, which would make synthesized datasets differ across
// standard libraries; everything here is pinned to the bit level.
//
// Core generator is splitmix64, which is also used to derive independent
// per-patch / per-epoch streams from (seed, index) pairs.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [lo, hi] inclusive. Uses 128-bit multiply rejection-free
  // scaling; bias is < 2^-64 per draw and identical everywhere.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1u;
    const auto wide = static_cast<unsigned __int128>(next_u64()) * span;
    return lo + static_cast<std::int64_t>(wide >> 64);
  }

  // Uniform in [lo, hi) with 53 bits of precision.
  double uniform_real(double lo, double hi) {
    const double u = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
  }

  // Uniform in [-limit, limit).
  double uniform_symmetric(double limit) { return uniform_real(-limit, limit); }

 private:
  std::uint64_t state_;
};

// Derives a child seed from a parent seed and a stream index, so that e.g.
// patch #17 always sees the same random stream regardless of generation order.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  Rng mix(seed ^ (0xa0761d6478bd642fULL + stream * 0xe7037ed1a0b428dbULL));
  return mix.next_u64();
}

}  // namespace sseg
