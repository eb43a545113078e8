#pragma once

#include <cstdint>
#include <vector>

namespace itipr {

// Deterministic stream RNG (splitmix64). Streams are keyed explicitly with
// mix(), so a worker can reproduce draw k of a run without consuming the
// first k-1 draws. All sampling in the project goes through this type; no
// std::random distribution is used anywhere, which keeps results bit-stable
// across platforms and standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Unbiased uniform integer in [0, n). n must be > 0.
  std::uint64_t next_below(std::uint64_t n) {
    const std::uint64_t rem = (0xffffffffffffffffULL % n + 1) % n;  // 2^64 mod n
    std::uint64_t x = next_u64();
    while (rem != 0 && x >= 0ULL - rem) x = next_u64();
    return x % n;
  }

  // In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

// Key-mixing for deriving independent sub-streams from one master seed.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix_seed(mix_seed(a, b), c);
}

}  // namespace itipr
