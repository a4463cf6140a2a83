#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace fedspca {

/// Deterministic random stream. Variate generation is hand-rolled on top of
/// mt19937_64 so streams are reproducible across standard libraries, which
/// the transport-equivalence and determinism contracts rely on.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  /// Uniform double in [0, 1).
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // u1 in (0, 1] so the log is finite.
    double u1 = (static_cast<double>(gen_() >> 11) + 1.0) * 0x1.0p-53;
    double u2 = uniform();
    double radius = std::sqrt(-2.0 * std::log(u1));
    double angle = 2.0 * M_PI * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  std::uint64_t next_u64() { return gen_(); }

  /// Derives an independent stream id from (seed, a, b), splitmix64-style.
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    auto split = [](std::uint64_t x) {
      x += 0x9e3779b97f4a7c15ull;
      x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
      x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
      return x ^ (x >> 31);
    };
    return split(split(seed + split(a + 1)) + split(b + 2));
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace fedspca
