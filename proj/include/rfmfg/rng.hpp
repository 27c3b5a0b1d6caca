#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace rfmfg {

/// Named random streams. Each consumer draws from its own stream so that
/// reseeding one never perturbs another.
enum class Stream : std::uint32_t {
  Frequencies = 1,
  InitialPositions = 2,
  ControlInit = 3,
  DualInit = 4,
  Evaluation = 5,
};

/// Reproducible generator: std::mt19937_64 seeded through std::seed_seq with
/// (seed low word, seed high word, stream id). Both algorithms are fully
/// specified by the C++ standard, so raw draws are identical on every
/// conforming platform.
///
/// Uniforms use the top 53 bits of each draw. Normals use the Box-Muller
/// transform; the second variate of each pair is cached and returned next.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, Stream stream = Stream::Evaluation)
      : engine_(make_engine(seed, static_cast<std::uint32_t>(stream))) {}

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform in (0, 1].
  double uniform_open_zero() { return 1.0 - uniform(); }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform integer in [0, n) by rejection (no modulo bias).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_open_zero();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  static std::mt19937_64 make_engine(std::uint64_t seed, std::uint32_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                      static_cast<std::uint32_t>(seed >> 32), stream};
    return std::mt19937_64(seq);
  }

  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace rfmfg
