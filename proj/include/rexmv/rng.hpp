#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace rexmv {

// Stateless counter-based generator: every variate is a pure function of
// (seed, stream, path, index), so thread scheduling cannot reorder draws.

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

inline constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += kGolden;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Purpose tags keep sub-streams disjoint; adding a tag never perturbs
// draws made under the existing ones.
enum class Stream : std::uint64_t {
  Noise = 0,
  ControlMisspecified = 1,
  ControlRobust = 2,
  DataSynthesis = 3,
  CalibBatch = 4,
  CalibControl = 5,
  BacktestControl = 6,
  SetSampling = 7,
};

class CounterRng {
 public:
  CounterRng(std::uint64_t seed, Stream stream, std::uint64_t path = 0) noexcept
      : key_(mix64(mix64(mix64(seed) ^ static_cast<std::uint64_t>(stream)) ^
                   path)) {}

  std::uint64_t word(std::uint64_t index) const noexcept {
    return mix64(key_ + (index + 1) * kGolden);
  }

  // Uniform on [0,1) with 53 random mantissa bits.
  double uniform(std::uint64_t index) const noexcept {
    return static_cast<double>(word(index) >> 11) * 0x1p-53;
  }

  // Box-Muller, cosine branch only; always exactly two uniforms per normal
  // so the index layout is independent of how draws are consumed.
  double normal(std::uint64_t index) const noexcept {
    double u1 = uniform(2 * index);
    double u2 = uniform(2 * index + 1);
    if (u1 <= 0.0) u1 = 0x1p-53;  // log(0) guard
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t key_;
};

}  // namespace rexmv
