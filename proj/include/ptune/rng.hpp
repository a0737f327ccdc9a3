#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ptune {

/// Name recorded in configs and reports; changing the generator or any of the
/// conversions below must change this string.
inline constexpr std::string_view kPrngName = "mt19937_64/splitmix64-v1";

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Seed for item `index` of a stream keyed by `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept;

/// Deterministic random source. std::mt19937_64 output is fixed by the
/// standard; the distributions are implemented here because the standard
/// library's are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // 53 random mantissa bits, in [0, 1).
  double uniform01();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  // Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();
  double gamma(double shape);
  double beta(double a, double b);

 private:
  std::mt19937_64 engine_;
};

}  // namespace ptune
