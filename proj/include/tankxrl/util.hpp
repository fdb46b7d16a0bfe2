#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace tankxrl {

/// SplitMix64 step. Used to derive independent streams from (seed, index)
/// pairs without depending on library-defined distributions.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Small deterministic generator with a portable uniform mapping.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(splitmix64(seed)) {}

  std::uint64_t next() {
    state_ = splitmix64(state_);
    return state_;
  }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller on the portable uniform.
  double normal();

 private:
  std::uint64_t state_;
};

/// Neumaier-compensated sum in index order; deterministic for a given span.
double compensated_sum(std::span<const double> values);

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

}  // namespace tankxrl
