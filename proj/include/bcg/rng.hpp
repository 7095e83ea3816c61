#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

// Deterministic random sources. std::mt19937_64 is bit-specified by the
// standard; the <random> distributions are not, so the transforms live
// here. Every consumer in the project draws through these helpers — the
// same seed gives the same stream on every platform and toolchain.

namespace bcg::rng {

using Engine = std::mt19937_64;

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

// Uniform in [0, 1), 53-bit resolution.
inline double uniform01(Engine& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

// Uniform in (0, 1]; safe as a log() argument.
inline double uniform01_open(Engine& g) {
  return static_cast<double>((g() >> 11) + 1) * 0x1.0p-53;
}

// Standard normal via Box-Muller (cosine branch; two draws per call).
inline double gaussian(Engine& g) {
  const double u1 = uniform01_open(g);
  const double u2 = uniform01(g);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

// Uniform integer in [0, n). Modulo bias is irrelevant at the call sites
// (shuffles, jitter), and the fixed transform keeps streams portable.
inline std::uint64_t below(Engine& g, std::uint64_t n) { return g() % n; }

// Knuth's product-of-uniforms sampler; fine for the small rates used here.
inline int poisson(Engine& g, double lambda) {
  const double limit = std::exp(-lambda);
  int k = 0;
  double p = 1.0;
  do {
    ++k;
    p *= uniform01_open(g);
  } while (p > limit);
  return k - 1;
}

// Fisher-Yates with the portable integer draw above.
template <typename T>
void shuffle(std::vector<T>& v, Engine& g) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[below(g, i)]);
  }
}

}  // namespace bcg::rng
