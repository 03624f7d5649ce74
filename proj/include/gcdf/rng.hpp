#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "gcdf/errors.hpp"

namespace gcdf {

// splitmix64 step; used both as a PRNG warmup and to derive substream seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic seed derivation for independent substreams (tasks, restarts).
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(a) ^ (b + 0x9e3779b97f4a7c15ULL));
}
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix_seed(mix_seed(a, b), c);
}

// Seeded RNG with distributions implemented in-house so that streams are a
// pure function of the seed (std:: distributions are implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(splitmix64(seed)) {}

  std::uint64_t raw() { return eng_(); }

  // [0, 1)
  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Inclusive range, rejection-sampled to remove modulo bias.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    if (lo > hi) throw contract_error("uniform_int: empty range");
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<std::int64_t>(eng_());  // full 64-bit range
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t x;
    do {
      x = eng_();
    } while (x >= limit);
    return lo + static_cast<std::int64_t>(x % span);
  }

  // Marsaglia polar method; the spare value is discarded so each call
  // consumes a self-contained slice of the stream.
  double normal(double mu, double sigma) {
    double u, v, s;
    do {
      u = 2.0 * uniform01() - 1.0;
      v = 2.0 * uniform01() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    return mu + sigma * u * std::sqrt(-2.0 * std::log(s) / s);
  }

  // Inverse-CDF Laplace with scale parameter b.
  double laplace(double mu, double b) {
    const double u = uniform01() - 0.5;
    const double sgn = (u < 0.0) ? -1.0 : 1.0;
    return mu - b * sgn * std::log(1.0 - 2.0 * std::fabs(u));
  }

  // Best-Fisher rejection sampler for the von Mises distribution on (-pi, pi].
  double von_mises(double mu, double kappa) {
    if (kappa < 1e-8) return wrap_angle(mu + uniform(-M_PI, M_PI));
    if (kappa > 1e8) kappa = 1e8;
    const double a = 1.0 + std::sqrt(1.0 + 4.0 * kappa * kappa);
    const double b = (a - std::sqrt(2.0 * a)) / (2.0 * kappa);
    const double r = (1.0 + b * b) / (2.0 * b);
    double f;
    for (;;) {
      const double u1 = uniform01();
      const double u2 = uniform01();
      const double z = std::cos(M_PI * u1);
      f = (1.0 + r * z) / (r + z);
      const double c = kappa * (r - f);
      if (c * (2.0 - c) - u2 > 0.0) break;
      if (c <= 0.0) continue;
      if (std::log(c / u2) + 1.0 - c >= 0.0) break;
    }
    const double u3 = uniform01();
    const double theta = (u3 > 0.5) ? std::acos(f) : -std::acos(f);
    return wrap_angle(mu + theta);
  }

 private:
  static double wrap_angle(double t) {
    while (t > M_PI) t -= 2.0 * M_PI;
    while (t <= -M_PI) t += 2.0 * M_PI;
    return t;
  }

  std::mt19937_64 eng_;
};

}  // namespace gcdf
