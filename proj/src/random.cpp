#include "heartbrain/random.hpp"

#include <cmath>
#include <numbers>

#include "heartbrain/errors.hpp"

namespace hb {

double Rng::uniform() {
  return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
}

double Rng::normal() {
  // Box–Muller, one output per pair of uniforms (no cached state).
  const double u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::poisson(double lambda) {
  if (lambda <= 0.0) return 0;
  if (lambda < 30.0) {
    const double limit = std::exp(-lambda);
    double p = uniform();
    std::uint64_t k = 0;
    while (p > limit) {
      p *= uniform();
      ++k;
    }
    return k;
  }
  const double draw = std::round(lambda + std::sqrt(lambda) * normal());
  return draw < 0.0 ? 0 : static_cast<std::uint64_t>(draw);
}

std::uint64_t Rng::below(std::uint64_t n) {
  // Rejection sampling keeps the result unbiased.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t r = engine_();
  while (r >= limit) r = engine_();
  return r % n;
}

std::uint64_t Rng::derive(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

GaussianDraw gaussian_sample(Rng& rng, double mu, double sigma) {
  if (sigma < 0.0) throw ValidationError("gaussian_sample: sigma must be non-negative");
  const double eps = rng.normal();
  return {mu + sigma * eps, eps};
}

}  // namespace hb
