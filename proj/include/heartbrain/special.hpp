#pragma once

#include <cmath>
#include <numbers>

namespace hb {

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// log N(x; mean, exp(log_var)). Templated so it also runs on tape variables.
template <class T>
T gaussian_log_density(double x, const T& mean, const T& log_var) {
  using std::exp;
  const T diff = mean - x;
  return -0.5 * (kLog2Pi + log_var + diff * diff / exp(log_var));
}

inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

// Upper tail P(Z > x).
inline double normal_sf(double x) {
  return 0.5 * std::erfc(x / std::numbers::sqrt2);
}

inline double softplus(double x) {
  return std::fmax(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
}

inline double inverse_softplus(double y) {
  // y > 0; for large y, log(expm1(y)) ≈ y.
  return y > 30.0 ? y + std::log1p(-std::exp(-y)) : std::log(std::expm1(y));
}

}  // namespace hb
