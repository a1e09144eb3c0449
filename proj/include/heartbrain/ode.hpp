#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "heartbrain/errors.hpp"

namespace hb {

// Flat storage of an ODE solution: states are stored back to back.
struct Trajectory {
  std::size_t dim = 0;
  std::vector<double> times;
  std::vector<double> flat;

  std::size_t size() const { return times.size(); }
  std::span<const double> state(std::size_t i) const {
    return {flat.data() + i * dim, dim};
  }
  std::span<const double> back() const { return state(size() - 1); }
};

// Classical fixed-step 4th-order Runge–Kutta on [t0, t1]. The returned
// trajectory contains both endpoints; the final step is shortened so the
// last sample lands exactly on t1.
//
// `deriv(t, x, dxdt)` writes the time derivative of `x` into `dxdt`.
template <class Deriv>
Trajectory rk4_integrate(Deriv&& deriv, std::span<const double> state0,
                         double t0, double t1, double dt) {
  if (!(dt > 0.0)) throw ValidationError("rk4_integrate: dt must be positive");
  if (!(t1 > t0)) throw ValidationError("rk4_integrate: t1 must exceed t0");

  const std::size_t n = state0.size();
  Trajectory out;
  out.dim = n;
  const auto steps = static_cast<std::size_t>(std::ceil((t1 - t0) / dt - 1e-9));
  out.times.reserve(steps + 1);
  out.flat.reserve((steps + 1) * n);

  std::vector<double> x(state0.begin(), state0.end());
  std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);
  out.times.push_back(t0);
  out.flat.insert(out.flat.end(), x.begin(), x.end());

  for (std::size_t step = 0; step < steps; ++step) {
    const double t = t0 + static_cast<double>(step) * dt;
    const bool last = step + 1 == steps;
    const double h = last ? t1 - t : dt;
    deriv(t, std::span<const double>(x), std::span<double>(k1));
    for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k1[i];
    deriv(t + 0.5 * h, std::span<const double>(tmp), std::span<double>(k2));
    for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k2[i];
    deriv(t + 0.5 * h, std::span<const double>(tmp), std::span<double>(k3));
    for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + h * k3[i];
    deriv(t + h, std::span<const double>(tmp), std::span<double>(k4));
    const double t_next = last ? t1 : t + h;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      if (!std::isfinite(x[i])) throw SimulationDiverged(t_next);
    }
    out.times.push_back(t_next);
    out.flat.insert(out.flat.end(), x.begin(), x.end());
  }
  return out;
}

}  // namespace hb
