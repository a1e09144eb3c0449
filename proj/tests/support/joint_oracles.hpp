#pragma once

// Test-side reference computations for the joint objective: random toy
// states, finite differences, Gauss-Hermite rules and a brute-force
// log-evidence by grid quadrature over the latent space.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "heartbrain/joint_trainer.hpp"
#include "heartbrain/random.hpp"

namespace oracle {

using hb::DenseMatrix;
namespace joint = hb::joint;

inline hb::cvae::Architecture toy_arch(std::size_t latent) {
  hb::cvae::Architecture a;
  a.latent = latent;
  a.hidden = 6;
  a.hidden_layers = 1;
  return a;
}

// Random CVAE weights and kernel hyperparameters; GP inputs are [x_obs, z].
inline joint::JointState toy_state(std::uint64_t seed, std::size_t latent, double weight_scale = 0.4) {
  joint::JointState s;
  s.cvae = hb::cvae::CvaeModel::initialize(toy_arch(latent), seed);
  hb::Rng rng(seed * 31 + 1);
  for (double& p : s.cvae.params()) p = weight_scale * rng.normal();
  const std::size_t d = 2 + latent, targets = 5;
  s.hyper.alpha.resize(targets);
  s.hyper.noise.resize(targets);
  s.hyper.beta = DenseMatrix(targets, d);
  for (std::size_t j = 0; j < targets; ++j) {
    s.hyper.alpha[j] = rng.uniform(0.5, 1.5);
    s.hyper.noise[j] = rng.uniform(0.3, 0.8);
    for (std::size_t i = 0; i < d; ++i) s.hyper.beta(j, i) = rng.uniform(0.7, 2.0);
  }
  return s;
}

inline joint::Dataset toy_batch(std::uint64_t seed, std::size_t n) {
  hb::Rng rng(seed * 17 + 5);
  auto fill = [&](std::size_t cols) {
    DenseMatrix m(n, cols);
    for (double& v : m.data()) v = rng.normal();
    return m;
  };
  joint::Dataset d;
  d.x_obs = fill(2);
  d.nu = fill(6);
  d.x_hat = fill(3);
  d.y = fill(5);
  return d;
}

inline std::vector<joint::EpsDraw> normal_draws(hb::Rng& rng, std::size_t count, std::size_t size) {
  std::vector<joint::EpsDraw> draws(count, joint::EpsDraw(size));
  for (auto& e : draws)
    for (double& v : e) v = rng.normal();
  return draws;
}

// Worst relative error |g - fd| / max(|g|, |fd|, floor) of the analytic
// gradient against central differences, over the given flat indices.
inline double gradient_error(const joint::JointState& state, const joint::Dataset& batch,
                             const std::vector<joint::EpsDraw>& draws, const std::vector<std::size_t>& indices,
                             double h = 1e-5, double floor = 1e-3) {
  const std::vector<double> w(draws.size(), 1.0 / static_cast<double>(draws.size()));
  const auto base = joint::elbo_batch(state, batch, draws, w, {}, true);
  const std::vector<double> flat = state.flatten();
  joint::JointState probe = state;
  double worst = 0.0;
  for (std::size_t i : indices) {
    std::vector<double> p = flat;
    p[i] = flat[i] + h;
    probe.unflatten(p);
    const double up = joint::elbo_batch(probe, batch, draws, w, {}, false).objective;
    p[i] = flat[i] - h;
    probe.unflatten(p);
    const double down = joint::elbo_batch(probe, batch, draws, w, {}, false).objective;
    const double fd = (up - down) / (2 * h);
    const double g = base.gradient[i];
    worst = std::max(worst, std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), floor}));
  }
  return worst;
}

// Gauss-Hermite rule for the standard normal weight: nodes and weights with
// sum w_i f(x_i) ~ E f(X), X ~ N(0, 1). Newton iteration on the
// orthonormal physicists' Hermite recurrence.
inline void gauss_hermite(std::size_t m, std::vector<double>& nodes, std::vector<double>& weights) {
  nodes.assign(m, 0.0);
  weights.assign(m, 0.0);
  const double pim4 = std::pow(std::numbers::pi, -0.25);
  double z = 0.0;
  for (std::size_t i = 0; i < (m + 1) / 2; ++i) {
    const double n = static_cast<double>(m);
    if (i == 0) z = std::sqrt(2 * n + 1) - 1.85575 * std::pow(2 * n + 1, -1.0 / 6);
    else if (i == 1) z -= 1.14 * std::pow(n, 0.426) / z;
    else if (i == 2) z = 1.86 * z - 0.86 * nodes[0];
    else if (i == 3) z = 1.91 * z - 0.91 * nodes[1];
    else z = 2 * z - nodes[i - 2];
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p1 = pim4, p2 = 0.0;
      for (std::size_t j = 1; j <= m; ++j) {
        const double p3 = p2;
        p2 = p1;
        const double jj = static_cast<double>(j);
        p1 = z * std::sqrt(2 / jj) * p2 - std::sqrt((jj - 1) / jj) * p3;
      }
      pp = std::sqrt(2 * n) * p2;
      const double step = p1 / pp;
      z -= step;
      if (std::abs(step) < 1e-15) break;
    }
    nodes[i] = z;
    nodes[m - 1 - i] = -z;
    weights[i] = weights[m - 1 - i] = 2 / (pp * pp);
  }
  // Physicists' rule for exp(-x^2) -> standard normal expectation.
  for (std::size_t i = 0; i < m; ++i) {
    nodes[i] *= std::sqrt(2.0);
    weights[i] /= std::sqrt(std::numbers::pi);
  }
}

inline double log_normal_pdf(double x, double mean, double var) {
  return -0.5 * (std::log(2 * std::numbers::pi * var) + (x - mean) * (x - mean) / var);
}

// log N(y; 0, C) by Gaussian elimination, C symmetric positive definite.
inline double dense_log_gaussian(const std::vector<std::vector<double>>& c, const std::vector<double>& y) {
  const std::size_t n = y.size();
  std::vector<std::vector<double>> a(c);
  std::vector<double> b(y);
  double logdet = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    logdet += std::log(a[k][k]);
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = a[i][k] / a[k][k];
      for (std::size_t j = k; j < n; ++j) a[i][j] -= f * a[k][j];
      b[i] -= f * b[k];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= a[i][j] * x[j];
    x[i] = s / a[i][i];
  }
  double quad = 0.0;
  for (std::size_t i = 0; i < n; ++i) quad += y[i] * x[i];
  return -0.5 * (static_cast<double>(n) * std::log(2 * std::numbers::pi) + logdet + quad);
}

// log p(y, x_hat | x_obs, nu) for a one-dimensional latent per subject,
// integrating the prior-standardized coordinates u_b over [-width, width]
// with the trapezoid rule on `points` nodes per axis.
inline double grid_log_evidence(const joint::JointState& state, const joint::Dataset& batch,
                                std::size_t points, double width) {
  const std::size_t n = batch.size();
  const auto& cvae = state.cvae;
  std::vector<double> pm(n), ps(n);
  for (std::size_t b = 0; b < n; ++b) {
    const auto p = cvae.prior(batch.nu.row(b));
    pm[b] = p.mu[0];
    ps[b] = std::exp(0.5 * p.log_var[0]);
  }
  const double du = 2 * width / static_cast<double>(points - 1);
  std::vector<double> u(points), lw(points);
  for (std::size_t i = 0; i < points; ++i) {
    u[i] = -width + du * static_cast<double>(i);
    const double trap = (i == 0 || i + 1 == points) ? 0.5 : 1.0;
    lw[i] = std::log(trap * du) - 0.5 * u[i] * u[i] - 0.5 * std::log(2 * std::numbers::pi);
  }
  // Per-subject decoder terms on the grid.
  std::vector<std::vector<double>> recon(n, std::vector<double>(points));
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t i = 0; i < points; ++i) {
      const double z = pm[b] + ps[b] * u[i];
      const auto dec = cvae.decode(std::span<const double>(&z, 1), batch.nu.row(b));
      double s = 0.0;
      for (std::size_t f = 0; f < batch.x_hat.cols(); ++f)
        s += log_normal_pdf(batch.x_hat(b, f), dec.mu[f], std::exp(dec.log_var[f]));
      recon[b][i] = s;
    }

  const std::size_t d = state.hyper.n_inputs();
  std::vector<double> terms;
  std::vector<std::size_t> idx(n, 0);
  std::vector<std::vector<double>> x(n, std::vector<double>(d));
  while (true) {
    double t = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      t += lw[idx[b]] + recon[b][idx[b]];
      x[b][0] = batch.x_obs(b, 0);
      x[b][1] = batch.x_obs(b, 1);
      x[b][2] = pm[b] + ps[b] * u[idx[b]];
    }
    for (std::size_t j = 0; j < state.hyper.n_targets(); ++j) {
      std::vector<std::vector<double>> c(n, std::vector<double>(n));
      std::vector<double> y(n);
      const double a2 = state.hyper.alpha[j] * state.hyper.alpha[j];
      const double s2 = state.hyper.noise[j] * state.hyper.noise[j];
      for (std::size_t p = 0; p < n; ++p) {
        y[p] = batch.y(p, j);
        for (std::size_t q = 0; q < n; ++q) {
          double r2 = 0.0;
          for (std::size_t i = 0; i < d; ++i) r2 += std::pow((x[p][i] - x[q][i]) / state.hyper.beta(j, i), 2);
          c[p][q] = a2 * std::exp(-0.5 * r2) + (p == q ? s2 : 0.0);
        }
      }
      t += dense_log_gaussian(c, y);
    }
    terms.push_back(t);
    std::size_t b = 0;
    while (b < n && ++idx[b] == points) idx[b++] = 0;
    if (b == n) break;
  }
  const double top = *std::max_element(terms.begin(), terms.end());
  double s = 0.0;
  for (double t : terms) s += std::exp(t - top);
  return top + std::log(s);
}

// Exact expectation of the ELBO over q for a one-dimensional latent using a
// tensor Gauss-Hermite rule with `m` nodes per subject.
inline double quadrature_elbo(const joint::JointState& state, const joint::Dataset& batch, std::size_t m) {
  std::vector<double> nodes, weights;
  gauss_hermite(m, nodes, weights);
  const std::size_t n = batch.size();
  std::vector<joint::EpsDraw> draws;
  std::vector<double> w;
  std::vector<std::size_t> idx(n, 0);
  while (true) {
    joint::EpsDraw e(n);
    double wt = 1.0;
    for (std::size_t b = 0; b < n; ++b) {
      e[b] = nodes[idx[b]];
      wt *= weights[idx[b]];
    }
    draws.push_back(std::move(e));
    w.push_back(wt);
    std::size_t b = 0;
    while (b < n && ++idx[b] == m) idx[b++] = 0;
    if (b == n) break;
  }
  return joint::elbo_batch(state, batch, draws, w, {}, false).objective;
}

}  // namespace oracle
