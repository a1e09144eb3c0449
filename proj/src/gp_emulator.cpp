#include "heartbrain/gp_emulator.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "heartbrain/errors.hpp"
#include "heartbrain/special.hpp"

namespace hb::gp {

namespace {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double std_dev(std::span<const double> v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

// Evenly spaced row subset of size min(n, cap).
std::vector<std::size_t> spread_rows(std::size_t n, std::size_t cap) {
  std::vector<std::size_t> rows;
  if (n <= cap) {
    for (std::size_t i = 0; i < n; ++i) rows.push_back(i);
    return rows;
  }
  for (std::size_t k = 0; k < cap; ++k) rows.push_back(k * n / cap);
  return rows;
}

DenseMatrix take_rows(const DenseMatrix& m, std::span<const std::size_t> rows) {
  DenseMatrix out(rows.size(), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r)
    std::copy(m.row(rows[r]).begin(), m.row(rows[r]).end(), out.row(r).begin());
  return out;
}

void check_target_hyper(const TargetHyper& h, std::size_t d) {
  if (h.beta.size() != d)
    throw DimensionMismatch("kernel has " + std::to_string(h.beta.size()) +
                            " length scales for " + std::to_string(d) + " predictors");
}

// K without noise. Inputs are pre-divided by beta so each entry is one
// squared distance.
DenseMatrix gram(const DenseMatrix& inputs, const TargetHyper& h) {
  const std::size_t n = inputs.rows(), d = inputs.cols();
  check_target_hyper(h, d);
  DenseMatrix scaled(n, d);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t i = 0; i < d; ++i) scaled(a, i) = inputs(a, i) / h.beta[i];
  const double amp = h.alpha * h.alpha;
  DenseMatrix k(n, n);
  for (std::size_t a = 0; a < n; ++a) {
    k(a, a) = amp;
    const auto xa = scaled.row(a);
    for (std::size_t b = 0; b < a; ++b) {
      const auto xb = scaled.row(b);
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) s += (xa[i] - xb[i]) * (xa[i] - xb[i]);
      k(a, b) = k(b, a) = amp * std::exp(-0.5 * s);
    }
  }
  return k;
}

DenseMatrix factor_or_explain(const DenseMatrix& a) {
  try {
    return cholesky_factor(a);
  } catch (const NotPositiveDefinite& e) {
    throw NotPositiveDefinite(e.pivot(), "GP covariance is singular, the noise floor may be too low");
  }
}

}  // namespace

// ----------------------------------------------------------------- hyper

void KernelHyper::validate() const {
  if (beta.rows() != alpha.size() || noise.size() != alpha.size())
    throw DimensionMismatch("kernel hyperparameters disagree on the number of targets");
  for (double a : alpha)
    if (!(a > 0.0) || !std::isfinite(a)) throw ValidationError("alpha must be positive");
  for (double b : beta.data())
    if (!(b > 0.0) || !std::isfinite(b)) throw ValidationError("beta must be positive");
  for (double s : noise)
    if (!(s > 0.0) || !std::isfinite(s)) throw ValidationError("noise must be positive");
}

std::vector<double> KernelHyper::raw(std::size_t j) const {
  std::vector<double> r;
  r.push_back(inverse_softplus(alpha[j]));
  for (double b : beta.row(j)) r.push_back(inverse_softplus(b));
  r.push_back(inverse_softplus(std::max(noise[j] - kNoiseFloor, 1e-300)));
  return r;
}

void KernelHyper::set_raw(std::size_t j, std::span<const double> r) {
  if (r.size() != raw_size(n_inputs())) throw DimensionMismatch("raw hyperparameter length");
  alpha[j] = softplus(r[0]);
  for (std::size_t i = 0; i < n_inputs(); ++i) beta(j, i) = softplus(r[1 + i]);
  noise[j] = softplus(r.back()) + kNoiseFloor;
}

nlohmann::json KernelHyper::to_json() const {
  nlohmann::json b = nlohmann::json::array();
  for (std::size_t j = 0; j < beta.rows(); ++j)
    b.push_back(std::vector<double>(beta.row(j).begin(), beta.row(j).end()));
  return {{"alpha", alpha}, {"beta", b}, {"noise", noise}};
}

KernelHyper KernelHyper::from_json(const nlohmann::json& j) {
  KernelHyper h;
  h.alpha = j.at("alpha").get<std::vector<double>>();
  h.noise = j.at("noise").get<std::vector<double>>();
  const auto rows = j.at("beta").get<std::vector<std::vector<double>>>();
  const std::size_t d = rows.empty() ? 0 : rows.front().size();
  h.beta = DenseMatrix(rows.size(), d);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != d) throw SchemaError("ragged beta matrix in GP checkpoint");
    std::copy(rows[r].begin(), rows[r].end(), h.beta.row(r).begin());
  }
  h.validate();
  return h;
}

KernelHyper initial_hyper(const DenseMatrix& inputs,
                          const std::vector<std::vector<double>>& targets,
                          std::size_t max_points) {
  const std::size_t n = inputs.rows(), d = inputs.cols();
  if (n < 2) throw ValidationError("GP initialization needs at least 2 rows");
  KernelHyper h;
  h.beta = DenseMatrix(targets.size(), d);
  const auto rows = spread_rows(n, max_points);
  std::vector<double> median_dist(d);
  std::vector<double> dist;
  for (std::size_t i = 0; i < d; ++i) {
    dist.clear();
    for (std::size_t a = 0; a < rows.size(); ++a)
      for (std::size_t b = 0; b < a; ++b)
        dist.push_back(std::abs(inputs(rows[a], i) - inputs(rows[b], i)));
    auto mid = dist.begin() + static_cast<std::ptrdiff_t>(dist.size() / 2);
    std::nth_element(dist.begin(), mid, dist.end());
    median_dist[i] = *mid > 0.0 ? *mid : 1.0;
  }
  for (std::size_t j = 0; j < targets.size(); ++j) {
    if (targets[j].size() != n) throw DimensionMismatch("target length differs from input rows");
    double s = std_dev(targets[j]);
    if (!(s > 0.0)) s = 1.0;
    h.alpha.push_back(s);
    h.noise.push_back(std::max(0.1 * s, 2 * kNoiseFloor));
    for (std::size_t i = 0; i < d; ++i) h.beta(j, i) = median_dist[i];
  }
  return h;
}

double kernel(std::span<const double> x, std::span<const double> x2, std::size_t j,
              const KernelHyper& hyper) {
  const std::size_t d = hyper.n_inputs();
  if (x.size() != d || x2.size() != d)
    throw DimensionMismatch("kernel expects " + std::to_string(d) + " predictors, got " +
                            std::to_string(x.size()) + " and " + std::to_string(x2.size()));
  if (j >= hyper.n_targets()) throw DimensionMismatch("kernel target index out of range");
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double r = (x[i] - x2[i]) / hyper.beta(j, i);
    s += r * r;
  }
  return hyper.alpha[j] * hyper.alpha[j] * std::exp(-0.5 * s);
}

TargetHyper target_hyper(const KernelHyper& hyper, std::size_t j) {
  return {hyper.alpha[j], std::vector<double>(hyper.beta.row(j).begin(), hyper.beta.row(j).end()),
          hyper.noise[j]};
}

DenseMatrix covariance(const DenseMatrix& inputs, std::size_t j, const KernelHyper& hyper) {
  const TargetHyper h = target_hyper(hyper, j);
  DenseMatrix k = gram(inputs, h);
  for (std::size_t a = 0; a < k.rows(); ++a) k(a, a) += h.noise * h.noise + kJitter;
  return k;
}

// ------------------------------------------------------- marginal likelihood

double log_marginal_likelihood(const DenseMatrix& inputs, std::span<const double> y,
                               const TargetHyper& h) {
  const std::size_t n = inputs.rows();
  if (n == 0) throw ValidationError("log marginal likelihood needs at least one point");
  if (y.size() != n) throw DimensionMismatch("targets and inputs differ in length");
  DenseMatrix a = gram(inputs, h);
  for (std::size_t i = 0; i < n; ++i) a(i, i) += h.noise * h.noise + kJitter;
  const DenseMatrix l = factor_or_explain(a);
  std::vector<double> v(y.begin(), y.end());
  solve_lower_in_place(l, v);
  return -0.5 * dot_product(v, v) - 0.5 * cholesky_log_det(l) -
         0.5 * static_cast<double>(n) * kLog2Pi;
}

LmlGradient log_marginal_likelihood_gradient(const DenseMatrix& inputs, std::span<const double> y,
                                             const TargetHyper& h, bool with_inputs) {
  const std::size_t n = inputs.rows(), d = inputs.cols();
  if (n == 0) throw ValidationError("log marginal likelihood needs at least one point");
  if (y.size() != n) throw DimensionMismatch("targets and inputs differ in length");
  const DenseMatrix k = gram(inputs, h);
  DenseMatrix a = k;
  for (std::size_t i = 0; i < n; ++i) a(i, i) += h.noise * h.noise + kJitter;
  const DenseMatrix l = factor_or_explain(a);
  const std::vector<double> w_y = cholesky_solve(l, y);

  LmlGradient g;
  g.value = -0.5 * dot_product(y, w_y) - 0.5 * cholesky_log_det(l) -
            0.5 * static_cast<double>(n) * kLog2Pi;

  // W = a a^T - A^-1, overwriting the inverse in place.
  DenseMatrix w = cholesky_inverse(l);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) w(r, c) = w_y[r] * w_y[c] - w(r, c);

  g.d_beta.assign(d, 0.0);
  if (with_inputs) g.d_inputs.assign(n * d, 0.0);
  std::vector<double> inv_b2(d), inv_b3(d);
  for (std::size_t i = 0; i < d; ++i) {
    inv_b2[i] = 1.0 / (h.beta[i] * h.beta[i]);
    inv_b3[i] = inv_b2[i] / h.beta[i];
  }
  double wk_sum = 0.0, trace = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    trace += w(r, r);
    wk_sum += w(r, r) * k(r, r);
    const auto xr = inputs.row(r);
    for (std::size_t c = 0; c < r; ++c) {
      const double wk = w(r, c) * k(r, c);
      wk_sum += 2.0 * wk;
      const auto xc = inputs.row(c);
      for (std::size_t i = 0; i < d; ++i) {
        const double diff = xr[i] - xc[i];
        // Off-diagonal pair counted twice, halved by the 0.5 in 0.5 tr(W dA).
        g.d_beta[i] += wk * diff * diff * inv_b3[i];
        if (with_inputs) {
          const double t = wk * diff * inv_b2[i];
          g.d_inputs[r * d + i] -= t;
          g.d_inputs[c * d + i] += t;
        }
      }
    }
  }
  g.d_alpha = wk_sum / h.alpha;
  g.d_noise = h.noise * trace;
  return g;
}

ad::Var log_marginal_likelihood(std::span<const ad::Var> inputs, std::size_t n_inputs,
                                std::span<const double> y, ad::Var alpha,
                                std::span<const ad::Var> beta, ad::Var noise) {
  if (n_inputs == 0 || inputs.size() % n_inputs != 0)
    throw DimensionMismatch("GP input block is not a whole number of rows");
  if (beta.size() != n_inputs) throw DimensionMismatch("one length scale per predictor expected");
  const std::size_t n = inputs.size() / n_inputs;
  DenseMatrix x(n, n_inputs);
  for (std::size_t e = 0; e < inputs.size(); ++e) x.data()[e] = inputs[e].value();
  TargetHyper h{alpha.value(), {}, noise.value()};
  for (const ad::Var& b : beta) h.beta.push_back(b.value());
  const LmlGradient g = log_marginal_likelihood_gradient(x, y, h, true);

  std::vector<std::uint32_t> parents;
  std::vector<double> partials;
  parents.reserve(2 + n_inputs + inputs.size());
  partials.reserve(parents.capacity());
  parents.push_back(alpha.index());
  partials.push_back(g.d_alpha);
  for (std::size_t i = 0; i < n_inputs; ++i) {
    parents.push_back(beta[i].index());
    partials.push_back(g.d_beta[i]);
  }
  parents.push_back(noise.index());
  partials.push_back(g.d_noise);
  for (std::size_t e = 0; e < inputs.size(); ++e) {
    parents.push_back(inputs[e].index());
    partials.push_back(g.d_inputs[e]);
  }
  return alpha.tape()->push(ad::OpKind::Custom, g.value, parents, partials);
}

// ------------------------------------------------------------------ model

void GPModel::rebuild_cache() {
  hyper.validate();
  if (ref_targets.size() != hyper.n_targets())
    throw DimensionMismatch("GP model has " + std::to_string(ref_targets.size()) +
                            " target vectors for " + std::to_string(hyper.n_targets()) +
                            " kernels");
  if (ref_inputs.cols() != hyper.n_inputs())
    throw DimensionMismatch("GP reference inputs have the wrong number of predictors");
  chol_cache.clear();
  weights.clear();
  for (std::size_t j = 0; j < hyper.n_targets(); ++j) {
    if (ref_targets[j].size() != ref_inputs.rows())
      throw DimensionMismatch("GP reference targets and inputs differ in length");
    chol_cache.push_back(factor_or_explain(covariance(ref_inputs, j, hyper)));
    weights.push_back(cholesky_solve(chol_cache.back(), ref_targets[j]));
  }
}

nlohmann::json GPModel::to_json() const {
  nlohmann::json x = nlohmann::json::array();
  for (std::size_t r = 0; r < ref_inputs.rows(); ++r)
    x.push_back(std::vector<double>(ref_inputs.row(r).begin(), ref_inputs.row(r).end()));
  return {{"hyper", hyper.to_json()}, {"ref_inputs", x}, {"ref_targets", ref_targets}};
}

GPModel GPModel::from_json(const nlohmann::json& j) {
  GPModel m;
  m.hyper = KernelHyper::from_json(j.at("hyper"));
  const auto rows = j.at("ref_inputs").get<std::vector<std::vector<double>>>();
  m.ref_inputs = DenseMatrix(rows.size(), m.hyper.n_inputs());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.hyper.n_inputs())
      throw SchemaError("GP checkpoint reference row has the wrong width");
    std::copy(rows[r].begin(), rows[r].end(), m.ref_inputs.row(r).begin());
  }
  m.ref_targets = j.at("ref_targets").get<std::vector<std::vector<double>>>();
  m.rebuild_cache();
  return m;
}

GPModel condition(const DenseMatrix& inputs, std::vector<std::vector<double>> targets,
                  const KernelHyper& hyper) {
  GPModel m;
  m.hyper = hyper;
  m.ref_inputs = inputs;
  m.ref_targets = std::move(targets);
  m.rebuild_cache();
  return m;
}

// -------------------------------------------------------------------- fit

GPModel fit(const DenseMatrix& inputs, const std::vector<std::vector<double>>& targets,
            const KernelHyper& init, const FitOptions& options, FitTrace* trace) {
  init.validate();
  if (inputs.rows() > 4000)
    throw ValidationError("dense GP fit supports at most 4000 points, got " +
                          std::to_string(inputs.rows()));
  if (targets.size() != init.n_targets())
    throw DimensionMismatch("fit received " + std::to_string(targets.size()) +
                            " targets for " + std::to_string(init.n_targets()) + " kernels");
  if (inputs.cols() != init.n_inputs())
    throw DimensionMismatch("fit inputs have the wrong number of predictors");
  if (!(options.learning_rate > 0.0)) throw ConfigurationError("learning rate must be positive");

  const auto rows = spread_rows(inputs.rows(), std::max<std::size_t>(options.max_fit_points, 1));
  const DenseMatrix sub = take_rows(inputs, rows);
  const double n = static_cast<double>(rows.size());
  const std::size_t d = init.n_inputs();

  KernelHyper hyper = init;
  if (trace) {
    trace->objective.assign(init.n_targets(), {});
    trace->rejected_steps = 0;
  }

  for (std::size_t j = 0; j < init.n_targets(); ++j) {
    if (options.steps == 0) break;
    std::vector<double> y;
    for (std::size_t r : rows) y.push_back(targets[j][r]);

    // Objective and gradient over the raw parameters.
    auto evaluate = [&](std::span<const double> raw, std::vector<double>& grad) {
      KernelHyper probe = hyper;
      probe.set_raw(j, raw);
      const LmlGradient g = log_marginal_likelihood_gradient(sub, y, target_hyper(probe, j), false);
      grad.assign(raw.size(), 0.0);
      grad[0] = g.d_alpha * sigmoid(raw[0]) / n;
      for (std::size_t i = 0; i < d; ++i) grad[1 + i] = g.d_beta[i] * sigmoid(raw[1 + i]) / n;
      grad.back() = g.d_noise * sigmoid(raw.back()) / n;
      return g.value / n;
    };

    std::vector<double> raw = hyper.raw(j), grad, trial_grad;
    double value = evaluate(raw, grad);
    if (!std::isfinite(value))
      throw NotConverged("GP fit: non-finite initial objective for target " + std::to_string(j));
    if (trace) trace->objective[j].push_back(value);

    double lr = options.learning_rate;
    for (std::size_t step = 0; step < options.steps; ++step) {
      std::vector<double> trial(raw);
      for (std::size_t p = 0; p < raw.size(); ++p) trial[p] += lr * grad[p];
      double trial_value = -INFINITY;
      try {
        trial_value = evaluate(trial, trial_grad);
      } catch (const NotPositiveDefinite&) {
      }
      if (std::isfinite(trial_value) && trial_value >= value) {
        raw = std::move(trial);
        grad = trial_grad;
        value = trial_value;
        lr *= 1.1;
        if (trace) trace->objective[j].push_back(value);
      } else {
        lr *= 0.5;
        if (trace) ++trace->rejected_steps;
      }
    }
    hyper.set_raw(j, raw);
  }
  return condition(inputs, targets, hyper);
}

// ---------------------------------------------------------------- predict

Prediction predict(const GPModel& model, std::span<const double> x) {
  if (x.size() != model.n_inputs())
    throw DimensionMismatch("predict expects " + std::to_string(model.n_inputs()) +
                            " predictors, got " + std::to_string(x.size()));
  DenseMatrix row(1, x.size());
  std::copy(x.begin(), x.end(), row.row(0).begin());
  BatchPrediction b = predict(model, row, true);
  Prediction p;
  for (std::size_t j = 0; j < model.n_targets(); ++j) {
    p.mean.push_back(b.mean[j][0]);
    p.variance.push_back(b.variance[j][0]);
  }
  return p;
}

BatchPrediction predict(const GPModel& model, const DenseMatrix& x, bool with_variance) {
  if (!model.fitted()) throw ValidationError("GP model is not fitted");
  if (x.cols() != model.n_inputs())
    throw DimensionMismatch("predict expects " + std::to_string(model.n_inputs()) +
                            " predictors, got " + std::to_string(x.cols()));
  const std::size_t n = model.ref_inputs.rows(), m = x.rows(), d = x.cols();
  BatchPrediction out;
  constexpr std::size_t kChunk = 256;
  for (std::size_t j = 0; j < model.n_targets(); ++j) {
    const TargetHyper h = target_hyper(model.hyper, j);
    const double amp = h.alpha * h.alpha;
    std::vector<double> mean(m), var(with_variance ? m : 0);
    DenseMatrix ref_scaled(n, d);
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t i = 0; i < d; ++i) ref_scaled(a, i) = model.ref_inputs(a, i) / h.beta[i];
    const DenseMatrix& l = model.chol_cache[j];
    const auto& w = model.weights[j];

    for (std::size_t start = 0; start < m; start += kChunk) {
      const std::size_t cols = std::min(kChunk, m - start);
      // cross(a, c) = k(ref_a, x_{start + c}); columns contiguous per reference row.
      DenseMatrix cross(n, cols);
      std::vector<double> xs(d);
      for (std::size_t c = 0; c < cols; ++c) {
        for (std::size_t i = 0; i < d; ++i) xs[i] = x(start + c, i) / h.beta[i];
        double mu = 0.0;
        for (std::size_t a = 0; a < n; ++a) {
          const auto ra = ref_scaled.row(a);
          double s = 0.0;
          for (std::size_t i = 0; i < d; ++i) s += (ra[i] - xs[i]) * (ra[i] - xs[i]);
          const double kv = amp * std::exp(-0.5 * s);
          cross(a, c) = kv;
          mu += kv * w[a];
        }
        mean[start + c] = mu;
      }
      if (!with_variance) continue;
      // Forward substitution L V = cross for all columns at once.
      for (std::size_t a = 0; a < n; ++a) {
        double* va = cross.row(a).data();
        const double* la = l.row(a).data();
        for (std::size_t k = 0; k < a; ++k) {
          const double lak = la[k];
          const double* vk = cross.row(k).data();
          for (std::size_t c = 0; c < cols; ++c) va[c] -= lak * vk[c];
        }
        const double inv = 1.0 / la[a];
        for (std::size_t c = 0; c < cols; ++c) va[c] *= inv;
      }
      for (std::size_t c = 0; c < cols; ++c) {
        double explained = 0.0;
        for (std::size_t a = 0; a < n; ++a) explained += cross(a, c) * cross(a, c);
        var[start + c] = std::max(amp - explained, 0.0) + h.noise * h.noise;
      }
    }
    out.mean.push_back(std::move(mean));
    out.variance.push_back(std::move(var));
  }
  return out;
}

}  // namespace hb::gp
