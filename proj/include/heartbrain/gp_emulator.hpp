#pragma once

// Independent per-target Gaussian-process regression with a zero prior mean
// and an RBF kernel carrying one length scale per (predictor, target) pair:
//
//   k_j(x, x') = alpha_j^2 * exp(-sum_i (x_i - x'_i)^2 / (2 beta_ij^2))
//
// Observations carry Gaussian noise with std noise_j. Every Gram matrix gets
// a fixed diagonal jitter before factorization.

#include <cstddef>
#include <span>
#include <vector>

#include "heartbrain/autodiff.hpp"
#include "heartbrain/linalg.hpp"
#include "json.hpp"

namespace hb::gp {

inline constexpr double kJitter = 1e-8;
inline constexpr double kNoiseFloor = 1e-6;

struct KernelHyper {
  std::vector<double> alpha;  // per target
  DenseMatrix beta;           // targets x predictors
  std::vector<double> noise;  // per target, std

  std::size_t n_targets() const { return alpha.size(); }
  std::size_t n_inputs() const { return beta.cols(); }

  // Throws ValidationError on shape mismatch or a non-positive entry.
  void validate() const;

  // Unconstrained parameters per target: [raw alpha, raw beta_1..d, raw noise]
  // with alpha = softplus(raw), beta = softplus(raw), noise = softplus(raw) + floor.
  std::vector<double> raw(std::size_t j) const;
  void set_raw(std::size_t j, std::span<const double> raw);
  static std::size_t raw_size(std::size_t n_inputs) { return n_inputs + 2; }

  nlohmann::json to_json() const;
  static KernelHyper from_json(const nlohmann::json& j);
};

// alpha_j = std(y_j), beta_ij = median pairwise |x_i - x'_i|, noise_j = 0.1 std(y_j).
// Pairwise medians use at most `max_points` evenly spaced rows.
KernelHyper initial_hyper(const DenseMatrix& inputs,
                          const std::vector<std::vector<double>>& targets,
                          std::size_t max_points = 500);

double kernel(std::span<const double> x, std::span<const double> x2, std::size_t j,
              const KernelHyper& hyper);

// K + (noise^2 + jitter) I for target j.
DenseMatrix covariance(const DenseMatrix& inputs, std::size_t j, const KernelHyper& hyper);

// Single-target hyperparameters in constrained form.
struct TargetHyper {
  double alpha = 1.0;
  std::vector<double> beta;
  double noise = 0.1;
};

TargetHyper target_hyper(const KernelHyper& hyper, std::size_t j);

double log_marginal_likelihood(const DenseMatrix& inputs, std::span<const double> y,
                               const TargetHyper& h);

struct LmlGradient {
  double value = 0.0;
  double d_alpha = 0.0;
  std::vector<double> d_beta;
  double d_noise = 0.0;
  std::vector<double> d_inputs;  // row-major n x d, only when requested
};

// Value and analytic gradient. With W = a a^T - A^-1, a = A^-1 y, every
// derivative is 0.5 tr(W dA).
LmlGradient log_marginal_likelihood_gradient(const DenseMatrix& inputs, std::span<const double> y,
                                             const TargetHyper& h, bool with_inputs);

// Tape version: one composite node whose parents are alpha, the betas, noise
// and every input entry (row-major n x d).
ad::Var log_marginal_likelihood(std::span<const ad::Var> inputs, std::size_t n_inputs,
                                std::span<const double> y, ad::Var alpha,
                                std::span<const ad::Var> beta, ad::Var noise);

struct GPModel {
  KernelHyper hyper;
  DenseMatrix ref_inputs;
  std::vector<std::vector<double>> ref_targets;  // per target
  std::vector<DenseMatrix> chol_cache;           // per target factor of covariance()
  std::vector<std::vector<double>> weights;      // per target covariance()^-1 y

  bool fitted() const { return !chol_cache.empty(); }
  std::size_t n_targets() const { return hyper.n_targets(); }
  std::size_t n_inputs() const { return hyper.n_inputs(); }

  // Recomputes chol_cache and weights from hyper and the reference set.
  void rebuild_cache();

  nlohmann::json to_json() const;
  // Restores the model and rebuilds the cache.
  static GPModel from_json(const nlohmann::json& j);
};

// Builds a model without optimization.
GPModel condition(const DenseMatrix& inputs, std::vector<std::vector<double>> targets,
                  const KernelHyper& hyper);

struct FitOptions {
  std::size_t steps = 200;
  double learning_rate = 0.05;
  // Hyperparameters are optimized on at most this many evenly spaced rows;
  // the returned model conditions on all rows.
  std::size_t max_fit_points = 4000;
};

struct FitTrace {
  // Per target: objective (log marginal likelihood / n) after each accepted step,
  // starting with the initial value.
  std::vector<std::vector<double>> objective;
  std::size_t rejected_steps = 0;
};

// Per-target gradient ascent on the log marginal likelihood over the raw
// parameters. A step that lowers the objective or breaks the factorization is
// rejected and the step size halved; accepted steps grow it by 10%.
GPModel fit(const DenseMatrix& inputs, const std::vector<std::vector<double>>& targets,
            const KernelHyper& init, const FitOptions& options = {}, FitTrace* trace = nullptr);

struct Prediction {
  std::vector<double> mean;      // per target
  std::vector<double> variance;  // per target, includes noise^2
};

Prediction predict(const GPModel& model, std::span<const double> x);

// Row-wise predictions; mean[j][r] and variance[j][r].
struct BatchPrediction {
  std::vector<std::vector<double>> mean;
  std::vector<std::vector<double>> variance;
};

BatchPrediction predict(const GPModel& model, const DenseMatrix& x, bool with_variance = true);

}  // namespace hb::gp
