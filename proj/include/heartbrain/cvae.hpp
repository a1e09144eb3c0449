#pragma once

// Conditional VAE over the cardiac features: encoder q(z | x_obs, nu),
// conditional prior p(z | nu) and decoder p(x_hat | nu, z), all diagonal
// Gaussians produced by small tanh MLPs. Forward passes are templated so the
// same code runs on doubles and on tape variables.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "heartbrain/autodiff.hpp"
#include "heartbrain/cohort.hpp"
#include "heartbrain/errors.hpp"
#include "heartbrain/linalg.hpp"
#include "heartbrain/random.hpp"
#include "json.hpp"

namespace hb::cvae {

inline constexpr double kLogVarMin = -12.0;
inline constexpr double kLogVarMax = 6.0;

struct Architecture {
  std::size_t n_xobs = 2;
  std::size_t n_nu = 6;
  std::size_t n_xhat = 3;
  std::size_t latent = 4;
  std::size_t hidden = 32;
  std::size_t hidden_layers = 2;

  bool operator==(const Architecture&) const = default;
};

// Layer sizes and offsets into a flat parameter block. Each layer stores an
// out x in row-major weight matrix followed by its bias.
class MlpLayout {
 public:
  MlpLayout() = default;
  explicit MlpLayout(std::vector<std::size_t> sizes);

  const std::vector<std::size_t>& sizes() const { return sizes_; }
  std::size_t layers() const { return sizes_.size() - 1; }
  std::size_t n_params() const { return offsets_.back(); }
  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
  std::size_t bias_offset(std::size_t layer) const {
    return offsets_[layer] + sizes_[layer] * sizes_[layer + 1];
  }
  std::size_t n_in() const { return sizes_.front(); }
  std::size_t n_out() const { return sizes_.back(); }

 private:
  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> offsets_{0};
};

namespace detail {

inline double dense(std::span<const double> w, std::span<const double> x, double b) {
  double s = b;
  for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * x[i];
  return s;
}
inline ad::Var dense(std::span<const ad::Var> w, std::span<const ad::Var> x, ad::Var b) {
  return ad::affine(w, x, b);
}
inline double activate(double x) { return std::tanh(x); }
inline ad::Var activate(ad::Var x) { return ad::tanh(x); }
inline double clamp_log_var(double x) { return std::clamp(x, kLogVarMin, kLogVarMax); }
inline ad::Var clamp_log_var(ad::Var x) { return ad::clamp(x, kLogVarMin, kLogVarMax); }

}  // namespace detail

// tanh on hidden layers, identity on the output layer.
template <class T>
std::vector<T> mlp_forward(const MlpLayout& layout, std::span<const T> params,
                           std::span<const T> input) {
  if (input.size() != layout.n_in())
    throw DimensionMismatch("MLP expects " + std::to_string(layout.n_in()) + " inputs, got " +
                            std::to_string(input.size()));
  if (params.size() != layout.n_params()) throw DimensionMismatch("MLP parameter block size");
  std::vector<T> current(input.begin(), input.end()), next;
  for (std::size_t l = 0; l < layout.layers(); ++l) {
    const std::size_t in = layout.sizes()[l], out = layout.sizes()[l + 1];
    const std::size_t w0 = layout.weight_offset(l), b0 = layout.bias_offset(l);
    next.clear();
    next.reserve(out);
    for (std::size_t o = 0; o < out; ++o) {
      T v = detail::dense(params.subspan(w0 + o * in, in), std::span<const T>(current),
                          params[b0 + o]);
      next.push_back(l + 1 < layout.layers() ? detail::activate(v) : v);
    }
    std::swap(current, next);
  }
  return current;
}

template <class T>
struct GaussianLatent {
  std::vector<T> mu;
  std::vector<T> log_var;
};

// Closed-form KL(q || p) between diagonal Gaussians.
template <class T>
T kl_divergence(const GaussianLatent<T>& q, const GaussianLatent<T>& p) {
  using std::exp;
  const std::size_t n = q.mu.size();
  if (q.log_var.size() != n || p.mu.size() != n || p.log_var.size() != n)
    throw DimensionMismatch("kl_divergence: latent dimensions differ");
  if (n == 0) throw DimensionMismatch("kl_divergence: empty latent");
  T total = 0.0 * q.mu[0];
  for (std::size_t l = 0; l < n; ++l) {
    const T diff = q.mu[l] - p.mu[l];
    total = total + 0.5 * (exp(q.log_var[l] - p.log_var[l]) + diff * diff / exp(p.log_var[l]) -
                           1.0 + p.log_var[l] - q.log_var[l]);
  }
  return total;
}

// z = mu + exp(log_var / 2) * eps for fixed standard-normal eps.
template <class T>
std::vector<T> reparam(const GaussianLatent<T>& latent, std::span<const double> eps) {
  using std::exp;
  if (eps.size() != latent.mu.size()) throw DimensionMismatch("reparam: eps length");
  std::vector<T> z;
  z.reserve(eps.size());
  for (std::size_t l = 0; l < eps.size(); ++l)
    z.push_back(latent.mu[l] + exp(0.5 * latent.log_var[l]) * eps[l]);
  return z;
}

struct LatentSample {
  std::vector<double> z;
  std::vector<double> eps;
};

LatentSample reparam_sample(const GaussianLatent<double>& latent, Rng& rng);

struct ImputeResult {
  DenseMatrix mean;  // subjects x features
  DenseMatrix std;
};

class CvaeModel {
 public:
  CvaeModel() = default;
  // Uniform fan-in weights, zero biases, zero final layers.
  static CvaeModel initialize(const Architecture& arch, std::uint64_t seed);

  const Architecture& arch() const { return arch_; }
  const MlpLayout& encoder_layout() const { return encoder_; }
  const MlpLayout& prior_layout() const { return prior_; }
  const MlpLayout& decoder_layout() const { return decoder_; }

  std::size_t n_params() const { return params_.size(); }
  std::span<const double> params() const { return params_; }
  std::span<double> params() { return params_; }
  bool initialized() const { return !params_.empty(); }

  // Slices of a full parameter block (this model's or a tape copy).
  template <class T>
  std::span<const T> encoder_params(std::span<const T> all) const {
    return all.subspan(0, encoder_.n_params());
  }
  template <class T>
  std::span<const T> prior_params(std::span<const T> all) const {
    return all.subspan(encoder_.n_params(), prior_.n_params());
  }
  template <class T>
  std::span<const T> decoder_params(std::span<const T> all) const {
    return all.subspan(encoder_.n_params() + prior_.n_params(), decoder_.n_params());
  }

  template <class T>
  GaussianLatent<T> encode(std::span<const T> all, std::span<const T> x_obs,
                           std::span<const T> nu) const {
    if (x_obs.size() != arch_.n_xobs || nu.size() != arch_.n_nu)
      throw DimensionMismatch("encode: expected " + std::to_string(arch_.n_xobs) + " x_obs and " +
                              std::to_string(arch_.n_nu) + " nu values");
    std::vector<T> in(x_obs.begin(), x_obs.end());
    in.insert(in.end(), nu.begin(), nu.end());
    return split_latent(mlp_forward<T>(encoder_, encoder_params(all), in), arch_.latent);
  }

  template <class T>
  GaussianLatent<T> prior(std::span<const T> all, std::span<const T> nu) const {
    if (nu.size() != arch_.n_nu) throw DimensionMismatch("prior: wrong number of nu values");
    return split_latent(mlp_forward<T>(prior_, prior_params(all), nu), arch_.latent);
  }

  // Per-feature (mean, log_var) over x_hat, packed as GaussianLatent.
  template <class T>
  GaussianLatent<T> decode(std::span<const T> all, std::span<const T> z,
                           std::span<const T> nu) const {
    if (z.size() != arch_.latent || nu.size() != arch_.n_nu)
      throw DimensionMismatch("decode: expected " + std::to_string(arch_.latent) +
                              " latent and " + std::to_string(arch_.n_nu) + " nu values");
    std::vector<T> in(z.begin(), z.end());
    in.insert(in.end(), nu.begin(), nu.end());
    return split_latent(mlp_forward<T>(decoder_, decoder_params(all), in), arch_.n_xhat);
  }

  // Convenience forms on this model's own parameters.
  GaussianLatent<double> encode(std::span<const double> x_obs, std::span<const double> nu) const;
  GaussianLatent<double> prior(std::span<const double> nu) const;
  GaussianLatent<double> decode(std::span<const double> z, std::span<const double> nu) const;

  // Monte Carlo over z ~ q(z | x_obs, nu) of decoder means. Row r uses the
  // stream Rng::derive(seed, r). std combines the spread of decoder means and
  // the mean decoder variance. With `log`, both are mapped to physical units
  // (std by the local slope of the inverse transform); out-of-range values
  // are reported as is.
  ImputeResult impute(const DenseMatrix& x_obs, const DenseMatrix& nu, std::size_t n_samples,
                      std::uint64_t seed, const cohort::TransformLog* log = nullptr) const;

  nlohmann::json to_json() const;
  static CvaeModel from_json(const nlohmann::json& j);

 private:
  template <class T>
  static GaussianLatent<T> split_latent(std::vector<T> out, std::size_t n) {
    GaussianLatent<T> g;
    g.mu.assign(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(n));
    for (std::size_t i = 0; i < n; ++i) g.log_var.push_back(detail::clamp_log_var(out[n + i]));
    return g;
  }

  Architecture arch_;
  MlpLayout encoder_, prior_, decoder_;
  std::vector<double> params_;
};

}  // namespace hb::cvae
