#pragma once

// Joint training of the CVAE and the GP emulator on the evidence lower bound
//
//   ELBO = E_q log p(y | x_obs, z) + E_q log p(x_hat | nu, z) - KL(q(z | x_obs, nu) || p(z | nu))
//
// where the first term is the exact GP log marginal likelihood of each batch
// (per target, inputs [x_obs, z]) and everything lives in standardized units.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "heartbrain/cohort.hpp"
#include "heartbrain/cvae.hpp"
#include "heartbrain/errors.hpp"
#include "heartbrain/gp_emulator.hpp"
#include "heartbrain/linalg.hpp"
#include "heartbrain/random.hpp"
#include "json.hpp"

namespace hb::joint {

enum class Optimizer { Sgd, Adam };

struct TrainConfig {
  std::size_t epochs = 500;
  std::size_t batch_size = 128;
  double learning_rate = 1e-2;
  double lr_decay = 1.0;  // multiplicative, per epoch
  Optimizer optimizer = Optimizer::Sgd;
  double grad_clip = 10.0;  // on the global gradient norm; 0 disables
  std::size_t mc_samples = 1;
  std::size_t kl_warmup_epochs = 50;
  // GP term weight ramps linearly from gp_weight_start to gp_weight over
  // gp_warmup_epochs (constant when the warm-up is 0).
  double gp_weight = 1.0;
  double gp_weight_start = 1.0;
  std::size_t gp_warmup_epochs = 0;
  // Alternate CVAE and GP updates on successive steps instead of updating jointly.
  bool alternate_gp = false;
  std::size_t gp_refit_steps = 200;
  std::size_t gp_refit_points = 256;
  double gp_refit_learning_rate = 0.05;
  std::uint64_t seed = 7;
  cvae::Architecture arch;

  // Throws ConfigurationError.
  void validate() const;
  double kl_weight(std::size_t epoch) const;
  double gp_term_weight(std::size_t epoch) const;

  nlohmann::json to_json() const;
  // Missing keys keep their defaults; unknown keys are rejected.
  static TrainConfig from_json(const nlohmann::json& j);
};

// Standardized role matrices, one row per subject.
struct Dataset {
  DenseMatrix x_obs;
  DenseMatrix nu;
  DenseMatrix x_hat;  // empty when targets are not required
  DenseMatrix y;

  std::size_t size() const { return x_obs.rows(); }
  Dataset rows(std::span<const std::size_t> rows) const;

  // Requires a standardized table. With `with_targets`, x_hat and y must be
  // fully observed too.
  static Dataset from_table(const cohort::FeatureTable& table, bool with_targets);
};

// CVAE weights plus GP kernel hyperparameters: the parameters the ELBO
// differentiates. The flat order is CVAE parameters, then per target
// [raw alpha, raw beta..., raw noise].
struct JointState {
  cvae::CvaeModel cvae;
  gp::KernelHyper hyper;

  std::size_t n_cvae() const { return cvae.n_params(); }
  std::size_t size() const;
  std::vector<double> flatten() const;
  void unflatten(std::span<const double> flat);
};

struct TermWeights {
  double gp = 1.0;
  double recon = 1.0;
  double kl = 1.0;
};

struct ElboTerms {
  double total = 0.0;  // gp + recon - kl, unweighted
  double gp = 0.0;
  double recon = 0.0;
  double kl = 0.0;
};

struct BatchElbo {
  double objective = 0.0;  // weighted: w_gp gp + w_recon recon - w_kl kl
  ElboTerms terms;
  std::vector<double> gradient;  // d objective / d flat state, when requested
};

// One latent draw: eps has batch x latent entries, row-major.
using EpsDraw = std::vector<double>;

// Expectation over explicit draws with the given weights (summing to 1 for an
// average). The GP and reconstruction terms are weighted per draw; KL is
// closed form. Throws ConfigurationError for batches smaller than 2.
BatchElbo elbo_batch(const JointState& state, const Dataset& batch,
                     std::span<const EpsDraw> draws, std::span<const double> draw_weights,
                     const TermWeights& weights, bool with_gradient);

// Monte Carlo average over `samples` draws from `rng`.
BatchElbo elbo_batch(const JointState& state, const Dataset& batch, std::size_t samples, Rng& rng,
                     const TermWeights& weights, bool with_gradient);

struct ElboRow {
  std::size_t epoch = 0;
  ElboTerms terms;  // per-subject epoch means
};

struct ElboReport {
  std::vector<ElboRow> rows;

  void write_csv(std::ostream& out) const;
  void write_csv(const std::filesystem::path& path) const;
  static ElboReport read_csv(std::istream& in);
};

struct JointModel {
  cvae::CvaeModel cvae;
  gp::GPModel gp;
  TrainConfig config;
  cohort::TransformLog transform_log;
  nlohmann::json metadata = nlohmann::json::object();

  bool trained() const { return cvae.initialized() && gp.fitted(); }
  JointState state() const { return {cvae, gp.hyper}; }

  nlohmann::json to_json() const;
  static JointModel from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static JointModel load(const std::filesystem::path& path);
};

// Non-finite objective during training; carries the last finite model.
class TrainingDiverged : public RuntimeFailure {
 public:
  TrainingDiverged(const std::string& what, std::shared_ptr<const JointModel> last_good)
      : RuntimeFailure(what), last_good_(std::move(last_good)) {}
  const JointModel& last_good() const { return *last_good_; }

 private:
  std::shared_ptr<const JointModel> last_good_;
};

struct TrainResult {
  JointModel model;
  ElboReport report;
};

// Optional per-epoch hook, e.g. for progress logging.
using EpochCallback = std::function<void(const ElboRow&)>;

TrainResult train(const cohort::FeatureTable& complete, const TrainConfig& config,
                  EpochCallback on_epoch = nullptr);

// Replaces the GP reference set with [x_obs, posterior-mean z] of `data` and
// refits the kernel hyperparameters for the configured budget.
void rebuild_reference(JointModel& model, const Dataset& data);

struct InferResult {
  DenseMatrix x_hat_mean;  // subjects x 3, physical units
  DenseMatrix x_hat_std;
  DenseMatrix y_mean;  // subjects x 5, physical units
  DenseMatrix y_std;
};

// Row r draws its latents from Rng::derive(seed, r); x_hat comes from the
// CVAE imputer and y from the GP at [x_obs, z] over the same draws.
InferResult infer(const JointModel& model, const Dataset& data, std::size_t n_samples,
                  std::uint64_t seed);

}  // namespace hb::joint
