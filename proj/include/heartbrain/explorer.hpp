#pragma once

// What-if sweeps along one conditioning variable: the remaining conditioning
// features and x_obs are pinned at cohort means, latents come from the
// conditional prior, the GP predicts the lumped parameters and the heart
// model is run at the predicted means.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "heartbrain/cohort.hpp"
#include "heartbrain/joint_trainer.hpp"
#include "heartbrain/lumped_heart.hpp"

namespace hb::explorer {

struct SweepSpec {
  std::string variable;
  std::size_t n_points = 20;
  // Raw-unit grid bounds; the cohort's 5th-95th percentiles when unset.
  std::optional<std::pair<double, double>> range;
  std::size_t n_mc = 256;
  std::uint64_t seed = 7;

  // Throws ConfigurationError, listing the valid names for an unknown variable.
  void validate() const;
};

// Physical-unit summary of one parameter at one grid point.
struct Band {
  double mean = 0.0;
  double lower95 = 0.0;
  double upper95 = 0.0;
  double lower50 = 0.0;
  double upper50 = 0.0;
};

struct SweepPoint {
  double value = 0.0;  // raw units of the swept variable
  std::array<Band, 5> params;  // sigma0, r0, c1, rp, tau
  bool simulated = false;
  std::string failure;  // reason when not simulated
  heart::CardiacMeasurements measurements;
  std::vector<heart::PvPoint> loop;
};

struct SweepResult {
  std::string variable;
  std::size_t n_mc = 0;
  std::vector<SweepPoint> points;

  std::vector<double> grid() const;
};

// Linear-interpolation percentile (q in [0, 100]) of the observed cells.
double percentile(std::span<const double> values, double q);

// Quantile of the equal-weight Gaussian mixture sum_s N(means[s], variances[s]) / S.
double mixture_quantile(std::span<const double> means, std::span<const double> variances, double p);

// `reference` is the raw (untransformed) table whose means and percentiles
// pin the sweep, normally the training partition.
SweepResult sweep(const joint::JointModel& model, const cohort::FeatureTable& reference,
                  const SweepSpec& spec);

// Writes params_<var>.csv, loops_<var>.csv and measurements_<var>.csv.
void export_sweep(const SweepResult& result, const std::filesystem::path& out_dir);

// Grid values and bands from a params CSV.
SweepResult read_params_csv(const std::filesystem::path& path);

}  // namespace hb::explorer
