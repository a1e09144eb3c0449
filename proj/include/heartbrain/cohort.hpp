#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "heartbrain/linalg.hpp"
#include "json.hpp"

namespace hb::cohort {

// Column roles: observed cardiac inputs, conditioning brain/clinical
// features, cardiac features to impute, and lumped-model parameters.
// `Aux` columns are carried in files but play no modelling role.
enum class Role { XObs, Nu, XHat, Y, Aux };

const char* role_name(Role role);

// File column order (after subject_id).
inline constexpr std::array<std::string_view, 17> kColumns{
    "age", "bsa", "brain_vol", "vent_vol", "wmh_vol", "wmh_count", "dbp", "sbp", "mbp",
    "sv",  "edv", "ef",        "sigma0",   "r0",      "c1",        "rp",  "tau"};
inline constexpr std::array<std::string_view, 2> kXObs{"dbp", "mbp"};
inline constexpr std::array<std::string_view, 6> kNu{"age",     "bsa",     "brain_vol",
                                                     "vent_vol", "wmh_vol", "wmh_count"};
inline constexpr std::array<std::string_view, 3> kXHat{"sv", "edv", "ef"};
inline constexpr std::array<std::string_view, 5> kY{"sigma0", "r0", "c1", "rp", "tau"};
inline constexpr std::array<std::string_view, 2> kSkewed{"wmh_vol", "wmh_count"};

Role role_of(std::string_view column);

struct BoxCoxTransform {
  double lambda = 1.0;
  double shift = 0.0;

  double apply(double x) const;
  double invert(double y) const;
};

struct Standardization {
  double mean = 0.0;
  double std = 1.0;

  double apply(double x) const { return (x - mean) / std; }
  double invert(double y) const { return y * std + mean; }
};

using Transform = std::variant<BoxCoxTransform, Standardization>;

// Ordered per-column transforms; sufficient to invert every applied step.
class TransformLog {
 public:
  void append(std::string_view column, Transform t);
  const std::vector<Transform>& steps(std::string_view column) const;
  bool empty() const { return entries_.empty(); }

  double forward(std::string_view column, double x) const;
  double inverse(std::string_view column, double y) const;

  nlohmann::json to_json() const;
  static TransformLog from_json(const nlohmann::json& j);

  bool operator==(const TransformLog&) const;

 private:
  std::map<std::string, std::vector<Transform>, std::less<>> entries_;
};

struct Column {
  std::string name;
  Role role = Role::Aux;
  std::vector<double> values;          // NaN where masked
  std::vector<std::uint8_t> observed;  // 1 = observed
};

struct FeatureTable {
  std::vector<std::int64_t> subject_ids;
  std::vector<Column> columns;
  TransformLog transform_log;

  // Full schema with every cell masked.
  static FeatureTable with_schema(std::size_t n_subjects);

  std::size_t n_subjects() const { return subject_ids.size(); }
  std::size_t role_column_count() const;
  std::size_t masked_cells() const;

  Column& column(std::string_view name);
  const Column& column(std::string_view name) const;

  void set(std::string_view name, std::size_t row, double value);
  void mask(std::string_view name, std::size_t row);

  FeatureTable select_rows(std::span<const std::size_t> rows) const;
  // Rows = subjects, columns in the given order; masked cells are NaN.
  DenseMatrix matrix(std::span<const std::string_view> names) const;
};

struct GeneratorOptions {
  double heart_rate = 70.0;
  double volume_noise = 3.0;    // mL, on EDV and ESV
  double pressure_noise = 3.0;  // mmHg, on SBP and DBP
  int max_retries = 5;
};

// Synthetic cohort: conditioning features from fixed marginals, lumped
// parameters coupled to them with lognormal noise, and cardiac measurements
// from forward simulation plus measurement noise. Fully observed.
FeatureTable generate_cohort(std::size_t n, std::uint64_t seed,
                             const GeneratorOptions& options = {});

struct BoxCoxResult {
  std::vector<double> transformed;
  BoxCoxTransform transform;
};

// Profile log-likelihood of the Box-Cox model for already-positive values.
double box_cox_log_likelihood(std::span<const double> positive_values, double lambda);
// λ ∈ {−2.0, −1.9, …, 2.0} maximizing the profile log-likelihood.
BoxCoxResult box_cox(std::span<const double> values);
BoxCoxResult box_cox(std::span<const double> values, double forced_lambda);

// Fits Box-Cox on the observed cells of `stats_rows` for the skewed columns
// and applies it to every row.
FeatureTable box_cox_columns(const FeatureTable& table,
                             std::span<const std::size_t> stats_rows);

// Zero-mean, unit-variance scaling of every role column using statistics
// from `stats_rows` only. Throws on a zero-variance column.
FeatureTable standardize(const FeatureTable& table,
                         std::span<const std::size_t> stats_rows);

// Re-applies a recorded transform log (e.g. fitted on training data) to a
// table in physical units, or undoes it.
FeatureTable apply_transforms(const FeatureTable& table, const TransformLog& log);
FeatureTable invert_transforms(const FeatureTable& table);

struct SplitResult {
  FeatureTable complete;
  FeatureTable incomplete;        // x̂ and y masked
  FeatureTable incomplete_truth;  // same rows, unmasked; evaluation only
};

SplitResult split(const FeatureTable& table, std::size_t n_complete, std::uint64_t seed);

// CSV with header subject_id + kColumns; masked cells are empty strings.
void write_csv(const FeatureTable& table, std::ostream& out);
void write_csv(const FeatureTable& table, const std::filesystem::path& path);
FeatureTable read_csv(std::istream& in);
FeatureTable read_csv(const std::filesystem::path& path);

void write_transform_log(const TransformLog& log, const std::filesystem::path& path);
TransformLog read_transform_log(const std::filesystem::path& path);

double pearson_correlation(std::span<const double> a, std::span<const double> b);
double skewness(std::span<const double> values);

}  // namespace hb::cohort
