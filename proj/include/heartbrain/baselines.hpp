#pragma once

// Baseline imputers, squared-error tables and the Wilcoxon rank-sum test with
// Bonferroni correction.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "heartbrain/linalg.hpp"
#include "json.hpp"

namespace hb::baselines {

// Column-wise constant fills from the training matrix (rows = subjects).
// Columns must be non-empty and finite.
DenseMatrix impute_mean(const DenseMatrix& train_targets, std::size_t n_test);
DenseMatrix impute_median(const DenseMatrix& train_targets, std::size_t n_test);

// Average of the k nearest training rows under Euclidean distance on the
// feature matrices; distance ties go to the lower training index and the
// neighbours are averaged in index order.
DenseMatrix impute_knn(const DenseMatrix& train_features, const DenseMatrix& train_targets,
                       const DenseMatrix& test_features, std::size_t k);

struct KnnSelection {
  std::size_t k = 0;
  std::vector<std::size_t> grid;
  std::vector<double> cv_mse;  // mean over folds' held-out cells, per grid entry
};

inline const std::vector<std::size_t> kDefaultKGrid{1, 2, 5, 10, 20, 50};

// k-fold cross-validation over the grid; the smallest CV MSE wins, ties to
// the smaller k. Fold assignment is a seeded shuffle.
KnnSelection select_k(const DenseMatrix& features, const DenseMatrix& targets,
                      const std::vector<std::size_t>& grid = kDefaultKGrid, std::size_t folds = 10,
                      std::uint64_t seed = 7);

enum class WilcoxonMethod { Auto, Exact, Normal };

struct WilcoxonResult {
  double u = 0.0;      // Mann-Whitney U of the first sample
  double w = 0.0;      // rank sum of the first sample (midranks)
  double p = 1.0;      // two-sided
  bool exact = false;
};

// Auto: exact distribution of the midrank sum when min(n1, n2) <= 20,
// otherwise the tie-corrected normal approximation with continuity correction.
WilcoxonResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b,
                                 WilcoxonMethod method = WilcoxonMethod::Auto);

// flag_i = p_i < alpha / m.
std::vector<bool> bonferroni(std::span<const double> p_values, double alpha);

struct ErrorSeries {
  std::string method;
  std::string feature;
  std::vector<double> squared_errors;  // one per test subject

  double mean() const;
  double median() const;
};

struct Comparison {
  std::string feature;
  std::string reference;
  std::string method;
  double u = 0.0;
  double p = 1.0;
  bool exact = false;
  bool significant = false;
};

struct EvalResult {
  std::vector<std::int64_t> subject_ids;
  std::vector<ErrorSeries> series;
  std::vector<Comparison> comparisons;
  double alpha = 0.05;
  nlohmann::json notes = nlohmann::json::object();

  const ErrorSeries& find(const std::string& method, const std::string& feature) const;

  // CSV rows: method,feature,subject_id,squared_error.
  void write_csv(std::ostream& out) const;
  void write_csv(const std::filesystem::path& path) const;
  nlohmann::json summary() const;
};

struct MethodPredictions {
  std::string method;
  DenseMatrix values;  // subjects x features, same units as truth
};

// Squared errors per method and feature (standardized inputs expected).
EvalResult mse_table(const DenseMatrix& truth, const std::vector<std::string>& features,
                     const std::vector<MethodPredictions>& predictions,
                     std::vector<std::int64_t> subject_ids = {});

// Wilcoxon tests of `reference` against every other method sharing each of
// `features`, Bonferroni-corrected within each feature.
void compare_methods(EvalResult& result, const std::string& reference,
                     const std::vector<std::string>& features, double alpha = 0.05);

}  // namespace hb::baselines
