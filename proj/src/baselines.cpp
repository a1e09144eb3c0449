#include "heartbrain/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "heartbrain/errors.hpp"
#include "heartbrain/format.hpp"
#include "heartbrain/random.hpp"
#include "heartbrain/special.hpp"

namespace hb::baselines {

namespace {

void check_training(const DenseMatrix& train) {
  if (train.rows() == 0 || train.cols() == 0) throw ValidationError("empty training column");
  for (double v : train.data())
    if (!std::isfinite(v)) throw ValidationError("training column has a missing or non-finite value");
}

double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  std::sort(v.begin(), v.end());
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

// Indices of the k nearest rows of `train` to `x`, ordered by (distance, index).
void nearest(const DenseMatrix& train, std::span<const double> x, std::size_t k,
             std::vector<std::pair<double, std::size_t>>& scratch, std::vector<std::size_t>& out) {
  scratch.clear();
  for (std::size_t r = 0; r < train.rows(); ++r) scratch.emplace_back(squared_distance(train.row(r), x), r);
  std::partial_sort(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(k), scratch.end());
  out.clear();
  for (std::size_t i = 0; i < k; ++i) out.push_back(scratch[i].second);
}

void fill_average(const DenseMatrix& targets, std::vector<std::size_t> idx, std::span<double> out) {
  std::sort(idx.begin(), idx.end());
  for (std::size_t c = 0; c < targets.cols(); ++c) {
    double s = 0.0;
    for (std::size_t r : idx) s += targets(r, c);
    out[c] = s / static_cast<double>(idx.size());
  }
}

std::vector<double> midranks(std::span<const double> pooled) {
  const std::size_t n = pooled.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return pooled[x] < pooled[y]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && pooled[order[j + 1]] == pooled[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

// Two-sided exact p-value of a subset's doubled-rank sum over all subsets of
// size m of the pooled doubled ranks.
double exact_p(const std::vector<long>& doubled, std::size_t m, long observed) {
  std::vector<long> sorted(doubled);
  std::sort(sorted.rbegin(), sorted.rend());
  long max_sum = 0;
  for (std::size_t i = 0; i < m; ++i) max_sum += sorted[i];
  const std::size_t width = static_cast<std::size_t>(max_sum) + 1;
  std::vector<std::vector<double>> count(m + 1, std::vector<double>(width, 0.0));
  count[0][0] = 1.0;
  for (std::size_t i = 0; i < doubled.size(); ++i) {
    const long r = doubled[i];
    for (std::size_t j = std::min(i + 1, m); j >= 1; --j)
      for (long s = max_sum; s >= r; --s)
        count[j][static_cast<std::size_t>(s)] += count[j - 1][static_cast<std::size_t>(s - r)];
  }
  double total = 0.0, le = 0.0, ge = 0.0;
  for (long s = 0; s <= max_sum; ++s) {
    const double c = count[m][static_cast<std::size_t>(s)];
    total += c;
    if (s <= observed) le += c;
    if (s >= observed) ge += c;
  }
  return std::min(1.0, 2.0 * std::min(le, ge) / total);
}

}  // namespace

DenseMatrix impute_mean(const DenseMatrix& train, std::size_t n_test) {
  check_training(train);
  DenseMatrix out(n_test, train.cols());
  for (std::size_t c = 0; c < train.cols(); ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < train.rows(); ++r) s += train(r, c);
    const double m = s / static_cast<double>(train.rows());
    for (std::size_t r = 0; r < n_test; ++r) out(r, c) = m;
  }
  return out;
}

DenseMatrix impute_median(const DenseMatrix& train, std::size_t n_test) {
  check_training(train);
  DenseMatrix out(n_test, train.cols());
  for (std::size_t c = 0; c < train.cols(); ++c) {
    std::vector<double> col(train.rows());
    for (std::size_t r = 0; r < train.rows(); ++r) col[r] = train(r, c);
    const double m = median_of(std::move(col));
    for (std::size_t r = 0; r < n_test; ++r) out(r, c) = m;
  }
  return out;
}

DenseMatrix impute_knn(const DenseMatrix& train_features, const DenseMatrix& train_targets,
                       const DenseMatrix& test_features, std::size_t k) {
  check_training(train_targets);
  if (train_features.rows() != train_targets.rows())
    throw DimensionMismatch("KNN training features and targets differ in rows");
  if (test_features.cols() != train_features.cols())
    throw DimensionMismatch("KNN test features have the wrong width");
  if (k < 1) throw ConfigurationError("k must be at least 1");
  if (k > train_features.rows())
    throw ConfigurationError("k = " + std::to_string(k) + " exceeds the " +
                             std::to_string(train_features.rows()) + " training subjects");
  DenseMatrix out(test_features.rows(), train_targets.cols());
  std::vector<std::pair<double, std::size_t>> scratch;
  std::vector<std::size_t> idx;
  for (std::size_t r = 0; r < test_features.rows(); ++r) {
    nearest(train_features, test_features.row(r), k, scratch, idx);
    fill_average(train_targets, idx, out.row(r));
  }
  return out;
}

KnnSelection select_k(const DenseMatrix& features, const DenseMatrix& targets,
                      const std::vector<std::size_t>& grid, std::size_t folds, std::uint64_t seed) {
  check_training(targets);
  const std::size_t n = features.rows();
  if (targets.rows() != n) throw DimensionMismatch("KNN features and targets differ in rows");
  if (folds < 2 || folds > n) throw ConfigurationError("fold count must be in [2, n]");
  if (grid.empty()) throw ConfigurationError("empty k grid");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  std::vector<std::size_t> fold_of(n);
  for (std::size_t p = 0; p < n; ++p) fold_of[order[p]] = p % folds;

  const std::size_t kmax = *std::max_element(grid.begin(), grid.end());
  KnnSelection sel;
  sel.grid = grid;
  std::vector<double> sse(grid.size(), 0.0);
  std::size_t cells = 0;
  std::vector<std::pair<double, std::size_t>> scratch;
  std::vector<std::size_t> idx, prefix;
  std::vector<double> avg(targets.cols());
  for (std::size_t f = 0; f < folds; ++f) {
    std::vector<std::size_t> train_rows, test_rows;
    for (std::size_t r = 0; r < n; ++r) (fold_of[r] == f ? test_rows : train_rows).push_back(r);
    DenseMatrix tf(train_rows.size(), features.cols()), tt(train_rows.size(), targets.cols());
    for (std::size_t i = 0; i < train_rows.size(); ++i) {
      std::copy(features.row(train_rows[i]).begin(), features.row(train_rows[i]).end(), tf.row(i).begin());
      std::copy(targets.row(train_rows[i]).begin(), targets.row(train_rows[i]).end(), tt.row(i).begin());
    }
    if (kmax > train_rows.size()) throw ConfigurationError("k grid exceeds the fold training size");
    for (std::size_t r : test_rows) {
      nearest(tf, features.row(r), kmax, scratch, idx);
      for (std::size_t g = 0; g < grid.size(); ++g) {
        prefix.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(grid[g]));
        fill_average(tt, prefix, avg);
        for (std::size_t c = 0; c < targets.cols(); ++c) sse[g] += std::pow(avg[c] - targets(r, c), 2);
      }
      cells += targets.cols();
    }
  }
  for (std::size_t g = 0; g < grid.size(); ++g) sel.cv_mse.push_back(sse[g] / static_cast<double>(cells));
  std::size_t best = 0;
  for (std::size_t g = 1; g < grid.size(); ++g)
    if (sel.cv_mse[g] < sel.cv_mse[best] || (sel.cv_mse[g] == sel.cv_mse[best] && grid[g] < grid[best]))
      best = g;
  sel.k = grid[best];
  return sel;
}

WilcoxonResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b,
                                 WilcoxonMethod method) {
  if (a.empty() || b.empty()) throw ValidationError("Wilcoxon rank-sum needs two non-empty samples");
  for (double v : a)
    if (std::isnan(v)) throw ValidationError("Wilcoxon sample contains NaN");
  for (double v : b)
    if (std::isnan(v)) throw ValidationError("Wilcoxon sample contains NaN");
  const std::size_t n1 = a.size(), n2 = b.size(), n = n1 + n2;
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const std::vector<double> ranks = midranks(pooled);

  WilcoxonResult res;
  for (std::size_t i = 0; i < n1; ++i) res.w += ranks[i];
  res.u = res.w - 0.5 * static_cast<double>(n1 * (n1 + 1));

  const bool all_equal = std::all_of(pooled.begin(), pooled.end(), [&](double v) { return v == pooled[0]; });
  if (all_equal) {
    res.p = 1.0;
    res.exact = method != WilcoxonMethod::Normal;
    return res;
  }
  const bool exact = method == WilcoxonMethod::Exact ||
                     (method == WilcoxonMethod::Auto && std::min(n1, n2) <= 20);
  res.exact = exact;
  if (exact) {
    // Work with the smaller sample; its doubled midrank sum is an integer.
    const bool first_small = n1 <= n2;
    const std::size_t m = first_small ? n1 : n2;
    std::vector<long> doubled(n);
    for (std::size_t i = 0; i < n; ++i) doubled[i] = std::lround(2.0 * ranks[i]);
    long observed = 0;
    for (std::size_t i = 0; i < n; ++i)
      if ((i < n1) == first_small) observed += doubled[i];
    res.p = exact_p(doubled, m, observed);
    return res;
  }
  std::map<double, std::size_t> ties;
  for (double v : pooled) ++ties[v];
  double tie_sum = 0.0;
  for (const auto& [v, t] : ties) tie_sum += std::pow(static_cast<double>(t), 3) - static_cast<double>(t);
  const double nn = static_cast<double>(n);
  const double mu = 0.5 * static_cast<double>(n1) * (nn + 1);
  const double var = static_cast<double>(n1 * n2) / 12.0 * ((nn + 1) - tie_sum / (nn * (nn - 1)));
  const double z = std::max(0.0, std::abs(res.w - mu) - 0.5) / std::sqrt(var);
  res.p = std::min(1.0, 2.0 * normal_sf(z));
  return res;
}

std::vector<bool> bonferroni(std::span<const double> p_values, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigurationError("alpha must be in (0, 1)");
  std::vector<bool> flags;
  const double threshold = alpha / static_cast<double>(p_values.size());
  for (double p : p_values) flags.push_back(p < threshold);
  return flags;
}

double ErrorSeries::mean() const {
  if (squared_errors.empty()) return 0.0;
  return std::accumulate(squared_errors.begin(), squared_errors.end(), 0.0) /
         static_cast<double>(squared_errors.size());
}

double ErrorSeries::median() const {
  if (squared_errors.empty()) return 0.0;
  return median_of(squared_errors);
}

const ErrorSeries& EvalResult::find(const std::string& method, const std::string& feature) const {
  for (const auto& s : series)
    if (s.method == method && s.feature == feature) return s;
  throw ValidationError("no squared errors for method '" + method + "' and feature '" + feature + "'");
}

void EvalResult::write_csv(std::ostream& out) const {
  out << "method,feature,subject_id,squared_error\n";
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.squared_errors.size(); ++i)
      out << s.method << ',' << s.feature << ',' << subject_ids[i] << ','
          << format_double(s.squared_errors[i]) << '\n';
}

void EvalResult::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_csv(out);
  if (!out) throw IoError("failed writing " + path.string());
}

nlohmann::json EvalResult::summary() const {
  nlohmann::json mse = nlohmann::json::array();
  for (const auto& s : series)
    mse.push_back({{"method", s.method}, {"feature", s.feature}, {"mean_mse", s.mean()},
                   {"median_se", s.median()}, {"n", s.squared_errors.size()}});
  nlohmann::json tests = nlohmann::json::array();
  for (const auto& c : comparisons)
    tests.push_back({{"feature", c.feature}, {"reference", c.reference}, {"method", c.method},
                     {"u", c.u}, {"p_value", c.p}, {"exact", c.exact}, {"significant", c.significant}});
  return {{"alpha", alpha}, {"mse", mse}, {"wilcoxon", tests}, {"notes", notes}};
}

EvalResult mse_table(const DenseMatrix& truth, const std::vector<std::string>& features,
                     const std::vector<MethodPredictions>& predictions,
                     std::vector<std::int64_t> subject_ids) {
  if (features.size() != truth.cols())
    throw DimensionMismatch("mse_table: " + std::to_string(features.size()) + " feature names for " +
                            std::to_string(truth.cols()) + " truth columns");
  EvalResult res;
  if (subject_ids.empty()) {
    subject_ids.resize(truth.rows());
    std::iota(subject_ids.begin(), subject_ids.end(), std::int64_t{1});
  }
  if (subject_ids.size() != truth.rows()) throw DimensionMismatch("mse_table: subject id count");
  res.subject_ids = std::move(subject_ids);
  for (const auto& p : predictions) {
    if (p.values.rows() != truth.rows() || p.values.cols() != truth.cols())
      throw DimensionMismatch("mse_table: predictions for '" + p.method + "' have shape " +
                              std::to_string(p.values.rows()) + "x" + std::to_string(p.values.cols()) +
                              ", truth is " + std::to_string(truth.rows()) + "x" +
                              std::to_string(truth.cols()));
    for (std::size_t c = 0; c < truth.cols(); ++c) {
      ErrorSeries s{p.method, features[c], {}};
      for (std::size_t r = 0; r < truth.rows(); ++r) s.squared_errors.push_back(std::pow(p.values(r, c) - truth(r, c), 2));
      res.series.push_back(std::move(s));
    }
  }
  return res;
}

void compare_methods(EvalResult& result, const std::string& reference,
                     const std::vector<std::string>& features, double alpha) {
  result.alpha = alpha;
  for (const auto& feature : features) {
    const ErrorSeries& ref = result.find(reference, feature);
    std::vector<Comparison> family;
    for (const auto& s : result.series) {
      if (s.feature != feature || s.method == reference) continue;
      const auto w = wilcoxon_rank_sum(ref.squared_errors, s.squared_errors);
      family.push_back({feature, reference, s.method, w.u, w.p, w.exact, false});
    }
    std::vector<double> ps;
    for (const auto& c : family) ps.push_back(c.p);
    const auto flags = bonferroni(ps, alpha);
    for (std::size_t i = 0; i < family.size(); ++i) {
      family[i].significant = flags[i];
      result.comparisons.push_back(family[i]);
    }
  }
}

}  // namespace hb::baselines
