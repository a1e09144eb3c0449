#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "../support/rank_oracles.hpp"
#include "heartbrain/baselines.hpp"
#include "heartbrain/errors.hpp"
#include "heartbrain/random.hpp"

namespace bl = hb::baselines;
using hb::DenseMatrix;

namespace {

DenseMatrix column(std::initializer_list<double> v) {
  DenseMatrix m(v.size(), 1);
  std::size_t r = 0;
  for (double x : v) m(r++, 0) = x;
  return m;
}

DenseMatrix random_matrix(hb::Rng& rng, std::size_t rows, std::size_t cols) {
  DenseMatrix m(rows, cols);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("mean and median imputation") {
  const auto train = column({60, 80, 100});
  const auto m = bl::impute_mean(train, 4);
  CHECK(m.rows() == 4);
  for (std::size_t r = 0; r < 4; ++r) CHECK(m(r, 0) == 80.0);
  CHECK(bl::impute_median(train, 2)(1, 0) == 80.0);

  const auto skewed = column({60, 80, 1000});
  CHECK(bl::impute_mean(skewed, 1)(0, 0) == doctest::Approx(380.0));
  CHECK(bl::impute_median(skewed, 1)(0, 0) == 80.0);
  CHECK(bl::impute_median(column({1, 4, 2, 3}), 1)(0, 0) == 2.5);

  CHECK_THROWS_AS(bl::impute_mean(DenseMatrix(0, 1), 3), hb::ValidationError);
  CHECK_THROWS_AS(bl::impute_median(column({1, NAN}), 3), hb::ValidationError);
}

TEST_CASE("knn imputation") {
  hb::Rng rng(3);
  const auto f = random_matrix(rng, 40, 3);
  const auto t = random_matrix(rng, 40, 2);

  SUBCASE("k = 1 on the training set reproduces the targets") {
    const auto out = bl::impute_knn(f, t, f, 1);
    for (std::size_t i = 0; i < t.data().size(); ++i) CHECK(out.data()[i] == t.data()[i]);
  }
  SUBCASE("k = n equals mean imputation exactly") {
    const auto test = random_matrix(rng, 7, 3);
    const auto out = bl::impute_knn(f, t, test, 40);
    const auto mean = bl::impute_mean(t, 7);
    for (std::size_t i = 0; i < out.data().size(); ++i) CHECK(out.data()[i] == mean.data()[i]);
  }
  SUBCASE("brute-force neighbour average") {
    const auto test = random_matrix(rng, 5, 3);
    const auto out = bl::impute_knn(f, t, test, 5);
    for (std::size_t r = 0; r < 5; ++r) {
      std::vector<std::pair<double, std::size_t>> d;
      for (std::size_t i = 0; i < 40; ++i) {
        double s = 0;
        for (std::size_t c = 0; c < 3; ++c) s += std::pow(f(i, c) - test(r, c), 2);
        d.emplace_back(s, i);
      }
      std::sort(d.begin(), d.end());
      for (std::size_t c = 0; c < 2; ++c) {
        double avg = 0;
        for (std::size_t k = 0; k < 5; ++k) avg += t(d[k].second, c) / 5;
        CHECK(out(r, c) == doctest::Approx(avg).epsilon(1e-12));
      }
    }
  }
  CHECK_THROWS_AS(bl::impute_knn(f, t, f, 0), hb::ConfigurationError);
  CHECK_THROWS_AS(bl::impute_knn(f, t, f, 41), hb::ConfigurationError);
  CHECK_THROWS_AS(bl::impute_knn(f, t, DenseMatrix(2, 2), 1), hb::DimensionMismatch);
}

TEST_CASE("cross-validated k selection") {
  hb::Rng rng(5);
  const std::size_t n = 400;

  SUBCASE("pure noise favours large k") {
    const auto f = random_matrix(rng, n, 2);
    const auto t = random_matrix(rng, n, 1);
    const auto sel = bl::select_k(f, t);
    CHECK(sel.k == 50);
    CHECK(sel.cv_mse.size() == bl::kDefaultKGrid.size());
  }
  SUBCASE("noiseless smooth map favours small k") {
    DenseMatrix f(n, 1), t(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
      f(i, 0) = static_cast<double>(i) / n;
      t(i, 0) = std::sin(6 * f(i, 0));
    }
    const auto sel = bl::select_k(f, t);
    CHECK(sel.k <= 2);
    CHECK(*std::min_element(sel.cv_mse.begin(), sel.cv_mse.end()) ==
          sel.cv_mse[std::find(sel.grid.begin(), sel.grid.end(), sel.k) - sel.grid.begin()]);
  }
  SUBCASE("ties go to the smaller k") {
    const auto f = random_matrix(rng, 60, 2);
    const DenseMatrix t(60, 1, 2.5);
    const auto sel = bl::select_k(f, t, {5, 2, 10});
    CHECK(sel.k == 2);
  }
  SUBCASE("deterministic for a seed") {
    const auto f = random_matrix(rng, 100, 2);
    const auto t = random_matrix(rng, 100, 1);
    CHECK(bl::select_k(f, t).cv_mse == bl::select_k(f, t).cv_mse);
  }
}

TEST_CASE("wilcoxon rank-sum") {
  const std::vector<double> a{1, 2, 3}, b{4, 5, 6};
  auto r = bl::wilcoxon_rank_sum(a, b);
  CHECK(r.exact);
  CHECK(r.w == 6.0);
  CHECK(r.u == 0.0);
  CHECK(r.p == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(bl::wilcoxon_rank_sum(b, a).p == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(bl::wilcoxon_rank_sum(a, a).p == 1.0);
  const std::vector<double> same{2, 2, 2};
  CHECK(bl::wilcoxon_rank_sum(same, same).p == 1.0);

  CHECK_THROWS_AS(bl::wilcoxon_rank_sum({}, b), hb::ValidationError);
  const std::vector<double> with_nan{1, NAN};
  CHECK_THROWS_AS(bl::wilcoxon_rank_sum(with_nan, b), hb::ValidationError);
}

TEST_CASE("wilcoxon exact p matches enumeration, ties included") {
  hb::Rng rng(11);
  int problems = 0;
  for (std::size_t n1 = 1; n1 <= 9; ++n1)
    for (std::size_t n2 = 1; n1 + n2 <= 10; ++n2)
      for (int rep = 0; rep < 6; ++rep) {
        std::vector<double> a(n1), b(n2);
        // Coarse values in half the repetitions to force ties.
        const bool coarse = rep % 2;
        for (double& v : a) v = coarse ? std::floor(3 * rng.uniform()) : rng.normal();
        for (double& v : b) v = coarse ? std::floor(3 * rng.uniform()) + 0.5 * rng.below(2) : rng.normal() + 0.7;
        const auto r = bl::wilcoxon_rank_sum(a, b, bl::WilcoxonMethod::Exact);
        CHECK(r.p == doctest::Approx(oracle::enumerated_p(a, b)).epsilon(1e-12));
        ++problems;
      }
  CHECK(problems > 200);
}

TEST_CASE("wilcoxon normal approximation and invariance") {
  hb::Rng rng(13);
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<double> a(25), b(25);
    for (double& v : a) v = rng.normal();
    for (double& v : b) v = rng.normal() + 0.3 * rep / 5.0;
    const auto ex = bl::wilcoxon_rank_sum(a, b, bl::WilcoxonMethod::Exact);
    const auto nm = bl::wilcoxon_rank_sum(a, b, bl::WilcoxonMethod::Normal);
    CHECK(ex.exact);
    CHECK_FALSE(nm.exact);
    CHECK(std::abs(ex.p - nm.p) < 0.01);
    CHECK_FALSE(bl::wilcoxon_rank_sum(a, b).exact);

    std::vector<double> ea(a), eb(b);
    for (double& v : ea) v = std::exp(v);
    for (double& v : eb) v = std::exp(v);
    CHECK(bl::wilcoxon_rank_sum(ea, eb, bl::WilcoxonMethod::Exact).p == ex.p);
    CHECK(bl::wilcoxon_rank_sum(ea, eb, bl::WilcoxonMethod::Normal).p == nm.p);
  }
}

TEST_CASE("bonferroni") {
  const std::vector<double> p{0.01, 0.02, 0.04};
  CHECK(bl::bonferroni(p, 0.05) == std::vector<bool>{true, false, false});
  CHECK(bl::bonferroni(p, 0.09) == std::vector<bool>{true, true, false});
  const std::vector<double> q{0.04, 0.01, 0.02};
  CHECK(bl::bonferroni(q, 0.05) == std::vector<bool>{false, true, false});
  const std::vector<double> edge{0.05};
  CHECK(bl::bonferroni(edge, 0.05) == std::vector<bool>{false});
  CHECK_THROWS_AS(bl::bonferroni(p, 0.0), hb::ConfigurationError);
}

TEST_CASE("squared-error tables and method comparison") {
  hb::Rng rng(17);
  const auto truth = random_matrix(rng, 500, 2);
  const std::vector<std::string> feats{"sv", "ef"};

  DenseMatrix shifted(truth);
  for (double& v : shifted.data()) v += 1.0;
  const auto train = random_matrix(rng, 2000, 2);
  DenseMatrix good(truth);
  for (double& v : good.data()) v += 0.1 * rng.normal();

  auto res = bl::mse_table(truth, feats,
                           {{"exact", truth}, {"shifted", shifted}, {"mean", bl::impute_mean(train, 500)},
                            {"good", good}});
  CHECK(res.find("exact", "sv").mean() == 0.0);
  CHECK(res.find("shifted", "ef").mean() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(res.find("shifted", "ef").median() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(res.find("mean", "sv").mean() == doctest::Approx(1.0).epsilon(0.15));
  CHECK(res.subject_ids.front() == 1);
  CHECK_THROWS_AS(res.find("knn", "sv"), hb::ValidationError);

  bl::compare_methods(res, "good", feats, 0.05);
  CHECK(res.comparisons.size() == 6);
  for (const auto& c : res.comparisons) {
    if (c.method == "mean" || c.method == "shifted") CHECK(c.significant);
    CHECK_FALSE(c.exact);
  }

  std::ostringstream csv;
  res.write_csv(csv);
  const std::string text = csv.str();
  CHECK(text.rfind("method,feature,subject_id,squared_error\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 1 + 4 * 2 * 500);
  const auto s = res.summary();
  CHECK(s["mse"].size() == 8);
  CHECK(s["wilcoxon"].size() == 6);

  CHECK_THROWS_AS(bl::mse_table(truth, {"sv"}, {}), hb::DimensionMismatch);
  CHECK_THROWS_AS(bl::mse_table(truth, feats, {{"bad", DenseMatrix(3, 2)}}), hb::DimensionMismatch);
}
