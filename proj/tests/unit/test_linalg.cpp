#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "heartbrain/errors.hpp"
#include "heartbrain/linalg.hpp"
#include "heartbrain/random.hpp"

using hb::DenseMatrix;

namespace {

DenseMatrix random_spd(std::size_t n, hb::Rng& rng) {
  DenseMatrix m(n, n);
  for (double& v : m.data()) v = rng.uniform(-1, 1);
  DenseMatrix a = matmul(m.transpose(), m);
  for (std::size_t i = 0; i < n; ++i) a(i, i) += static_cast<double>(n);
  return a;
}

}  // namespace

TEST_CASE("cholesky of the identity is the identity") {
  CHECK(hb::cholesky_factor(DenseMatrix::identity(3)) == DenseMatrix::identity(3));
}

TEST_CASE("cholesky of a hand-checkable 2x2") {
  const DenseMatrix l = hb::cholesky_factor({{4, 2}, {2, 3}});
  CHECK(l(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(l(0, 1) == 0.0);
  CHECK(l(1, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(l(1, 1) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
}

TEST_CASE("indefinite matrix reports the failing pivot") {
  try {
    hb::cholesky_factor({{1, 2}, {2, 1}});
    FAIL("expected NotPositiveDefinite");
  } catch (const hb::NotPositiveDefinite& e) {
    CHECK(e.pivot() == 1);
  }
}

TEST_CASE("asymmetric input is rejected") {
  CHECK_THROWS_AS(hb::cholesky_factor({{2, 1}, {0, 2}}), hb::ValidationError);
}

TEST_CASE("cholesky reconstructs random SPD matrices") {
  hb::Rng rng(7);
  for (std::size_t n : {1u, 2u, 5u, 12u, 40u}) {
    const DenseMatrix a = random_spd(n, rng);
    const DenseMatrix l = hb::cholesky_factor(a);
    const DenseMatrix r = matmul(l, l.transpose());
    DenseMatrix diff = r;
    for (std::size_t i = 0; i < diff.data().size(); ++i) diff.data()[i] -= a.data()[i];
    CHECK(hb::frobenius_norm(diff) <= 1e-8 * hb::frobenius_norm(a));
  }
}

TEST_CASE("cholesky_solve") {
  SUBCASE("identity factor") {
    const auto x = hb::cholesky_solve(DenseMatrix::identity(2), std::vector<double>{1, 2});
    CHECK(x == std::vector<double>{1, 2});
  }
  SUBCASE("matches the closed-form 2x2 inverse") {
    // A⁻¹ = [[3, -2], [-2, 4]] / 8 for A = [[4, 2], [2, 3]].
    const std::vector<double> expected{(3 * 2 - 2 * 3) / 8.0, (-2 * 2 + 4 * 3) / 8.0};
    const auto x = hb::cholesky_solve(hb::cholesky_factor({{4, 2}, {2, 3}}),
                                      std::vector<double>{2, 3});
    CHECK(x[0] == doctest::Approx(expected[0]).epsilon(1e-12));
    CHECK(x[1] == doctest::Approx(expected[1]).epsilon(1e-12));
  }
  SUBCASE("length mismatch") {
    CHECK_THROWS_AS(hb::cholesky_solve(DenseMatrix::identity(2), std::vector<double>{1, 2, 3}),
                    hb::DimensionMismatch);
  }
  SUBCASE("small residual on random systems") {
    hb::Rng rng(3);
    const DenseMatrix a = random_spd(30, rng);
    std::vector<double> b(30);
    for (double& v : b) v = rng.normal();
    const auto x = hb::cholesky_solve(hb::cholesky_factor(a), b);
    double res = 0.0, bn = 0.0;
    for (std::size_t i = 0; i < 30; ++i) {
      const double r = hb::dot_product(a.row(i), x) - b[i];
      res += r * r;
      bn += b[i] * b[i];
    }
    CHECK(std::sqrt(res / bn) <= 1e-8);
  }
}

TEST_CASE("cholesky inverse and log determinant") {
  hb::Rng rng(11);
  const DenseMatrix a = random_spd(9, rng);
  const DenseMatrix l = hb::cholesky_factor(a);
  const DenseMatrix prod = matmul(a, hb::cholesky_inverse(l));
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t j = 0; j < 9; ++j) CHECK(prod(i, j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-10).scale(1.0));

  const DenseMatrix two = {{4, 2}, {2, 3}};
  CHECK(hb::cholesky_log_det(hb::cholesky_factor(two)) == doctest::Approx(std::log(8.0)));
}
