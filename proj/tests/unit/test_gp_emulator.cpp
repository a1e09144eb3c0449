#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "../support/gp_oracles.hpp"
#include "heartbrain/errors.hpp"
#include "heartbrain/gp_emulator.hpp"
#include "heartbrain/random.hpp"

using hb::DenseMatrix;
namespace gp = hb::gp;
namespace ad = hb::ad;

using namespace oracle;

TEST_CASE("kernel") {
  gp::KernelHyper h;
  h.alpha = {1.0, 2.0};
  h.noise = {0.1, 0.1};
  h.beta = DenseMatrix{{1.0}, {0.5}};
  const std::vector<double> x0{0.0}, x1{1.0};
  CHECK(gp::kernel(x0, x1, 0, h) == doctest::Approx(std::exp(-0.5)).epsilon(1e-15));
  CHECK(gp::kernel(x0, x1, 0, h) == doctest::Approx(0.6065).epsilon(1e-4));
  CHECK(gp::kernel(x1, x1, 1, h) == 4.0);
  CHECK(gp::kernel(x0, x1, 1, h) == gp::kernel(x1, x0, 1, h));
  double prev = 4.0;
  for (double dist = 0.5; dist < 20; dist *= 2) {
    const std::vector<double> far{dist};
    const double k = gp::kernel(x0, far, 1, h);
    CHECK(k < prev);
    prev = k;
  }
  CHECK(prev < 1e-100);
  const std::vector<double> wrong{0.0, 1.0};
  CHECK_THROWS_AS(gp::kernel(x0, wrong, 0, h), hb::DimensionMismatch);
}

TEST_CASE("gram matrices are symmetric positive semidefinite") {
  hb::Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const auto p = random_problem(rng, 12, 3);
    auto hyper = as_kernel_hyper(p.h);
    hyper.noise = {0.0 + 1e-300};
    const DenseMatrix c = gp::covariance(p.matrix(), 0, hyper);
    for (std::size_t a = 0; a < 12; ++a)
      for (std::size_t b = 0; b < 12; ++b) CHECK(c(a, b) == c(b, a));
    // Min eigenvalue via quadratic forms on random directions and the
    // Cholesky of K + 1e-8 I succeeding.
    for (int k = 0; k < 50; ++k) {
      std::vector<double> v(12);
      double norm = 0.0;
      for (double& e : v) {
        e = rng.normal();
        norm += e * e;
      }
      double q = 0.0;
      for (std::size_t a = 0; a < 12; ++a)
        for (std::size_t b = 0; b < 12; ++b) q += v[a] * (c(a, b) - (a == b ? gp::kJitter : 0.0)) * v[b];
      CHECK(q / norm >= -1e-8);
    }
    CHECK_NOTHROW(hb::cholesky_factor(c));
  }
}

TEST_CASE("log marginal likelihood") {
  SUBCASE("single standard normal point") {
    Problem p{{{0.0}}, {0.0}, {1.0, {1.0}, gp::kNoiseFloor}};
    CHECK(gp::log_marginal_likelihood(p.matrix(), p.y, p.h) ==
          doctest::Approx(-0.5 * kLog2Pi).epsilon(1e-7));
  }
  SUBCASE("matches the dense-inverse oracle") {
    hb::Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
      const auto p = random_problem(rng, 5, 2);
      const double got = gp::log_marginal_likelihood(p.matrix(), p.y, p.h);
      CHECK(std::abs(got - oracle_lml(p)) <= 1e-8);
      CHECK(gp::log_marginal_likelihood_gradient(p.matrix(), p.y, p.h, false).value ==
            doctest::Approx(got).epsilon(1e-14));
    }
  }
  SUBCASE("analytic gradient matches central differences") {
    hb::Rng rng(23);
    for (int trial = 0; trial < 10; ++trial) {
      auto p = random_problem(rng, 6, 3);
      const auto g = gp::log_marginal_likelihood_gradient(p.matrix(), p.y, p.h, true);
      auto fd = [&](auto&& bump) {
        const double h = 1e-6;
        Problem plus = p, minus = p;
        bump(plus, h);
        bump(minus, -h);
        return (gp::log_marginal_likelihood(plus.matrix(), plus.y, plus.h) -
                gp::log_marginal_likelihood(minus.matrix(), minus.y, minus.h)) /
               (2 * h);
      };
      auto close = [](double a, double b) { return std::abs(a - b) <= 1e-4 * std::max(1.0, std::abs(b)); };
      CHECK(close(g.d_alpha, fd([](Problem& q, double h) { q.h.alpha += h; })));
      CHECK(close(g.d_noise, fd([](Problem& q, double h) { q.h.noise += h; })));
      for (std::size_t i = 0; i < 3; ++i)
        CHECK(close(g.d_beta[i], fd([i](Problem& q, double h) { q.h.beta[i] += h; })));
      for (std::size_t a = 0; a < 6; ++a)
        for (std::size_t i = 0; i < 3; ++i)
          CHECK(close(g.d_inputs[a * 3 + i], fd([a, i](Problem& q, double h) { q.x[a][i] += h; })));
    }
  }
  SUBCASE("tape node carries the same gradient") {
    hb::Rng rng(29);
    const auto p = random_problem(rng, 5, 2);
    ad::Tape tape;
    std::vector<ad::Var> xs;
    for (const auto& row : p.x)
      for (double v : row) xs.push_back(tape.input(v));
    const ad::Var alpha = tape.input(p.h.alpha);
    std::vector<ad::Var> beta{tape.input(p.h.beta[0]), tape.input(p.h.beta[1])};
    const ad::Var noise = tape.input(p.h.noise);
    // Route through a nonlinearity so the chain rule is exercised.
    const ad::Var out = ad::exp(0.1 * gp::log_marginal_likelihood(xs, 2, p.y, alpha, beta, noise));
    const auto adj = tape.adjoints(out);
    const auto g = gp::log_marginal_likelihood_gradient(p.matrix(), p.y, p.h, true);
    const double scale = 0.1 * out.value();
    CHECK(adj[alpha.index()] == doctest::Approx(scale * g.d_alpha).epsilon(1e-12));
    CHECK(adj[noise.index()] == doctest::Approx(scale * g.d_noise).epsilon(1e-12));
    CHECK(adj[beta[1].index()] == doctest::Approx(scale * g.d_beta[1]).epsilon(1e-12));
    CHECK(adj[xs[7].index()] == doctest::Approx(scale * g.d_inputs[7]).epsilon(1e-12));
    CHECK(tape.kind(out.index() - 1) == ad::OpKind::Mul);
  }
  SUBCASE("singular covariance is reported") {
    Problem p{{{0.0}, {0.0}}, {1.0, 1.0}, {1.0, {1.0}, 0.0}};
    // alpha^2 = 1e16 drowns the jitter.
    p.h.alpha = 1e8;
    CHECK_THROWS_AS(gp::log_marginal_likelihood(p.matrix(), p.y, p.h), hb::NotPositiveDefinite);
  }
}

TEST_CASE("predict") {
  SUBCASE("matches the dense-inverse oracle") {
    hb::Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
      const auto p = random_problem(rng, 5, 2);
      const auto model = gp::condition(p.matrix(), {p.y}, as_kernel_hyper(p.h));
      const auto o = invert(oracle_cov(p.x, p.h));
      const std::vector<double> xs{rng.normal(), rng.normal()};
      std::vector<double> ks(5);
      for (std::size_t a = 0; a < 5; ++a) ks[a] = oracle_kernel(p.x[a], xs, p.h);
      double mean = 0.0, explained = 0.0;
      for (std::size_t a = 0; a < 5; ++a)
        for (std::size_t b = 0; b < 5; ++b) {
          mean += ks[a] * o.inv[a][b] * p.y[b];
          explained += ks[a] * o.inv[a][b] * ks[b];
        }
      const double var = p.h.alpha * p.h.alpha - explained + p.h.noise * p.h.noise;
      const auto pred = gp::predict(model, xs);
      CHECK(std::abs(pred.mean[0] - mean) <= 1e-8);
      CHECK(std::abs(pred.variance[0] - var) <= 1e-8);
    }
  }
  SUBCASE("interpolates at the noise floor") {
    // Residual is (noise^2 + jitter) A^-1 y, so keep the design well conditioned.
    hb::Rng rng(37);
    auto p = random_problem(rng, 8, 2);
    for (std::size_t a = 0; a < 8; ++a) p.x[a] = {static_cast<double>(a % 4), static_cast<double>(a / 4)};
    p.h.beta = {0.8, 0.8};
    p.h.noise = gp::kNoiseFloor;
    const auto model = gp::condition(p.matrix(), {p.y}, as_kernel_hyper(p.h));
    for (std::size_t a = 0; a < 8; ++a) CHECK(std::abs(gp::predict(model, p.x[a]).mean[0] - p.y[a]) <= 1e-6);
  }
  SUBCASE("reverts to the prior far away") {
    hb::Rng rng(41);
    const auto p = random_problem(rng, 8, 2);
    const auto model = gp::condition(p.matrix(), {p.y}, as_kernel_hyper(p.h));
    const auto pred = gp::predict(model, std::vector<double>{1e3, -1e3});
    CHECK(std::abs(pred.mean[0]) <= 1e-12);
    CHECK(pred.variance[0] == doctest::Approx(p.h.alpha * p.h.alpha + p.h.noise * p.h.noise));
  }
  SUBCASE("variance bounds and monotonicity in the training set") {
    hb::Rng rng(43);
    for (int trial = 0; trial < 5; ++trial) {
      const auto p = random_problem(rng, 20, 2);
      const double prior = p.h.alpha * p.h.alpha + p.h.noise * p.h.noise;
      std::vector<std::vector<double>> tests;
      for (int t = 0; t < 10; ++t) tests.push_back({rng.normal(), rng.normal()});
      std::vector<double> prev(tests.size(), prior);
      for (std::size_t n = 1; n <= 20; ++n) {
        Problem q = p;
        q.x.resize(n);
        q.y.resize(n);
        const auto model = gp::condition(q.matrix(), {q.y}, as_kernel_hyper(q.h));
        for (std::size_t t = 0; t < tests.size(); ++t) {
          const double v = gp::predict(model, tests[t]).variance[0];
          CHECK(v <= prior + 1e-8);
          CHECK(v >= p.h.noise * p.h.noise - 1e-10);
          CHECK(v <= prev[t] + 1e-10);
          prev[t] = v;
        }
      }
    }
  }
  SUBCASE("batch and single-point predictions agree") {
    hb::Rng rng(47);
    const auto p = random_problem(rng, 30, 3);
    const auto model = gp::condition(p.matrix(), {p.y, p.y}, [&] {
      auto h = as_kernel_hyper(p.h);
      h.alpha.push_back(1.3);
      h.noise.push_back(0.2);
      DenseMatrix b(2, 3);
      for (std::size_t i = 0; i < 3; ++i) b(0, i) = p.h.beta[i], b(1, i) = 0.7;
      h.beta = b;
      return h;
    }());
    DenseMatrix xs(300, 3);
    for (double& v : xs.data()) v = rng.normal();
    const auto batch = gp::predict(model, xs);
    for (std::size_t r = 0; r < 300; r += 37) {
      const auto one = gp::predict(model, xs.row(r));
      for (std::size_t j = 0; j < 2; ++j) {
        CHECK(batch.mean[j][r] == doctest::Approx(one.mean[j]).epsilon(1e-12));
        CHECK(batch.variance[j][r] == doctest::Approx(one.variance[j]).epsilon(1e-12));
      }
    }
  }
  SUBCASE("unfitted model and wrong width") {
    gp::GPModel empty;
    CHECK_THROWS_AS(gp::predict(empty, std::vector<double>{0.0}), hb::ValidationError);
    hb::Rng rng(1);
    const auto p = random_problem(rng, 4, 2);
    const auto model = gp::condition(p.matrix(), {p.y}, as_kernel_hyper(p.h));
    CHECK_THROWS_AS(gp::predict(model, std::vector<double>{0.0}), hb::DimensionMismatch);
  }
}

TEST_CASE("fit") {
  SUBCASE("recovers sin(3x) from noisy samples") {
    hb::Rng rng(53);
    DenseMatrix x(200, 1);
    std::vector<double> y(200);
    for (std::size_t i = 0; i < 200; ++i) {
      x(i, 0) = rng.uniform(-2.0, 2.0);
      y[i] = std::sin(3 * x(i, 0)) + 0.05 * rng.normal();
    }
    gp::FitTrace trace;
    const auto init = gp::initial_hyper(x, {y});
    const auto model = gp::fit(x, {y}, init, {200, 0.05}, &trace);
    double se = 0.0;
    for (int g = 0; g <= 100; ++g) {
      const double xs = -1.9 + 3.8 * g / 100.0;
      const double e = gp::predict(model, std::vector<double>{xs}).mean[0] - std::sin(3 * xs);
      se += e * e;
    }
    const double rmse = std::sqrt(se / 101);
    MESSAGE("rmse " << rmse << " noise " << model.hyper.noise[0] << " beta " << model.hyper.beta(0, 0));
    CHECK(rmse <= 0.1);
    const auto& curve = trace.objective[0];
    for (std::size_t i = 1; i < curve.size(); ++i) CHECK(curve[i] >= curve[i - 1]);
    CHECK(curve.back() > curve.front());
  }
  SUBCASE("ARD pushes an irrelevant predictor to long length scales") {
    hb::Rng rng(59);
    DenseMatrix x(150, 2);
    std::vector<double> y(150);
    for (std::size_t i = 0; i < 150; ++i) {
      x(i, 0) = rng.uniform(-2.0, 2.0);
      x(i, 1) = rng.uniform(-2.0, 2.0);
      y[i] = std::sin(2 * x(i, 0)) + 0.05 * rng.normal();
    }
    const auto model = gp::fit(x, {y}, gp::initial_hyper(x, {y}), {300, 0.05});
    MESSAGE("beta relevant " << model.hyper.beta(0, 0) << " irrelevant " << model.hyper.beta(0, 1));
    CHECK(model.hyper.beta(0, 1) >= 5 * model.hyper.beta(0, 0));
  }
  SUBCASE("zero steps returns the initial hyperparameters") {
    hb::Rng rng(61);
    const auto p = random_problem(rng, 10, 2);
    const auto init = as_kernel_hyper(p.h);
    const auto model = gp::fit(p.matrix(), {p.y}, init, {0, 0.1});
    CHECK(model.hyper.alpha == init.alpha);
    CHECK(model.hyper.beta == init.beta);
    CHECK(model.hyper.noise == init.noise);
  }
  SUBCASE("subset fitting conditions on every row") {
    hb::Rng rng(67);
    const auto p = random_problem(rng, 40, 2);
    const auto model = gp::fit(p.matrix(), {p.y}, as_kernel_hyper(p.h), {5, 0.05, 10});
    CHECK(model.ref_inputs.rows() == 40);
  }
  SUBCASE("initialization is scale aware") {
    DenseMatrix x{{0.0}, {1.0}, {3.0}};
    const std::vector<double> y{1.0, 3.0, 5.0};
    const auto h = gp::initial_hyper(x, {y});
    CHECK(h.alpha[0] == doctest::Approx(std::sqrt(8.0 / 3.0)));
    CHECK(h.noise[0] == doctest::Approx(0.1 * std::sqrt(8.0 / 3.0)));
    CHECK(h.beta(0, 0) == 2.0);  // pairwise {1, 3, 2}
  }
}

TEST_CASE("model cache and checkpoint") {
  hb::Rng rng(71);
  const auto p = random_problem(rng, 25, 3);
  auto model = gp::condition(p.matrix(), {p.y}, as_kernel_hyper(p.h));
  const auto before = model.chol_cache[0];
  model.rebuild_cache();
  for (std::size_t e = 0; e < before.data().size(); ++e)
    CHECK(std::abs(before.data()[e] - model.chol_cache[0].data()[e]) <= 1e-10);

  const auto text = model.to_json().dump();
  const auto back = gp::GPModel::from_json(nlohmann::json::parse(text));
  CHECK(back.ref_inputs == model.ref_inputs);
  CHECK(back.ref_targets == model.ref_targets);
  CHECK(back.hyper.alpha == model.hyper.alpha);
  CHECK(back.hyper.beta == model.hyper.beta);
  CHECK(back.chol_cache[0] == model.chol_cache[0]);

  auto raw = model.hyper.raw(0);
  auto h2 = model.hyper;
  h2.set_raw(0, raw);
  CHECK(h2.alpha[0] == doctest::Approx(model.hyper.alpha[0]).epsilon(1e-14));
  CHECK(h2.noise[0] == doctest::Approx(model.hyper.noise[0]).epsilon(1e-14));
}
