#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <chrono>
#include <cmath>
#include <sstream>

#include "heartbrain/errors.hpp"
#include "heartbrain/lumped_heart.hpp"

namespace heart = hb::heart;

namespace {

heart::CardiacTrace synthetic_trace(std::vector<double> volumes, std::vector<double> pressures) {
  heart::CardiacTrace t;
  for (std::size_t i = 0; i < volumes.size(); ++i) {
    t.times.push_back(0.1 * static_cast<double>(i));
    t.v_lv.push_back(volumes[i]);
    t.p_lv.push_back(pressures[i]);
    t.p_art.push_back(pressures[i]);
  }
  t.cycle_length = t.times.back();
  t.converged = true;
  t.cycles_run = 3;
  return t;
}

heart::CardiacMeasurements run(const heart::LumpedParams& p, double dt = 1e-3) {
  heart::SimulationSettings s;
  s.dt = dt;
  return heart::measure(heart::simulate(p, s));
}

}  // namespace

TEST_CASE("parameter validation") {
  heart::LumpedParams p;
  CHECK_NOTHROW(p.validate());
  p.c1 = 0.0;
  CHECK_THROWS_AS(p.validate(), hb::ValidationError);
  p = {};
  p.tau = 0.05;  // compliance 0.045 mL/mmHg
  CHECK_THROWS_AS(p.validate(), hb::ValidationError);
  p = {};
  p.tau = 6.0;  // compliance 5.45
  CHECK_THROWS_AS(p.validate(), hb::ValidationError);
  CHECK_THROWS_AS(heart::simulate(heart::LumpedParams{}, 30.0, 3, 1e-3), hb::ValidationError);
  CHECK_THROWS_AS(heart::simulate(heart::LumpedParams{}, 70.0, 2, 1e-3), hb::ValidationError);
}

TEST_CASE("activation is a normalized double cosine") {
  const double period = 60.0 / 70.0;
  CHECK(heart::activation(0.0, period) == 0.0);
  CHECK(heart::activation(heart::kContractionFraction * period, period) == doctest::Approx(1.0));
  CHECK(heart::activation(0.95 * period, period) == 0.0);
  for (int i = 0; i <= 100; ++i) {
    const double e = heart::activation(period * i / 100.0, period);
    CHECK(e >= 0.0);
    CHECK(e <= 1.0);
  }
}

TEST_CASE("default parameters give a periodic physiological cycle") {
  const auto start = std::chrono::steady_clock::now();
  const auto trace = heart::simulate(heart::LumpedParams::nominal());
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(seconds < 1.0);
  CHECK(trace.converged);
  CHECK(trace.cycles_run <= 30);
  CHECK(trace.periodicity_error <= 0.5);
  for (std::size_t i = 0; i < trace.size(); ++i) {
    CHECK(trace.v_lv[i] > 0.0);
    CHECK(std::isfinite(trace.p_lv[i]));
    CHECK(std::isfinite(trace.p_art[i]));
  }
  const auto m = heart::measure(trace);
  MESSAGE("EDV=" << m.edv << " ESV=" << m.esv << " EF=" << m.ef << " SBP=" << m.sbp
                 << " DBP=" << m.dbp << " MBP=" << m.mbp << " cycles=" << trace.cycles_run);
  CHECK(m.edv >= 100.0);
  CHECK(m.edv <= 180.0);
  CHECK(m.ef >= 0.5);
  CHECK(m.ef <= 0.7);
  CHECK(m.sbp >= 100.0);
  CHECK(m.sbp <= 140.0);
  CHECK(m.dbp >= 60.0);
  CHECK(m.dbp <= 90.0);
  CHECK(m.sv == m.edv - m.esv);
  CHECK(m.ef == m.sv / m.edv);
  CHECK(m.dbp < m.mbp);
  CHECK(m.mbp < m.sbp);
}

TEST_CASE("measure") {
  SUBCASE("mean pressure formula") {
    CHECK(heart::mean_blood_pressure(80.0, 120.0) == doctest::Approx(93.0 + 1.0 / 3.0));
    const auto m = heart::measure(synthetic_trace({100, 120, 110}, {80, 120, 100}));
    CHECK(m.mbp == doctest::Approx(80.0 + 40.0 / 3.0));
  }
  SUBCASE("stroke volume and ejection fraction") {
    const auto m = heart::measure(synthetic_trace({160, 60, 100}, {80, 120, 90}));
    CHECK(m.sv == 100.0);
    CHECK(m.ef == 0.625);
  }
  SUBCASE("constant volume is rejected") {
    CHECK_THROWS_AS(heart::measure(synthetic_trace({90, 90, 90}, {80, 120, 90})),
                    hb::ValidationError);
  }
  SUBCASE("unconverged trace is rejected") {
    auto t = synthetic_trace({160, 60, 100}, {80, 120, 90});
    t.converged = false;
    CHECK_THROWS_AS(heart::measure(t), hb::NotConverged);
  }
}

TEST_CASE("non-convergence within the cycle budget is flagged, not thrown") {
  heart::SimulationSettings s;
  s.max_cycles = 3;
  s.periodicity_tolerance = 1e-12;
  const auto trace = heart::simulate(heart::LumpedParams::nominal(), s);
  CHECK_FALSE(trace.converged);
  CHECK(trace.cycles_run == 3);
  CHECK_THROWS_AS(heart::measure(trace), hb::NotConverged);
}

TEST_CASE("pv loop is closed, counterclockwise and spans (esv, edv)") {
  for (double sigma0 : {2.5, 3.5, 4.5}) {
    heart::LumpedParams p;
    p.sigma0 = sigma0;
    const auto trace = heart::simulate(p);
    const auto loop = heart::pv_loop(trace);
    const auto m = heart::measure(trace);
    CHECK(loop.front() == loop.back());
    CHECK(loop.size() == trace.size() + 1);
    CHECK(heart::signed_area(loop) > 0.0);
    double vmin = loop.front().volume, vmax = vmin;
    for (const auto& pt : loop) {
      vmin = std::min(vmin, pt.volume);
      vmax = std::max(vmax, pt.volume);
    }
    CHECK(vmin == m.esv);
    CHECK(vmax == m.edv);
  }
}

TEST_CASE("shoelace area of a unit square") {
  const std::vector<heart::PvPoint> ccw{{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0, 0}};
  CHECK(heart::signed_area(ccw) == 1.0);
  const std::vector<heart::PvPoint> cw{{0, 0}, {0, 1}, {1, 1}, {1, 0}, {0, 0}};
  CHECK(heart::signed_area(cw) == -1.0);
}

TEST_CASE("monotone responses to 20 percent perturbations") {
  const heart::LumpedParams base;
  const auto m0 = run(base);

  auto perturbed = [&](double heart::LumpedParams::*field, double factor) {
    heart::LumpedParams p = base;
    p.*field *= factor;
    return run(p);
  };
  CHECK(perturbed(&heart::LumpedParams::rp, 1.2).mbp > m0.mbp);
  CHECK(perturbed(&heart::LumpedParams::sigma0, 1.2).ef > m0.ef);
  CHECK(perturbed(&heart::LumpedParams::r0, 1.2).edv > m0.edv);
  CHECK(perturbed(&heart::LumpedParams::c1, 1.2).edv < m0.edv);

  heart::LumpedParams doubled = base;
  doubled.rp *= 2.0;
  CHECK(run(doubled).mbp > m0.mbp);
}

TEST_CASE("halving dt changes every measurement by at most 0.5 percent") {
  for (double sigma0 : {2.5, 3.5}) {
    heart::LumpedParams p;
    p.sigma0 = sigma0;
    const auto a = run(p, 1e-3);
    const auto b = run(p, 5e-4);
    const std::array<double, 7> va{a.sv, a.edv, a.esv, a.ef, a.sbp, a.dbp, a.mbp};
    const std::array<double, 7> vb{b.sv, b.edv, b.esv, b.ef, b.sbp, b.dbp, b.mbp};
    for (std::size_t i = 0; i < va.size(); ++i) {
      CAPTURE(i);
      CHECK(std::abs(va[i] - vb[i]) <= 0.005 * std::abs(vb[i]));
    }
  }
}

TEST_CASE("arterial pressure decays with time constant tau while valves are closed") {
  for (double tau : {1.2, 1.6, 2.4}) {
    heart::LumpedParams p;
    p.tau = tau;
    const auto trace = heart::simulate(p);
    // Late diastole: activation is over and the aortic valve is closed.
    const double start = (heart::kContractionFraction + heart::kRelaxationFraction + 0.05) *
                         trace.cycle_length;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    const double t0 = trace.times.front();
    for (std::size_t i = 0; i < trace.size(); ++i) {
      const double t = trace.times[i] - t0;
      if (t < start) continue;
      REQUIRE(trace.p_lv[i] < trace.p_art[i]);
      const double y = std::log(trace.p_art[i]);
      sx += t;
      sy += y;
      sxx += t * t;
      sxy += t * y;
      ++n;
    }
    REQUIRE(n > 10);
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const double fitted = -1.0 / slope;
    CAPTURE(tau);
    CHECK(std::abs(fitted - tau) <= 0.05 * tau);
  }
}

TEST_CASE("trace csv export") {
  const auto trace = heart::simulate(heart::LumpedParams::nominal());
  std::ostringstream out;
  heart::write_trace_csv(trace, out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "t,v_lv,p_lv,p_art");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == trace.size());
}
