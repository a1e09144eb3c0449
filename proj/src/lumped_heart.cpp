#include "heartbrain/lumped_heart.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <string>

#include "heartbrain/errors.hpp"
#include "heartbrain/format.hpp"
#include "heartbrain/ode.hpp"

namespace hb::heart {

double LumpedParams::unloaded_volume() const {
  return kUnloadedVolumeFactor * 4.0 / 3.0 * std::numbers::pi * r0 * r0 * r0;
}

void LumpedParams::validate() const {
  const auto values = as_array();
  static constexpr std::array<const char*, 5> names{"sigma0", "r0", "c1", "rp", "tau"};
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(values[i] > 0.0) || !std::isfinite(values[i]))
      throw ValidationError(std::string("lumped parameter ") + names[i] +
                            " must be finite and positive, got " +
                            std::to_string(values[i]));
  }
  const double c = compliance();
  if (!(c > 0.1 && c < 5.0))
    throw ValidationError("implied arterial compliance tau/rp = " +
                          std::to_string(c) + " mL/mmHg outside (0.1, 5)");
}

double activation(double t_in_cycle, double cycle_length) {
  const double tc = kContractionFraction * cycle_length;
  const double tr = kRelaxationFraction * cycle_length;
  if (t_in_cycle < 0.0) return 0.0;
  if (t_in_cycle < tc) return 0.5 * (1.0 - std::cos(std::numbers::pi * t_in_cycle / tc));
  if (t_in_cycle < tc + tr)
    return 0.5 * (1.0 + std::cos(std::numbers::pi * (t_in_cycle - tc) / tr));
  return 0.0;
}

double ventricular_pressure(const LumpedParams& params, double activation_level,
                            double volume) {
  const double stretch = volume - params.unloaded_volume();
  return params.sigma0 * activation_level * stretch +
         params.c1 * std::expm1(kPassiveExponent * stretch);
}

double mean_blood_pressure(double dbp, double sbp) {
  return dbp + (sbp - dbp) / 3.0;
}

CardiacTrace simulate(const LumpedParams& params, double heart_rate,
                      int n_cycles, double dt) {
  SimulationSettings settings;
  settings.heart_rate = heart_rate;
  settings.min_cycles = n_cycles;
  settings.dt = dt;
  return simulate(params, settings);
}

CardiacTrace simulate(const LumpedParams& params,
                      const SimulationSettings& settings) {
  params.validate();
  if (!(settings.heart_rate >= 40.0 && settings.heart_rate <= 120.0))
    throw ValidationError("heart rate must lie in [40, 120] beats/min");
  if (settings.min_cycles < 3) throw ValidationError("at least 3 cycles are required");
  if (!(settings.dt > 0.0)) throw ValidationError("dt must be positive");

  const double period = 60.0 / settings.heart_rate;
  const double compliance = params.compliance();

  auto deriv = [&](double t, std::span<const double> x, std::span<double> dx) {
    const double p = ventricular_pressure(params, activation(t, period), x[0]);
    const double q_mitral = std::max(0.0, kVenousPressure - p) / kMitralResistance;
    const double q_aortic = std::max(0.0, p - x[1]) / kAorticResistance;
    dx[0] = q_mitral - q_aortic;
    dx[1] = (q_aortic - x[1] / params.rp) / compliance;
  };

  // Start near the filled, unloaded operating point.
  std::array<double, 2> state{params.unloaded_volume() + 100.0, 80.0};
  Trajectory previous;
  Trajectory current;
  CardiacTrace trace;
  trace.cycle_length = period;
  const int max_cycles = std::max(settings.max_cycles, settings.min_cycles);
  int cycle = 0;
  for (; cycle < max_cycles; ++cycle) {
    // Each cycle runs on local time [0, T] so every cycle shares one step grid.
    try {
      current = rk4_integrate(deriv, state, 0.0, period, settings.dt);
    } catch (const SimulationDiverged& e) {
      throw SimulationDiverged(cycle * period + e.time());
    }
    for (double v : current.flat)
      if (!std::isfinite(v)) throw SimulationDiverged((cycle + 1) * period);
    const auto end = current.back();
    state = {end[0], end[1]};
    if (state[0] <= 0.0) throw SimulationDiverged((cycle + 1) * period);

    double change = INFINITY;
    if (previous.size() == current.size()) {
      change = 0.0;
      for (std::size_t i = 0; i < current.size(); ++i)
        change = std::max(change, std::abs(current.state(i)[0] - previous.state(i)[0]));
    }
    trace.waveform_change = change;
    std::swap(previous, current);
    if (cycle + 1 >= settings.min_cycles && change <= settings.periodicity_tolerance) {
      trace.converged = true;
      ++cycle;
      break;
    }
  }
  if (!trace.converged) cycle = max_cycles;
  trace.cycles_run = cycle;

  const Trajectory& last = previous;
  const double offset = (cycle - 1) * period;
  trace.times.resize(last.size());
  trace.v_lv.resize(last.size());
  trace.p_lv.resize(last.size());
  trace.p_art.resize(last.size());
  for (std::size_t i = 0; i < last.size(); ++i) {
    const double t = last.times[i];
    const auto x = last.state(i);
    trace.times[i] = offset + t;
    trace.v_lv[i] = x[0];
    trace.p_art[i] = x[1];
    trace.p_lv[i] = ventricular_pressure(params, activation(t, period), x[0]);
  }
  trace.periodicity_error = std::abs(trace.v_lv.front() - trace.v_lv.back());
  for (double v : trace.v_lv)
    if (!(v > 0.0)) throw SimulationDiverged(trace.times.back());
  return trace;
}

namespace {

void require_valid(const CardiacTrace& trace) {
  if (trace.size() < 3) throw ValidationError("trace has fewer than 3 samples");
  if (!trace.converged)
    throw NotConverged("trace did not reach a periodic steady state after " +
                       std::to_string(trace.cycles_run) + " cycles");
}

}  // namespace

CardiacMeasurements measure(const CardiacTrace& trace) {
  require_valid(trace);
  CardiacMeasurements m;
  const auto [vmin, vmax] = std::minmax_element(trace.v_lv.begin(), trace.v_lv.end());
  const auto [pmin, pmax] = std::minmax_element(trace.p_art.begin(), trace.p_art.end());
  m.edv = *vmax;
  m.esv = *vmin;
  if (!(m.edv > m.esv))
    throw ValidationError("degenerate trace: constant volume, ejection fraction undefined");
  m.sv = m.edv - m.esv;
  m.ef = m.sv / m.edv;
  m.sbp = *pmax;
  m.dbp = *pmin;
  m.mbp = mean_blood_pressure(m.dbp, m.sbp);
  return m;
}

std::vector<PvPoint> pv_loop(const CardiacTrace& trace) {
  require_valid(trace);
  std::vector<PvPoint> loop;
  loop.reserve(trace.size() + 1);
  for (std::size_t i = 0; i < trace.size(); ++i) loop.push_back({trace.v_lv[i], trace.p_lv[i]});
  loop.push_back(loop.front());
  return loop;
}

double signed_area(const std::vector<PvPoint>& polygon) {
  double twice = 0.0;
  for (std::size_t i = 0; i + 1 < polygon.size(); ++i)
    twice += polygon[i].volume * polygon[i + 1].pressure -
             polygon[i + 1].volume * polygon[i].pressure;
  return 0.5 * twice;
}

void write_trace_csv(const CardiacTrace& trace, std::ostream& out) {
  out << "t,v_lv,p_lv,p_art\n";
  for (std::size_t i = 0; i < trace.size(); ++i)
    out << format_double(trace.times[i]) << ',' << format_double(trace.v_lv[i]) << ','
        << format_double(trace.p_lv[i]) << ',' << format_double(trace.p_art[i]) << '\n';
}

}  // namespace hb::heart
