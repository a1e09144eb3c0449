#pragma once

// Single-ventricle lumped (0D) cardiovascular model.
//
// The ventricle follows a time-varying elastance law with an exponential
// passive curve, coupled to a two-element Windkessel through diode valves:
//
//   p_lv  = (sigma0·e(t))·(V − V0) + C1·(exp(0.02·(V − V0)) − 1)
//   V0    = 0.5 · (4/3)·π·R0³
//   dV/dt = q_mitral − q_aortic
//   dPa/dt = (q_aortic − Pa/Rp) / C,  C = tau / Rp
//
// with q_mitral = max(0, P_venous − p_lv)/R_mitral and
// q_aortic = max(0, p_lv − Pa)/R_aortic.

#include <array>
#include <iosfwd>
#include <vector>

namespace hb::heart {

inline constexpr double kVenousPressure = 10.0;     // mmHg
inline constexpr double kAorticResistance = 0.05;   // mmHg·s/mL
inline constexpr double kMitralResistance = 0.01;   // mmHg·s/mL
inline constexpr double kPassiveExponent = 0.02;    // 1/mL
inline constexpr double kUnloadedVolumeFactor = 0.5;
inline constexpr double kContractionFraction = 0.35;  // of the cycle
inline constexpr double kRelaxationFraction = 0.175;  // of the cycle

struct LumpedParams {
  double sigma0 = 3.5;  // fiber contractility, peak elastance (mmHg/mL)
  double r0 = 2.4;      // reference ventricular radius (cm)
  double c1 = 1.2;      // fiber stiffness, passive curve scale (mmHg)
  double rp = 1.1;      // peripheral resistance (mmHg·s/mL)
  double tau = 1.6;     // arterial time constant (s)

  static LumpedParams nominal() { return {}; }
  static LumpedParams from_array(const std::array<double, 5>& v) {
    return {v[0], v[1], v[2], v[3], v[4]};
  }
  std::array<double, 5> as_array() const { return {sigma0, r0, c1, rp, tau}; }

  double compliance() const { return tau / rp; }
  double unloaded_volume() const;

  // Throws ValidationError when a parameter is non-positive or the implied
  // compliance leaves (0.1, 5) mL/mmHg.
  void validate() const;
};

struct SimulationSettings {
  double heart_rate = 70.0;  // beats/min, within [40, 120]
  int min_cycles = 3;
  int max_cycles = 30;
  double dt = 1e-3;  // s
  // Cycle-to-cycle tolerance on the volume waveform (mL).
  double periodicity_tolerance = 0.05;
};

struct CardiacTrace {
  std::vector<double> times;  // s, final cycle
  std::vector<double> v_lv;   // mL
  std::vector<double> p_lv;   // mmHg
  std::vector<double> p_art;  // mmHg
  double cycle_length = 0.0;  // s
  int cycles_run = 0;
  bool converged = false;
  // |v_lv(cycle start) − v_lv(cycle end)| of the returned cycle.
  double periodicity_error = 0.0;
  // Largest volume difference against the previous cycle at matching times.
  double waveform_change = 0.0;

  std::size_t size() const { return times.size(); }
};

struct CardiacMeasurements {
  double sv = 0.0;
  double edv = 0.0;
  double esv = 0.0;
  double ef = 0.0;
  double sbp = 0.0;
  double dbp = 0.0;
  double mbp = 0.0;
};

struct PvPoint {
  double volume;
  double pressure;
  bool operator==(const PvPoint&) const = default;
};

// Normalized double-cosine activation e(t) ∈ [0, 1] at time `t` into a cycle.
double activation(double t_in_cycle, double cycle_length);

double ventricular_pressure(const LumpedParams& params, double activation_level,
                            double volume);

double mean_blood_pressure(double dbp, double sbp);

// Integrates until the volume waveform is periodic (or max_cycles) and returns
// the final cycle. A trace with converged == false is returned rather than
// thrown; measure() rejects it.
CardiacTrace simulate(const LumpedParams& params,
                      const SimulationSettings& settings = {});
CardiacTrace simulate(const LumpedParams& params, double heart_rate,
                      int n_cycles, double dt);

CardiacMeasurements measure(const CardiacTrace& trace);

// Final-cycle (volume, pressure) polygon, closed by repeating the first point.
std::vector<PvPoint> pv_loop(const CardiacTrace& trace);

// Signed shoelace area; positive for counterclockwise traversal.
double signed_area(const std::vector<PvPoint>& polygon);

// CSV with columns t, v_lv, p_lv, p_art.
void write_trace_csv(const CardiacTrace& trace, std::ostream& out);

}  // namespace hb::heart
