#include "heartbrain/explorer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "heartbrain/errors.hpp"
#include "heartbrain/format.hpp"
#include "heartbrain/random.hpp"
#include "heartbrain/special.hpp"

namespace hb::explorer {

namespace {

std::vector<double> observed_sorted(const cohort::FeatureTable& t, std::string_view name) {
  const auto& col = t.column(name);
  std::vector<double> v;
  for (std::size_t r = 0; r < col.values.size(); ++r)
    if (col.observed[r]) v.push_back(col.values[r]);
  if (v.empty()) throw ValidationError("column '" + std::string(name) + "' has no observed values");
  std::sort(v.begin(), v.end());
  return v;
}

// Summed in sorted order so the result does not depend on row order.
double sorted_mean(const std::vector<double>& sorted) {
  double s = 0.0;
  for (double v : sorted) s += v;
  return s / static_cast<double>(sorted.size());
}

std::string params_header() {
  std::string h = "point,value";
  for (auto name : cohort::kY)
    for (const char* suffix : {"_mean", "_lo95", "_hi95", "_lo50", "_hi50"})
      h += "," + std::string(name) + suffix;
  return h;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

void SweepSpec::validate() const {
  if (std::find(cohort::kNu.begin(), cohort::kNu.end(), variable) == cohort::kNu.end()) {
    std::string names;
    for (auto n : cohort::kNu) names += (names.empty() ? "" : ", ") + std::string(n);
    throw ConfigurationError("unknown sweep variable '" + variable + "'; valid names: " + names);
  }
  if (n_points < 3) throw ConfigurationError("a sweep needs at least 3 grid points");
  if (n_mc < 1) throw ConfigurationError("a sweep needs at least 1 Monte Carlo sample");
  if (range && !(std::isfinite(range->first) && std::isfinite(range->second) && range->first <= range->second))
    throw ConfigurationError("sweep range must be finite with low <= high");
}

std::vector<double> SweepResult::grid() const {
  std::vector<double> g;
  for (const auto& p : points) g.push_back(p.value);
  return g;
}

double percentile(std::span<const double> values, double q) {
  if (values.empty()) throw ValidationError("percentile of an empty sample");
  if (!(q >= 0.0 && q <= 100.0)) throw ConfigurationError("percentile must be in [0, 100]");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double pos = q / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double mixture_quantile(std::span<const double> means, std::span<const double> variances, double p) {
  if (means.empty() || means.size() != variances.size())
    throw DimensionMismatch("mixture needs one variance per mean");
  if (!(p > 0.0 && p < 1.0)) throw ConfigurationError("mixture quantile level must be in (0, 1)");
  double lo = INFINITY, hi = -INFINITY;
  for (std::size_t s = 0; s < means.size(); ++s) {
    const double sd = std::sqrt(std::max(variances[s], 0.0));
    lo = std::min(lo, means[s] - 12.0 * sd);
    hi = std::max(hi, means[s] + 12.0 * sd);
  }
  const auto cdf = [&](double x) {
    double c = 0.0;
    for (std::size_t s = 0; s < means.size(); ++s) {
      const double sd = std::sqrt(std::max(variances[s], 0.0));
      c += sd > 0.0 ? normal_cdf((x - means[s]) / sd) : (x >= means[s] ? 1.0 : 0.0);
    }
    return c / static_cast<double>(means.size());
  };
  for (int it = 0; it < 200 && hi - lo > 1e-13 * std::max(1.0, std::abs(lo) + std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

SweepResult sweep(const joint::JointModel& model, const cohort::FeatureTable& reference,
                  const SweepSpec& spec) {
  spec.validate();
  if (!model.trained()) throw ValidationError("sweep needs a trained model");
  const auto& arch = model.cvae.arch();
  const auto& log = model.transform_log;

  std::vector<double> nu(cohort::kNu.size()), x_obs(cohort::kXObs.size());
  std::size_t swept = 0;
  for (std::size_t i = 0; i < cohort::kNu.size(); ++i) {
    nu[i] = log.forward(cohort::kNu[i], sorted_mean(observed_sorted(reference, cohort::kNu[i])));
    if (cohort::kNu[i] == spec.variable) swept = i;
  }
  for (std::size_t i = 0; i < cohort::kXObs.size(); ++i)
    x_obs[i] = log.forward(cohort::kXObs[i], sorted_mean(observed_sorted(reference, cohort::kXObs[i])));

  double lo = 0.0, hi = 0.0;
  if (spec.range) {
    std::tie(lo, hi) = *spec.range;
  } else {
    const auto v = observed_sorted(reference, spec.variable);
    lo = percentile(v, 5.0);
    hi = percentile(v, 95.0);
  }

  // One set of latent noise shared by every grid point.
  Rng rng(spec.seed);
  std::vector<double> eps(spec.n_mc * arch.latent);
  for (double& e : eps) e = rng.normal();

  SweepResult result;
  result.variable = spec.variable;
  result.n_mc = spec.n_mc;
  const std::size_t d = arch.n_xobs + arch.latent;
  DenseMatrix inputs(spec.n_points * spec.n_mc, d);
  for (std::size_t g = 0; g < spec.n_points; ++g) {
    SweepPoint pt;
    pt.value = g + 1 == spec.n_points
                   ? hi
                   : lo + (hi - lo) * static_cast<double>(g) / static_cast<double>(spec.n_points - 1);
    result.points.push_back(pt);
    std::vector<double> cond(nu);
    cond[swept] = log.forward(spec.variable, pt.value);
    const auto prior = model.cvae.prior(cond);
    for (std::size_t s = 0; s < spec.n_mc; ++s) {
      auto row = inputs.row(g * spec.n_mc + s);
      std::copy(x_obs.begin(), x_obs.end(), row.begin());
      for (std::size_t l = 0; l < arch.latent; ++l)
        row[arch.n_xobs + l] = prior.mu[l] + std::exp(0.5 * prior.log_var[l]) * eps[s * arch.latent + l];
    }
  }
  const auto pred = gp::predict(model.gp, inputs, true);

  for (std::size_t g = 0; g < spec.n_points; ++g) {
    SweepPoint& pt = result.points[g];
    for (std::size_t j = 0; j < cohort::kY.size(); ++j) {
      const auto name = cohort::kY[j];
      const std::span<const double> m(pred.mean[j].data() + g * spec.n_mc, spec.n_mc);
      const std::span<const double> v(pred.variance[j].data() + g * spec.n_mc, spec.n_mc);
      Band& b = pt.params[j];
      double mean = 0.0;
      for (double x : m) mean += log.inverse(name, x);
      b.mean = mean / static_cast<double>(spec.n_mc);
      b.lower95 = log.inverse(name, mixture_quantile(m, v, 0.025));
      b.upper95 = log.inverse(name, mixture_quantile(m, v, 0.975));
      b.lower50 = log.inverse(name, mixture_quantile(m, v, 0.25));
      b.upper50 = log.inverse(name, mixture_quantile(m, v, 0.75));
    }
    heart::LumpedParams lp{pt.params[0].mean, pt.params[1].mean, pt.params[2].mean, pt.params[3].mean,
                           pt.params[4].mean};
    try {
      lp.validate();
      const auto trace = heart::simulate(lp);
      pt.measurements = heart::measure(trace);
      pt.loop = heart::pv_loop(trace);
      pt.simulated = true;
    } catch (const ValidationError& e) {
      pt.failure = e.what();
    } catch (const RuntimeFailure& e) {
      pt.failure = e.what();
    }
  }
  return result;
}

void export_sweep(const SweepResult& result, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());
  const std::string& var = result.variable;

  auto params = open_out(out_dir / ("params_" + var + ".csv"));
  params << params_header() << '\n';
  for (std::size_t g = 0; g < result.points.size(); ++g) {
    const auto& pt = result.points[g];
    params << g << ',' << format_double(pt.value);
    for (const auto& b : pt.params)
      params << ',' << format_double(b.mean) << ',' << format_double(b.lower95) << ','
             << format_double(b.upper95) << ',' << format_double(b.lower50) << ','
             << format_double(b.upper50);
    params << '\n';
  }

  auto loops = open_out(out_dir / ("loops_" + var + ".csv"));
  loops << "point,v,p\n";
  for (std::size_t g = 0; g < result.points.size(); ++g)
    for (const auto& p : result.points[g].loop)
      loops << g << ',' << format_double(p.volume) << ',' << format_double(p.pressure) << '\n';

  auto meas = open_out(out_dir / ("measurements_" + var + ".csv"));
  meas << "point,value,simulated,sv,edv,esv,ef,sbp,dbp,mbp,failure\n";
  for (std::size_t g = 0; g < result.points.size(); ++g) {
    const auto& pt = result.points[g];
    meas << g << ',' << format_double(pt.value) << ',' << (pt.simulated ? 1 : 0);
    const auto& m = pt.measurements;
    for (double v : {m.sv, m.edv, m.esv, m.ef, m.sbp, m.dbp, m.mbp})
      meas << ',' << (pt.simulated ? format_double(v) : "");
    std::string why = pt.failure;
    std::replace(why.begin(), why.end(), ',', ';');
    std::replace(why.begin(), why.end(), '\n', ' ');
    meas << ',' << why << '\n';
  }
  for (auto* f : {&params, &loops, &meas})
    if (!*f) throw IoError("failed writing sweep files to " + out_dir.string());
}

SweepResult read_params_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != params_header())
    throw SchemaError("unexpected sweep params header in " + path.string());
  SweepResult r;
  const std::string stem = path.stem().string();
  r.variable = stem.rfind("params_", 0) == 0 ? stem.substr(7) : stem;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 2 + 5 * cohort::kY.size())
      throw SchemaError("sweep params row has " + std::to_string(cells.size()) + " cells");
    std::vector<double> v;
    for (std::size_t c = 1; c < cells.size(); ++c) {
      const auto x = parse_double(cells[c]);
      if (!x) throw SchemaError("non-numeric sweep cell '" + cells[c] + "'");
      v.push_back(*x);
    }
    SweepPoint pt;
    pt.value = v[0];
    for (std::size_t j = 0; j < cohort::kY.size(); ++j)
      pt.params[j] = {v[1 + 5 * j], v[2 + 5 * j], v[3 + 5 * j], v[4 + 5 * j], v[5 + 5 * j]};
    r.points.push_back(pt);
  }
  return r;
}

}  // namespace hb::explorer
