#include "heartbrain/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "heartbrain/errors.hpp"
#include "heartbrain/lumped_heart.hpp"
#include "heartbrain/random.hpp"

namespace hb::cohort {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

template <std::size_t N>
bool contains(const std::array<std::string_view, N>& set, std::string_view name) {
  return std::find(set.begin(), set.end(), name) != set.end();
}

}  // namespace

const char* role_name(Role role) {
  switch (role) {
    case Role::XObs: return "x_obs";
    case Role::Nu: return "nu";
    case Role::XHat: return "x_hat";
    case Role::Y: return "y";
    case Role::Aux: return "aux";
  }
  return "aux";
}

Role role_of(std::string_view column) {
  if (contains(kXObs, column)) return Role::XObs;
  if (contains(kNu, column)) return Role::Nu;
  if (contains(kXHat, column)) return Role::XHat;
  if (contains(kY, column)) return Role::Y;
  if (contains(kColumns, column)) return Role::Aux;
  throw SchemaError("unknown column '" + std::string(column) + "'");
}

// ---------------------------------------------------------------- transforms

double BoxCoxTransform::apply(double x) const {
  const double v = x + shift;
  if (lambda == 0.0) return std::log(v);
  return (std::pow(v, lambda) - 1.0) / lambda;
}

double BoxCoxTransform::invert(double y) const {
  if (lambda == 0.0) return std::exp(y) - shift;
  return std::pow(lambda * y + 1.0, 1.0 / lambda) - shift;
}

void TransformLog::append(std::string_view column, Transform t) {
  auto it = entries_.find(column);
  if (it == entries_.end()) it = entries_.emplace(std::string(column), std::vector<Transform>{}).first;
  it->second.push_back(t);
}

const std::vector<Transform>& TransformLog::steps(std::string_view column) const {
  static const std::vector<Transform> none;
  const auto it = entries_.find(column);
  return it == entries_.end() ? none : it->second;
}

double TransformLog::forward(std::string_view column, double x) const {
  for (const auto& t : steps(column))
    x = std::visit([x](const auto& s) { return s.apply(x); }, t);
  return x;
}

double TransformLog::inverse(std::string_view column, double y) const {
  const auto& s = steps(column);
  for (auto it = s.rbegin(); it != s.rend(); ++it)
    y = std::visit([y](const auto& step) { return step.invert(y); }, *it);
  return y;
}

nlohmann::json TransformLog::to_json() const {
  nlohmann::json cols = nlohmann::json::object();
  for (const auto& [name, steps] : entries_) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& t : steps) {
      if (const auto* bc = std::get_if<BoxCoxTransform>(&t))
        arr.push_back({{"type", "box_cox"}, {"lambda", bc->lambda}, {"shift", bc->shift}});
      else {
        const auto& st = std::get<Standardization>(t);
        arr.push_back({{"type", "standardize"}, {"mean", st.mean}, {"std", st.std}});
      }
    }
    cols[name] = arr;
  }
  return {{"columns", cols}};
}

TransformLog TransformLog::from_json(const nlohmann::json& j) {
  TransformLog log;
  for (const auto& [name, arr] : j.at("columns").items()) {
    for (const auto& step : arr) {
      const auto type = step.at("type").get<std::string>();
      if (type == "box_cox")
        log.append(name, BoxCoxTransform{step.at("lambda").get<double>(),
                                         step.at("shift").get<double>()});
      else if (type == "standardize")
        log.append(name, Standardization{step.at("mean").get<double>(),
                                         step.at("std").get<double>()});
      else
        throw SchemaError("unknown transform type '" + type + "' for column " + name);
    }
  }
  return log;
}

bool TransformLog::operator==(const TransformLog& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (const auto& [name, steps] : entries_) {
    const auto& o = other.steps(name);
    if (o.size() != steps.size()) return false;
    for (std::size_t i = 0; i < steps.size(); ++i) {
      if (steps[i].index() != o[i].index()) return false;
      if (const auto* a = std::get_if<BoxCoxTransform>(&steps[i])) {
        const auto& b = std::get<BoxCoxTransform>(o[i]);
        if (a->lambda != b.lambda || a->shift != b.shift) return false;
      } else {
        const auto& a2 = std::get<Standardization>(steps[i]);
        const auto& b = std::get<Standardization>(o[i]);
        if (a2.mean != b.mean || a2.std != b.std) return false;
      }
    }
  }
  return true;
}

// -------------------------------------------------------------- FeatureTable

FeatureTable FeatureTable::with_schema(std::size_t n_subjects) {
  FeatureTable t;
  t.subject_ids.resize(n_subjects);
  std::iota(t.subject_ids.begin(), t.subject_ids.end(), std::int64_t{1});
  for (const auto name : kColumns) {
    t.columns.push_back(Column{std::string(name), role_of(name),
                               std::vector<double>(n_subjects, kNaN),
                               std::vector<std::uint8_t>(n_subjects, 0)});
  }
  return t;
}

std::size_t FeatureTable::role_column_count() const {
  return static_cast<std::size_t>(std::count_if(
      columns.begin(), columns.end(), [](const Column& c) { return c.role != Role::Aux; }));
}

std::size_t FeatureTable::masked_cells() const {
  std::size_t n = 0;
  for (const auto& c : columns) n += static_cast<std::size_t>(std::count(c.observed.begin(), c.observed.end(), 0));
  return n;
}

Column& FeatureTable::column(std::string_view name) {
  for (auto& c : columns)
    if (c.name == name) return c;
  throw SchemaError("table has no column '" + std::string(name) + "'");
}

const Column& FeatureTable::column(std::string_view name) const {
  for (const auto& c : columns)
    if (c.name == name) return c;
  throw SchemaError("table has no column '" + std::string(name) + "'");
}

void FeatureTable::set(std::string_view name, std::size_t row, double value) {
  Column& c = column(name);
  c.values[row] = value;
  c.observed[row] = 1;
}

void FeatureTable::mask(std::string_view name, std::size_t row) {
  Column& c = column(name);
  c.values[row] = kNaN;
  c.observed[row] = 0;
}

FeatureTable FeatureTable::select_rows(std::span<const std::size_t> rows) const {
  FeatureTable out;
  out.transform_log = transform_log;
  out.subject_ids.reserve(rows.size());
  for (std::size_t r : rows) out.subject_ids.push_back(subject_ids.at(r));
  for (const auto& c : columns) {
    Column nc{c.name, c.role, {}, {}};
    nc.values.reserve(rows.size());
    nc.observed.reserve(rows.size());
    for (std::size_t r : rows) {
      nc.values.push_back(c.values[r]);
      nc.observed.push_back(c.observed[r]);
    }
    out.columns.push_back(std::move(nc));
  }
  return out;
}

DenseMatrix FeatureTable::matrix(std::span<const std::string_view> names) const {
  DenseMatrix m(n_subjects(), names.size());
  for (std::size_t j = 0; j < names.size(); ++j) {
    const Column& c = column(names[j]);
    for (std::size_t i = 0; i < n_subjects(); ++i) m(i, j) = c.values[i];
  }
  return m;
}

// ----------------------------------------------------------------- generator

namespace {

// Population constants used to put conditioning features on a common scale
// inside the generator. Fixed so each subject is generated independently.
constexpr double kAgeCenter = 62.5;
constexpr double kAgeScale = 10.103629710818451;  // sd of U(45, 80)
constexpr double kVentMedian = 25.0;              // mL
constexpr double kVentLogScale = 0.426;
constexpr double kWmhMedian = 2.5;  // mL
constexpr double kWmhLogScale = 0.84;
constexpr double kCountLogCenter = 1.5;
constexpr double kCountLogScale = 0.5;

struct Subject {
  double age, bsa, brain_vol, vent_vol, wmh_vol, wmh_count;
  heart::LumpedParams params;
  heart::CardiacMeasurements measured;
};

Subject draw_conditioning(Rng& rng) {
  Subject s{};
  s.age = rng.uniform(45.0, 80.0);
  s.bsa = 1.85 + 0.18 * rng.normal();
  s.brain_vol = 1.15 - 0.004 * (s.age - kAgeCenter) + 0.08 * rng.normal();
  s.vent_vol = kVentMedian * std::exp(0.03 * (s.age - kAgeCenter) + 0.3 * rng.normal());
  const double vascular_burden = rng.normal();
  s.wmh_vol = kWmhMedian * std::exp(0.045 * (s.age - kAgeCenter) + 0.5 * vascular_burden +
                                    0.5 * rng.normal());
  s.wmh_count = 1.0 + static_cast<double>(rng.poisson(2.0 * std::pow(s.wmh_vol, 0.7)));
  return s;
}

heart::LumpedParams couple_parameters(const Subject& s, Rng& rng) {
  const double a = (s.age - kAgeCenter) / kAgeScale;
  const double lw = (std::log(s.wmh_vol) - std::log(kWmhMedian)) / kWmhLogScale;
  const double v = (std::log(s.vent_vol) - std::log(kVentMedian)) / kVentLogScale;
  const double lc = (std::log(s.wmh_count) - kCountLogCenter) / kCountLogScale;
  const heart::LumpedParams nominal = heart::LumpedParams::nominal();
  heart::LumpedParams p;
  p.rp = nominal.rp * std::exp(0.10 * a + 0.08 * lw + 0.05 * rng.normal());
  p.sigma0 = nominal.sigma0 * std::exp(-0.07 * a - 0.09 * lw + 0.05 * rng.normal());
  p.r0 = nominal.r0 * std::exp(0.05 * v + 0.03 * lc + 0.025 * rng.normal());
  p.c1 = nominal.c1 * std::exp(0.15 * a + 0.07 * rng.normal());
  p.tau = nominal.tau * std::exp(-0.10 * a + 0.05 * rng.normal());
  return p;
}

Subject generate_subject(std::uint64_t seed, std::size_t index, const GeneratorOptions& options) {
  Rng rng(Rng::derive(seed, index));
  Subject s = draw_conditioning(rng);
  heart::SimulationSettings settings;
  settings.heart_rate = options.heart_rate;
  for (int attempt = 0; attempt <= options.max_retries; ++attempt) {
    try {
      s.params = couple_parameters(s, rng);
      const auto clean = heart::measure(heart::simulate(s.params, settings));
      const double edv = clean.edv + options.volume_noise * rng.normal();
      const double esv = clean.esv + options.volume_noise * rng.normal();
      const double sbp = clean.sbp + options.pressure_noise * rng.normal();
      const double dbp = clean.dbp + options.pressure_noise * rng.normal();
      if (!(esv > 0.0 && edv > esv && sbp > dbp && dbp > 0.0)) continue;
      auto& m = s.measured;
      m.edv = edv;
      m.esv = esv;
      m.sv = edv - esv;
      m.ef = m.sv / edv;
      m.sbp = sbp;
      m.dbp = dbp;
      m.mbp = heart::mean_blood_pressure(dbp, sbp);
      return s;
    } catch (const ValidationError&) {
    } catch (const RuntimeFailure&) {
    }
  }
  throw RuntimeFailure("cohort generation failed for subject " + std::to_string(index + 1) +
                       " after " + std::to_string(options.max_retries) + " retries");
}

}  // namespace

FeatureTable generate_cohort(std::size_t n, std::uint64_t seed, const GeneratorOptions& options) {
  if (n < 50) throw ValidationError("cohort size must be at least 50, got " + std::to_string(n));
  FeatureTable t = FeatureTable::with_schema(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Subject s = generate_subject(seed, i, options);
    const auto y = s.params.as_array();
    const std::array<double, 17> row{s.age,          s.bsa,          s.brain_vol,   s.vent_vol,
                                     s.wmh_vol,      s.wmh_count,    s.measured.dbp,
                                     s.measured.sbp, s.measured.mbp, s.measured.sv,
                                     s.measured.edv, s.measured.ef,  y[0],
                                     y[1],           y[2],           y[3],
                                     y[4]};
    for (std::size_t c = 0; c < row.size(); ++c) {
      t.columns[c].values[i] = row[c];
      t.columns[c].observed[i] = 1;
    }
  }
  return t;
}

// ------------------------------------------------------------------- Box-Cox

namespace {

double mle_variance(std::span<const double> v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / n;
}

std::vector<double> finite_values(std::span<const double> values) {
  std::vector<double> out;
  for (double v : values)
    if (!std::isnan(v)) out.push_back(v);
  return out;
}

}  // namespace

double box_cox_log_likelihood(std::span<const double> x, double lambda) {
  const BoxCoxTransform t{lambda, 0.0};
  std::vector<double> y(x.size());
  double log_sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = t.apply(x[i]);
    log_sum += std::log(x[i]);
  }
  const double n = static_cast<double>(x.size());
  return -0.5 * n * std::log(mle_variance(y)) + (lambda - 1.0) * log_sum;
}

namespace {

std::vector<double> shifted_positive(std::span<const double> values, double& shift) {
  if (values.empty()) throw ValidationError("box_cox: empty input");
  const double lo = *std::min_element(values.begin(), values.end());
  shift = std::max(0.0, 1e-6 - lo);
  std::vector<double> x(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    x[i] = values[i] + shift;
    if (!(x[i] > 0.0) || !std::isfinite(x[i]))
      throw ValidationError("box_cox: non-positive or non-finite value after shift");
  }
  return x;
}

}  // namespace

BoxCoxResult box_cox(std::span<const double> values, double forced_lambda) {
  double shift = 0.0;
  const auto x = shifted_positive(values, shift);
  BoxCoxResult r{{}, BoxCoxTransform{forced_lambda, shift}};
  r.transformed.reserve(values.size());
  for (double v : values) r.transformed.push_back(r.transform.apply(v));
  return r;
}

BoxCoxResult box_cox(std::span<const double> values) {
  double shift = 0.0;
  const auto x = shifted_positive(values, shift);
  double best_lambda = 0.0;
  double best = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 40; ++i) {
    const double lambda = (i - 20) / 10.0;
    const double ll = box_cox_log_likelihood(x, lambda);
    if (ll > best) {
      best = ll;
      best_lambda = lambda;
    }
  }
  return box_cox(values, best_lambda);
}

FeatureTable box_cox_columns(const FeatureTable& table, std::span<const std::size_t> stats_rows) {
  FeatureTable out = table;
  for (const auto name : kSkewed) {
    Column& c = out.column(name);
    std::vector<double> fit_values;
    for (std::size_t r : stats_rows)
      if (c.observed[r]) fit_values.push_back(c.values[r]);
    const BoxCoxTransform t = box_cox(fit_values).transform;
    for (std::size_t i = 0; i < c.values.size(); ++i) {
      if (!c.observed[i]) continue;
      const double v = c.values[i] + t.shift;
      if (!(v > 0.0))
        throw ValidationError("box_cox: value in column " + c.name + " not positive after shift");
      c.values[i] = t.apply(c.values[i]);
    }
    out.transform_log.append(name, t);
  }
  return out;
}

FeatureTable standardize(const FeatureTable& table, std::span<const std::size_t> stats_rows) {
  FeatureTable out = table;
  for (Column& c : out.columns) {
    if (c.role == Role::Aux) continue;
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t r : stats_rows)
      if (c.observed[r]) {
        sum += c.values[r];
        ++n;
      }
    if (n < 2) throw ValidationError("standardize: column " + c.name + " has fewer than 2 observed training values");
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t r : stats_rows)
      if (c.observed[r]) ss += (c.values[r] - mean) * (c.values[r] - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n));
    // Rounding leaves a tiny spread on constant columns.
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean))))
      throw ValidationError("standardize: column " + c.name + " has zero variance");
    const Standardization st{mean, sd};
    for (std::size_t i = 0; i < c.values.size(); ++i)
      if (c.observed[i]) c.values[i] = st.apply(c.values[i]);
    out.transform_log.append(c.name, st);
  }
  return out;
}

FeatureTable apply_transforms(const FeatureTable& table, const TransformLog& log) {
  if (!table.transform_log.empty())
    throw ValidationError("apply_transforms expects a table in physical units");
  FeatureTable out = table;
  for (Column& c : out.columns)
    for (std::size_t i = 0; i < c.values.size(); ++i)
      if (c.observed[i]) c.values[i] = log.forward(c.name, c.values[i]);
  out.transform_log = log;
  return out;
}

FeatureTable invert_transforms(const FeatureTable& table) {
  FeatureTable out = table;
  for (Column& c : out.columns)
    for (std::size_t i = 0; i < c.values.size(); ++i)
      if (c.observed[i]) c.values[i] = table.transform_log.inverse(c.name, c.values[i]);
  out.transform_log = TransformLog{};
  return out;
}

// --------------------------------------------------------------------- split

SplitResult split(const FeatureTable& table, std::size_t n_complete, std::uint64_t seed) {
  const std::size_t n = table.n_subjects();
  if (n_complete >= n)
    throw ValidationError("split: n_complete (" + std::to_string(n_complete) +
                          ") must be smaller than the cohort (" + std::to_string(n) + ")");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);

  std::vector<std::size_t> complete(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_complete));
  std::vector<std::size_t> incomplete(order.begin() + static_cast<std::ptrdiff_t>(n_complete), order.end());
  std::sort(complete.begin(), complete.end());
  std::sort(incomplete.begin(), incomplete.end());

  SplitResult r{table.select_rows(complete), table.select_rows(incomplete), {}};
  r.incomplete_truth = r.incomplete;
  for (Column& c : r.incomplete.columns) {
    if (c.role != Role::XHat && c.role != Role::Y) continue;
    std::fill(c.values.begin(), c.values.end(), kNaN);
    std::fill(c.observed.begin(), c.observed.end(), 0);
  }
  return r;
}

// ------------------------------------------------------------------ stats

double pearson_correlation(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

double skewness(std::span<const double> values) {
  const auto v = finite_values(values);
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double m2 = 0, m3 = 0;
  for (double x : v) {
    const double d = x - mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= n;
  m3 /= n;
  return m3 / std::pow(m2, 1.5);
}

}  // namespace hb::cohort
