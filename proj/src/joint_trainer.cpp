#include "heartbrain/joint_trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "heartbrain/autodiff.hpp"
#include "heartbrain/format.hpp"
#include "heartbrain/special.hpp"

namespace hb::joint {

namespace {

constexpr const char* kFormat = "heartbrain-joint/1";

template <std::size_t N>
DenseMatrix role_matrix(const cohort::FeatureTable& t, const std::array<std::string_view, N>& names,
                        bool require_observed) {
  const DenseMatrix m = t.matrix(names);
  if (require_observed)
    for (std::size_t c = 0; c < N; ++c) {
      const auto& col = t.column(names[c]);
      for (std::size_t r = 0; r < t.n_subjects(); ++r)
        if (!col.observed[r])
          throw ValidationError("column '" + std::string(names[c]) + "' is masked for subject " +
                                std::to_string(t.subject_ids[r]));
    }
  return m;
}

DenseMatrix take_rows(const DenseMatrix& m, std::span<const std::size_t> rows) {
  DenseMatrix out(rows.size(), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r)
    std::copy(m.row(rows[r]).begin(), m.row(rows[r]).end(), out.row(r).begin());
  return out;
}

std::vector<std::vector<double>> columns_of(const DenseMatrix& m) {
  std::vector<std::vector<double>> cols(m.cols(), std::vector<double>(m.rows()));
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) cols[c][r] = m(r, c);
  return cols;
}

void check_batch(const JointState& state, const Dataset& batch) {
  const auto& a = state.cvae.arch();
  if (batch.size() < 2)
    throw ConfigurationError("ELBO batch needs at least 2 subjects for the GP term, got " +
                             std::to_string(batch.size()));
  if (batch.x_obs.cols() != a.n_xobs || batch.nu.cols() != a.n_nu ||
      batch.x_hat.cols() != a.n_xhat || batch.y.cols() != state.hyper.n_targets() ||
      batch.nu.rows() != batch.size() || batch.x_hat.rows() != batch.size() ||
      batch.y.rows() != batch.size())
    throw DimensionMismatch("ELBO batch does not match the model dimensions");
  if (state.hyper.n_inputs() != a.n_xobs + a.latent)
    throw DimensionMismatch("GP inputs must be [x_obs, z]");
}

// Joint model whose GP conditions on [x_obs, mu_z] without refitting; used
// for last-good snapshots.
std::shared_ptr<const JointModel> snapshot(const JointState& state, const TrainConfig& config,
                                           const cohort::TransformLog& log, const Dataset& data) {
  auto m = std::make_shared<JointModel>();
  m->cvae = state.cvae;
  m->gp.hyper = state.hyper;
  m->config = config;
  m->config.gp_refit_steps = 0;
  m->transform_log = log;
  try {
    rebuild_reference(*m, data);
  } catch (const RuntimeFailure&) {
  }
  m->config = config;
  return m;
}

}  // namespace

// ------------------------------------------------------------ TrainConfig

void TrainConfig::validate() const {
  if (batch_size < 2) throw ConfigurationError("batch_size must be at least 2");
  if (!(learning_rate > 0.0)) throw ConfigurationError("learning_rate must be positive");
  if (!(lr_decay > 0.0) || lr_decay > 1.0) throw ConfigurationError("lr_decay must be in (0, 1]");
  if (grad_clip < 0.0) throw ConfigurationError("grad_clip must be non-negative");
  if (mc_samples < 1) throw ConfigurationError("mc_samples must be at least 1");
  if (kl_warmup_epochs > epochs)
    throw ConfigurationError("kl_warmup_epochs (" + std::to_string(kl_warmup_epochs) +
                             ") exceeds epochs (" + std::to_string(epochs) + ")");
  if (gp_warmup_epochs > epochs) throw ConfigurationError("gp_warmup_epochs exceeds epochs");
  if (gp_weight < 0.0 || gp_weight_start < 0.0) throw ConfigurationError("GP weights must be non-negative");
  if (gp_refit_points < 2) throw ConfigurationError("gp_refit_points must be at least 2");
  if (!(gp_refit_learning_rate > 0.0)) throw ConfigurationError("gp_refit_learning_rate must be positive");
  if (arch.latent == 0 || arch.hidden == 0) throw ConfigurationError("latent and hidden sizes must be positive");
}

double TrainConfig::kl_weight(std::size_t epoch) const {
  if (kl_warmup_epochs == 0) return 1.0;
  return std::min(1.0, static_cast<double>(epoch) / static_cast<double>(kl_warmup_epochs));
}

double TrainConfig::gp_term_weight(std::size_t epoch) const {
  if (gp_warmup_epochs == 0) return gp_weight;
  const double t = std::min(1.0, static_cast<double>(epoch) / static_cast<double>(gp_warmup_epochs));
  return gp_weight_start + t * (gp_weight - gp_weight_start);
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"lr_decay", lr_decay},
          {"optimizer", optimizer == Optimizer::Sgd ? "sgd" : "adam"},
          {"grad_clip", grad_clip},
          {"mc_samples", mc_samples},
          {"kl_warmup_epochs", kl_warmup_epochs},
          {"gp_weight", gp_weight},
          {"gp_weight_start", gp_weight_start},
          {"gp_warmup_epochs", gp_warmup_epochs},
          {"alternate_gp", alternate_gp},
          {"gp_refit_steps", gp_refit_steps},
          {"gp_refit_points", gp_refit_points},
          {"gp_refit_learning_rate", gp_refit_learning_rate},
          {"seed", seed},
          {"latent", arch.latent},
          {"hidden", arch.hidden},
          {"hidden_layers", arch.hidden_layers}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigurationError("training config must be a JSON object");
  TrainConfig c;
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "epochs") c.epochs = v.get<std::size_t>();
      else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (key == "learning_rate") c.learning_rate = v.get<double>();
      else if (key == "lr_decay") c.lr_decay = v.get<double>();
      else if (key == "optimizer") {
        const auto name = v.get<std::string>();
        if (name == "sgd") c.optimizer = Optimizer::Sgd;
        else if (name == "adam") c.optimizer = Optimizer::Adam;
        else throw ConfigurationError("optimizer must be 'sgd' or 'adam', got '" + name + "'");
      } else if (key == "grad_clip") c.grad_clip = v.get<double>();
      else if (key == "mc_samples") c.mc_samples = v.get<std::size_t>();
      else if (key == "kl_warmup_epochs") c.kl_warmup_epochs = v.get<std::size_t>();
      else if (key == "gp_weight") c.gp_weight = v.get<double>();
      else if (key == "gp_weight_start") c.gp_weight_start = v.get<double>();
      else if (key == "gp_warmup_epochs") c.gp_warmup_epochs = v.get<std::size_t>();
      else if (key == "alternate_gp") c.alternate_gp = v.get<bool>();
      else if (key == "gp_refit_steps") c.gp_refit_steps = v.get<std::size_t>();
      else if (key == "gp_refit_points") c.gp_refit_points = v.get<std::size_t>();
      else if (key == "gp_refit_learning_rate") c.gp_refit_learning_rate = v.get<double>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "latent") c.arch.latent = v.get<std::size_t>();
      else if (key == "hidden") c.arch.hidden = v.get<std::size_t>();
      else if (key == "hidden_layers") c.arch.hidden_layers = v.get<std::size_t>();
      else throw ConfigurationError("unknown training config key '" + key + "'");
    } catch (const nlohmann::json::exception&) {
      throw ConfigurationError("training config key '" + key + "' has the wrong type");
    }
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------- Dataset

Dataset Dataset::rows(std::span<const std::size_t> r) const {
  Dataset d;
  d.x_obs = take_rows(x_obs, r);
  d.nu = take_rows(nu, r);
  if (x_hat.rows()) d.x_hat = take_rows(x_hat, r);
  if (y.rows()) d.y = take_rows(y, r);
  return d;
}

Dataset Dataset::from_table(const cohort::FeatureTable& table, bool with_targets) {
  if (table.transform_log.empty())
    throw ValidationError("expected a standardized table (no transform log present)");
  Dataset d;
  d.x_obs = role_matrix(table, cohort::kXObs, true);
  d.nu = role_matrix(table, cohort::kNu, true);
  if (with_targets) {
    d.x_hat = role_matrix(table, cohort::kXHat, true);
    d.y = role_matrix(table, cohort::kY, true);
  }
  return d;
}

// ------------------------------------------------------------- JointState

std::size_t JointState::size() const {
  return n_cvae() + hyper.n_targets() * gp::KernelHyper::raw_size(hyper.n_inputs());
}

std::vector<double> JointState::flatten() const {
  std::vector<double> flat(cvae.params().begin(), cvae.params().end());
  for (std::size_t j = 0; j < hyper.n_targets(); ++j) {
    const auto r = hyper.raw(j);
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return flat;
}

void JointState::unflatten(std::span<const double> flat) {
  if (flat.size() != size()) throw DimensionMismatch("flat joint state has the wrong length");
  std::copy(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(n_cvae()), cvae.params().begin());
  const std::size_t k = gp::KernelHyper::raw_size(hyper.n_inputs());
  for (std::size_t j = 0; j < hyper.n_targets(); ++j) hyper.set_raw(j, flat.subspan(n_cvae() + j * k, k));
}

// ------------------------------------------------------------------- ELBO

BatchElbo elbo_batch(const JointState& state, const Dataset& batch, std::span<const EpsDraw> draws,
                     std::span<const double> draw_weights, const TermWeights& weights,
                     bool with_gradient) {
  check_batch(state, batch);
  const auto& arch = state.cvae.arch();
  const std::size_t n = batch.size(), latent = arch.latent, d = state.hyper.n_inputs();
  if (draws.empty() || draws.size() != draw_weights.size())
    throw ConfigurationError("elbo_batch needs one weight per latent draw");
  for (const auto& e : draws)
    if (e.size() != n * latent) throw DimensionMismatch("latent draw has the wrong size");

  thread_local ad::Tape tape;
  tape.clear();
  const std::vector<double> flat = state.flatten();
  std::vector<ad::Var> pv;
  pv.reserve(flat.size());
  for (double v : flat) pv.push_back(tape.input(v));
  const std::span<const ad::Var> all(pv);
  const std::span<const ad::Var> cvae_params = all.subspan(0, state.n_cvae());

  // Constrained GP hyperparameters.
  const std::size_t k = gp::KernelHyper::raw_size(d);
  std::vector<ad::Var> alpha, noise;
  std::vector<std::vector<ad::Var>> beta(state.hyper.n_targets());
  for (std::size_t j = 0; j < state.hyper.n_targets(); ++j) {
    const auto raw = all.subspan(state.n_cvae() + j * k, k);
    alpha.push_back(ad::softplus(raw[0]));
    for (std::size_t i = 0; i < d; ++i) beta[j].push_back(ad::softplus(raw[1 + i]));
    noise.push_back(ad::softplus(raw[k - 1]) + gp::kNoiseFloor);
  }
  std::vector<std::vector<double>> y_cols = columns_of(batch.y);

  std::vector<std::vector<ad::Var>> x_obs(n), nu(n);
  std::vector<cvae::GaussianLatent<ad::Var>> q(n);
  std::vector<ad::Var> kl_terms;
  for (std::size_t b = 0; b < n; ++b) {
    for (double v : batch.x_obs.row(b)) x_obs[b].push_back(tape.constant(v));
    for (double v : batch.nu.row(b)) nu[b].push_back(tape.constant(v));
    q[b] = state.cvae.encode<ad::Var>(cvae_params, x_obs[b], nu[b]);
    const auto p = state.cvae.prior<ad::Var>(cvae_params, nu[b]);
    kl_terms.push_back(cvae::kl_divergence(q[b], p));
  }
  const ad::Var kl = ad::sum(kl_terms);

  std::vector<ad::Var> objective_terms;
  ElboTerms terms;
  terms.kl = kl.value();
  std::vector<ad::Var> gp_inputs(n * d), recon_terms, gp_terms;
  for (std::size_t s = 0; s < draws.size(); ++s) {
    recon_terms.clear();
    gp_terms.clear();
    for (std::size_t b = 0; b < n; ++b) {
      const auto z = cvae::reparam<ad::Var>(
          q[b], std::span<const double>(draws[s]).subspan(b * latent, latent));
      const auto dec = state.cvae.decode<ad::Var>(cvae_params, z, nu[b]);
      for (std::size_t f = 0; f < arch.n_xhat; ++f)
        recon_terms.push_back(gaussian_log_density(batch.x_hat(b, f), dec.mu[f], dec.log_var[f]));
      for (std::size_t i = 0; i < arch.n_xobs; ++i) gp_inputs[b * d + i] = x_obs[b][i];
      for (std::size_t l = 0; l < latent; ++l) gp_inputs[b * d + arch.n_xobs + l] = z[l];
    }
    for (std::size_t j = 0; j < state.hyper.n_targets(); ++j)
      gp_terms.push_back(gp::log_marginal_likelihood(gp_inputs, d, y_cols[j], alpha[j], beta[j], noise[j]));
    const ad::Var recon = ad::sum(recon_terms);
    const ad::Var gp_term = ad::sum(gp_terms);
    terms.recon += draw_weights[s] * recon.value();
    terms.gp += draw_weights[s] * gp_term.value();
    objective_terms.push_back(draw_weights[s] * (weights.gp * gp_term + weights.recon * recon));
  }
  objective_terms.push_back(-weights.kl * kl);
  const ad::Var objective = ad::sum(objective_terms);
  terms.total = terms.gp + terms.recon - terms.kl;

  BatchElbo out;
  out.objective = objective.value();
  out.terms = terms;
  if (with_gradient) {
    const auto adj = tape.adjoints(objective);
    out.gradient.resize(pv.size());
    for (std::size_t i = 0; i < pv.size(); ++i) out.gradient[i] = adj[pv[i].index()];
  }
  return out;
}

BatchElbo elbo_batch(const JointState& state, const Dataset& batch, std::size_t samples, Rng& rng,
                     const TermWeights& weights, bool with_gradient) {
  if (samples == 0) throw ConfigurationError("elbo_batch needs at least one Monte Carlo sample");
  std::vector<EpsDraw> draws(samples);
  for (auto& e : draws) {
    e.resize(batch.size() * state.cvae.arch().latent);
    for (double& v : e) v = rng.normal();
  }
  const std::vector<double> w(samples, 1.0 / static_cast<double>(samples));
  return elbo_batch(state, batch, draws, w, weights, with_gradient);
}

// ------------------------------------------------------------- ElboReport

void ElboReport::write_csv(std::ostream& out) const {
  out << "epoch,total,gp,recon,kl\n";
  for (const auto& r : rows)
    out << r.epoch << ',' << format_double(r.terms.total) << ',' << format_double(r.terms.gp) << ','
        << format_double(r.terms.recon) << ',' << format_double(r.terms.kl) << '\n';
}

void ElboReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_csv(out);
  if (!out) throw IoError("failed writing " + path.string());
}

ElboReport ElboReport::read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "epoch,total,gp,recon,kl")
    throw SchemaError("ELBO report header must be epoch,total,gp,recon,kl");
  ElboReport r;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> v;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      const auto x = parse_double(cell);
      if (!x) throw SchemaError("non-numeric ELBO report cell '" + cell + "'");
      v.push_back(*x);
    }
    if (v.size() != 5) throw SchemaError("ELBO report row needs 5 cells");
    r.rows.push_back({static_cast<std::size_t>(v[0]), {v[1], v[2], v[3], v[4]}});
  }
  return r;
}

// ------------------------------------------------------------- JointModel

nlohmann::json JointModel::to_json() const {
  return {{"format", kFormat},
          {"config", config.to_json()},
          {"cvae", cvae.to_json()},
          {"gp", gp.to_json()},
          {"transform_log", transform_log.to_json()},
          {"metadata", metadata}};
}

JointModel JointModel::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kFormat)
      throw SchemaError("unsupported checkpoint format '" + j.at("format").get<std::string>() + "'");
    JointModel m;
    m.config = TrainConfig::from_json(j.at("config"));
    m.cvae = cvae::CvaeModel::from_json(j.at("cvae"));
    m.gp = gp::GPModel::from_json(j.at("gp"));
    m.transform_log = cohort::TransformLog::from_json(j.at("transform_log"));
    m.metadata = j.value("metadata", nlohmann::json::object());
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed checkpoint: ") + e.what());
  }
}

void JointModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << to_json().dump(1) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

JointModel JointModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("checkpoint " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

// ------------------------------------------------------------------ train

void rebuild_reference(JointModel& model, const Dataset& data) {
  if (!model.cvae.initialized()) throw ValidationError("rebuild_reference needs an initialized CVAE");
  if (data.y.rows() != data.size()) throw ValidationError("rebuild_reference needs observed targets");
  const auto& a = model.cvae.arch();
  DenseMatrix inputs(data.size(), a.n_xobs + a.latent);
  for (std::size_t r = 0; r < data.size(); ++r) {
    const auto q = model.cvae.encode(data.x_obs.row(r), data.nu.row(r));
    for (std::size_t i = 0; i < a.n_xobs; ++i) inputs(r, i) = data.x_obs(r, i);
    for (std::size_t l = 0; l < a.latent; ++l) inputs(r, a.n_xobs + l) = q.mu[l];
  }
  gp::FitOptions opts;
  opts.steps = model.config.gp_refit_steps;
  opts.learning_rate = model.config.gp_refit_learning_rate;
  opts.max_fit_points = model.config.gp_refit_points;
  model.gp = gp::fit(inputs, columns_of(data.y), model.gp.hyper, opts);
}

TrainResult train(const cohort::FeatureTable& complete, const TrainConfig& config,
                  EpochCallback on_epoch) {
  config.validate();
  const Dataset data = Dataset::from_table(complete, true);
  const std::size_t n = data.size();
  if (n < 2) throw ValidationError("training needs at least 2 subjects");
  cvae::Architecture arch = config.arch;
  arch.n_xobs = data.x_obs.cols();
  arch.n_nu = data.nu.cols();
  arch.n_xhat = data.x_hat.cols();

  TrainResult result;
  JointModel& model = result.model;
  model.config = config;
  model.config.arch = arch;
  model.transform_log = complete.transform_log;
  model.cvae = cvae::CvaeModel::initialize(arch, Rng::derive(config.seed, 1));

  // Kernel initialization at the untrained encoder, whose posterior is N(0, I).
  {
    Rng rng(Rng::derive(config.seed, 2));
    DenseMatrix inputs(n, arch.n_xobs + arch.latent);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t i = 0; i < arch.n_xobs; ++i) inputs(r, i) = data.x_obs(r, i);
      for (std::size_t l = 0; l < arch.latent; ++l) inputs(r, arch.n_xobs + l) = rng.normal();
    }
    model.gp.hyper = gp::initial_hyper(inputs, columns_of(data.y));
  }

  JointState state{model.cvae, model.gp.hyper};
  std::vector<double> theta = state.flatten();
  std::vector<double> m1(theta.size(), 0.0), m2(theta.size(), 0.0);
  std::size_t step = 0;
  Rng shuffle_rng(Rng::derive(config.seed, 3));
  Rng eps_rng(Rng::derive(config.seed, 4));
  std::vector<std::size_t> order(n);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    std::vector<std::pair<std::size_t, std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += config.batch_size)
      batches.emplace_back(start, std::min(n, start + config.batch_size));
    // A trailing batch of one subject joins the previous batch.
    if (batches.size() > 1 && batches.back().second - batches.back().first < 2) {
      batches[batches.size() - 2].second = n;
      batches.pop_back();
    }

    const TermWeights w{config.gp_term_weight(epoch), 1.0, config.kl_weight(epoch)};
    const double lr = config.learning_rate * std::pow(config.lr_decay, static_cast<double>(epoch));
    ElboTerms sums;
    for (const auto& [lo, hi] : batches) {
      const std::span<const std::size_t> idx(order.data() + lo, hi - lo);
      const Dataset batch = data.rows(idx);
      BatchElbo e = elbo_batch(state, batch, config.mc_samples, eps_rng, w, true);
      bool finite = std::isfinite(e.objective);
      for (double g : e.gradient) finite = finite && std::isfinite(g);
      if (!finite)
        throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) +
                                   ": non-finite ELBO or gradient",
                               snapshot(state, model.config, model.transform_log, data));
      sums.total += e.terms.total;
      sums.gp += e.terms.gp;
      sums.recon += e.terms.recon;
      sums.kl += e.terms.kl;

      auto& g = e.gradient;
      if (config.alternate_gp) {
        const bool gp_turn = step % 2 == 1;
        for (std::size_t i = 0; i < g.size(); ++i)
          if ((i >= state.n_cvae()) != gp_turn) g[i] = 0.0;
      }
      if (config.grad_clip > 0.0) {
        double norm = 0.0;
        for (double v : g) norm += v * v;
        norm = std::sqrt(norm);
        if (norm > config.grad_clip)
          for (double& v : g) v *= config.grad_clip / norm;
      }
      ++step;
      if (config.optimizer == Optimizer::Sgd) {
        for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += lr * g[i];
      } else {
        constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
        for (std::size_t i = 0; i < theta.size(); ++i) {
          m1[i] = b1 * m1[i] + (1 - b1) * g[i];
          m2[i] = b2 * m2[i] + (1 - b2) * g[i] * g[i];
          theta[i] += lr * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + eps);
        }
      }
      state.unflatten(theta);
    }
    const double inv = 1.0 / static_cast<double>(n);
    ElboRow row{epoch, {sums.total * inv, sums.gp * inv, sums.recon * inv, sums.kl * inv}};
    result.report.rows.push_back(row);
    if (on_epoch) on_epoch(row);
  }

  model.cvae = state.cvae;
  model.gp.hyper = state.hyper;
  rebuild_reference(model, data);
  return result;
}

// ------------------------------------------------------------------ infer

InferResult infer(const JointModel& model, const Dataset& data, std::size_t n_samples,
                  std::uint64_t seed) {
  if (!model.trained()) throw ValidationError("infer needs a trained model");
  if (n_samples == 0) throw ConfigurationError("infer needs at least one sample");
  const auto& a = model.cvae.arch();
  if (a.n_xhat != cohort::kXHat.size() || model.gp.n_targets() != cohort::kY.size())
    throw DimensionMismatch("infer expects the standard cardiac feature and parameter sets");
  const std::size_t n = data.size(), d = a.n_xobs + a.latent;

  InferResult out;
  const auto imputed = model.cvae.impute(data.x_obs, data.nu, n_samples, seed, &model.transform_log);
  out.x_hat_mean = imputed.mean;
  out.x_hat_std = imputed.std;

  // Same latent draws as the imputer: identical streams and draw order.
  DenseMatrix inputs(n * n_samples, d);
  for (std::size_t r = 0; r < n; ++r) {
    Rng rng(Rng::derive(seed, r));
    const auto q = model.cvae.encode(data.x_obs.row(r), data.nu.row(r));
    for (std::size_t s = 0; s < n_samples; ++s) {
      const auto z = cvae::reparam_sample(q, rng);
      auto row = inputs.row(r * n_samples + s);
      std::copy(data.x_obs.row(r).begin(), data.x_obs.row(r).end(), row.begin());
      std::copy(z.z.begin(), z.z.end(), row.begin() + static_cast<std::ptrdiff_t>(a.n_xobs));
    }
  }
  const auto pred = gp::predict(model.gp, inputs, true);

  out.y_mean = DenseMatrix(n, cohort::kY.size());
  out.y_std = DenseMatrix(n, cohort::kY.size());
  std::vector<double> means(n_samples), vars(n_samples);
  for (std::size_t j = 0; j < cohort::kY.size(); ++j) {
    const auto name = cohort::kY[j];
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t s = 0; s < n_samples; ++s) {
        const double m = pred.mean[j][r * n_samples + s];
        const double h = 1e-5;
        const double slope =
            (model.transform_log.inverse(name, m + h) - model.transform_log.inverse(name, m - h)) / (2 * h);
        means[s] = model.transform_log.inverse(name, m);
        vars[s] = pred.variance[j][r * n_samples + s] * slope * slope;
      }
      double mean = 0.0, model_var = 0.0, spread = 0.0;
      for (std::size_t s = 0; s < n_samples; ++s) {
        mean += means[s];
        model_var += vars[s];
      }
      mean /= static_cast<double>(n_samples);
      model_var /= static_cast<double>(n_samples);
      for (double m : means) spread += (m - mean) * (m - mean);
      spread /= static_cast<double>(n_samples);
      out.y_mean(r, j) = mean;
      out.y_std(r, j) = std::sqrt(spread + model_var);
    }
  }
  return out;
}

}  // namespace hb::joint
