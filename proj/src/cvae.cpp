#include "heartbrain/cvae.hpp"

#include <cmath>

namespace hb::cvae {

MlpLayout::MlpLayout(std::vector<std::size_t> sizes) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) throw ConfigurationError("an MLP needs at least one layer");
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    if (sizes_[l] == 0 || sizes_[l + 1] == 0) throw ConfigurationError("MLP layer of width 0");
    offsets_.push_back(offsets_.back() + sizes_[l] * sizes_[l + 1] + sizes_[l + 1]);
  }
}

namespace {

std::vector<std::size_t> layer_sizes(std::size_t in, std::size_t out, const Architecture& a) {
  std::vector<std::size_t> s{in};
  for (std::size_t l = 0; l < a.hidden_layers; ++l) s.push_back(a.hidden);
  s.push_back(out);
  return s;
}

void init_block(const MlpLayout& layout, std::span<double> block, Rng& rng) {
  for (std::size_t l = 0; l < layout.layers(); ++l) {
    const std::size_t in = layout.sizes()[l], out = layout.sizes()[l + 1];
    const bool last = l + 1 == layout.layers();
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (std::size_t e = 0; e < in * out; ++e)
      block[layout.weight_offset(l) + e] = last ? 0.0 : rng.uniform(-bound, bound);
    for (std::size_t o = 0; o < out; ++o) block[layout.bias_offset(l) + o] = 0.0;
  }
}

nlohmann::json block_to_json(const MlpLayout& layout, std::span<const double> block) {
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < layout.layers(); ++l) {
    const std::size_t in = layout.sizes()[l], out = layout.sizes()[l + 1];
    nlohmann::json w = nlohmann::json::array();
    for (std::size_t o = 0; o < out; ++o) {
      const auto row = block.subspan(layout.weight_offset(l) + o * in, in);
      w.push_back(std::vector<double>(row.begin(), row.end()));
    }
    const auto b = block.subspan(layout.bias_offset(l), out);
    layers.push_back({{"weights", w}, {"bias", std::vector<double>(b.begin(), b.end())}});
  }
  return layers;
}

void block_from_json(const MlpLayout& layout, const nlohmann::json& layers, std::span<double> block,
                     const char* name) {
  if (!layers.is_array() || layers.size() != layout.layers())
    throw SchemaError(std::string("checkpoint network '") + name + "' has the wrong number of layers");
  for (std::size_t l = 0; l < layout.layers(); ++l) {
    const std::size_t in = layout.sizes()[l], out = layout.sizes()[l + 1];
    const auto w = layers[l].at("weights").get<std::vector<std::vector<double>>>();
    const auto b = layers[l].at("bias").get<std::vector<double>>();
    if (w.size() != out || b.size() != out)
      throw SchemaError(std::string("checkpoint network '") + name + "' layer shape mismatch");
    for (std::size_t o = 0; o < out; ++o) {
      if (w[o].size() != in)
        throw SchemaError(std::string("checkpoint network '") + name + "' layer shape mismatch");
      std::copy(w[o].begin(), w[o].end(), block.begin() + static_cast<std::ptrdiff_t>(layout.weight_offset(l) + o * in));
    }
    std::copy(b.begin(), b.end(), block.begin() + static_cast<std::ptrdiff_t>(layout.bias_offset(l)));
  }
}

void check_finite(std::span<const double> v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw ValidationError(std::string(what) + " contains a non-finite value");
}

}  // namespace

CvaeModel CvaeModel::initialize(const Architecture& arch, std::uint64_t seed) {
  if (arch.latent == 0 || arch.n_xhat == 0 || arch.n_nu == 0)
    throw ConfigurationError("CVAE dimensions must be positive");
  CvaeModel m;
  m.arch_ = arch;
  m.encoder_ = MlpLayout(layer_sizes(arch.n_xobs + arch.n_nu, 2 * arch.latent, arch));
  m.prior_ = MlpLayout(layer_sizes(arch.n_nu, 2 * arch.latent, arch));
  m.decoder_ = MlpLayout(layer_sizes(arch.latent + arch.n_nu, 2 * arch.n_xhat, arch));
  m.params_.assign(m.encoder_.n_params() + m.prior_.n_params() + m.decoder_.n_params(), 0.0);
  Rng rng(seed);
  std::span<double> all(m.params_);
  init_block(m.encoder_, all.subspan(0, m.encoder_.n_params()), rng);
  init_block(m.prior_, all.subspan(m.encoder_.n_params(), m.prior_.n_params()), rng);
  init_block(m.decoder_, all.subspan(m.encoder_.n_params() + m.prior_.n_params()), rng);
  return m;
}

GaussianLatent<double> CvaeModel::encode(std::span<const double> x_obs,
                                         std::span<const double> nu) const {
  check_finite(x_obs, "encoder input");
  check_finite(nu, "encoder input");
  return encode<double>(params(), x_obs, nu);
}

GaussianLatent<double> CvaeModel::prior(std::span<const double> nu) const {
  check_finite(nu, "prior input");
  return prior<double>(params(), nu);
}

GaussianLatent<double> CvaeModel::decode(std::span<const double> z,
                                         std::span<const double> nu) const {
  check_finite(z, "latent sample");
  check_finite(nu, "decoder input");
  return decode<double>(params(), z, nu);
}

LatentSample reparam_sample(const GaussianLatent<double>& latent, Rng& rng) {
  LatentSample s;
  for (std::size_t l = 0; l < latent.mu.size(); ++l) s.eps.push_back(rng.normal());
  s.z = reparam<double>(latent, s.eps);
  return s;
}

ImputeResult CvaeModel::impute(const DenseMatrix& x_obs, const DenseMatrix& nu,
                               std::size_t n_samples, std::uint64_t seed,
                               const cohort::TransformLog* log) const {
  if (!initialized()) throw ValidationError("CVAE model is not initialized");
  if (n_samples == 0) throw ConfigurationError("impute needs at least one sample");
  if (x_obs.rows() != nu.rows()) throw DimensionMismatch("impute: x_obs and nu row counts differ");
  if (log && arch_.n_xhat != cohort::kXHat.size())
    throw DimensionMismatch("impute: physical units need the standard x_hat columns");
  const std::size_t n = x_obs.rows(), f = arch_.n_xhat;
  ImputeResult out{DenseMatrix(n, f), DenseMatrix(n, f)};
  std::vector<double> means(n_samples), vars(n_samples);
  for (std::size_t r = 0; r < n; ++r) {
    Rng rng(Rng::derive(seed, r));
    const auto q = encode(x_obs.row(r), nu.row(r));
    std::vector<GaussianLatent<double>> decoded;
    for (std::size_t s = 0; s < n_samples; ++s) {
      const auto z = reparam_sample(q, rng);
      decoded.push_back(decode(z.z, nu.row(r)));
    }
    for (std::size_t k = 0; k < f; ++k) {
      for (std::size_t s = 0; s < n_samples; ++s) {
        double m = decoded[s].mu[k];
        double v = std::exp(decoded[s].log_var[k]);
        if (log) {
          const auto name = cohort::kXHat[k];
          const double h = 1e-5;
          const double slope = (log->inverse(name, m + h) - log->inverse(name, m - h)) / (2 * h);
          m = log->inverse(name, m);
          v *= slope * slope;
        }
        means[s] = m;
        vars[s] = v;
      }
      double mean = 0.0, model_var = 0.0, spread = 0.0;
      for (std::size_t s = 0; s < n_samples; ++s) {
        mean += means[s];
        model_var += vars[s];
      }
      mean /= static_cast<double>(n_samples);
      model_var /= static_cast<double>(n_samples);
      for (std::size_t s = 0; s < n_samples; ++s) spread += (means[s] - mean) * (means[s] - mean);
      spread /= static_cast<double>(n_samples);
      out.mean(r, k) = mean;
      out.std(r, k) = std::sqrt(spread + model_var);
    }
  }
  return out;
}

nlohmann::json CvaeModel::to_json() const {
  const std::span<const double> all = params();
  return {{"architecture",
           {{"n_xobs", arch_.n_xobs},
            {"n_nu", arch_.n_nu},
            {"n_xhat", arch_.n_xhat},
            {"latent", arch_.latent},
            {"hidden", arch_.hidden},
            {"hidden_layers", arch_.hidden_layers}}},
          {"activation", "tanh"},
          {"log_var_clamp", {kLogVarMin, kLogVarMax}},
          {"encoder", block_to_json(encoder_, encoder_params(all))},
          {"prior", block_to_json(prior_, prior_params(all))},
          {"decoder", block_to_json(decoder_, decoder_params(all))}};
}

CvaeModel CvaeModel::from_json(const nlohmann::json& j) {
  const auto& a = j.at("architecture");
  Architecture arch;
  arch.n_xobs = a.at("n_xobs").get<std::size_t>();
  arch.n_nu = a.at("n_nu").get<std::size_t>();
  arch.n_xhat = a.at("n_xhat").get<std::size_t>();
  arch.latent = a.at("latent").get<std::size_t>();
  arch.hidden = a.at("hidden").get<std::size_t>();
  arch.hidden_layers = a.at("hidden_layers").get<std::size_t>();
  if (j.at("activation").get<std::string>() != "tanh")
    throw SchemaError("unsupported activation '" + j.at("activation").get<std::string>() + "'");
  const auto clamp = j.at("log_var_clamp").get<std::vector<double>>();
  if (clamp.size() != 2 || clamp[0] != kLogVarMin || clamp[1] != kLogVarMax)
    throw SchemaError("checkpoint log-variance clamp differs from this build");
  CvaeModel m = initialize(arch, 0);
  std::span<double> all(m.params_);
  block_from_json(m.encoder_, j.at("encoder"), all.subspan(0, m.encoder_.n_params()), "encoder");
  block_from_json(m.prior_, j.at("prior"), all.subspan(m.encoder_.n_params(), m.prior_.n_params()),
                  "prior");
  block_from_json(m.decoder_, j.at("decoder"),
                  all.subspan(m.encoder_.n_params() + m.prior_.n_params()), "decoder");
  return m;
}

}  // namespace hb::cvae
