#include "heartbrain/pipeline.hpp"

#include <openssl/evp.h>

#include <array>
#include <chrono>
#include <cmath>
#include <fstream>
#include <memory>
#include <numeric>

#include "heartbrain/cohort.hpp"
#include "heartbrain/errors.hpp"
#include "heartbrain/explorer.hpp"
#include "heartbrain/format.hpp"
#include "heartbrain/random.hpp"

namespace hb::pipeline {

namespace {

using Clock = std::chrono::steady_clock;

struct DigestCtx {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx{EVP_MD_CTX_new(), &EVP_MD_CTX_free};
  DigestCtx() {
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
      throw RuntimeFailure("SHA-256 initialization failed");
  }
  void update(const void* data, std::size_t n) {
    if (EVP_DigestUpdate(ctx.get(), data, n) != 1) throw RuntimeFailure("SHA-256 update failed");
  }
  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx.get(), md.data(), &len) != 1) throw RuntimeFailure("SHA-256 finalization failed");
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
      out += kHex[md[i] >> 4];
      out += kHex[md[i] & 15];
    }
    return out;
  }
};

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

DenseMatrix hcat(const DenseMatrix& a, const DenseMatrix& b) {
  DenseMatrix out(a.rows(), a.cols() + b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    std::copy(a.row(r).begin(), a.row(r).end(), out.row(r).begin());
    std::copy(b.row(r).begin(), b.row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(a.cols()));
  }
  return out;
}

// Physical-unit predictions mapped through the forward transforms.
template <std::size_t N>
DenseMatrix to_standard(const DenseMatrix& physical, const std::array<std::string_view, N>& names,
                        const cohort::TransformLog& log) {
  DenseMatrix out(physical.rows(), N);
  for (std::size_t r = 0; r < physical.rows(); ++r)
    for (std::size_t c = 0; c < N; ++c) out(r, c) = log.forward(names[c], physical(r, c));
  return out;
}

template <std::size_t N>
std::vector<std::string> names_of(const std::array<std::string_view, N>& names) {
  return {names.begin(), names.end()};
}

void write_predictions(const std::filesystem::path& path, const std::vector<std::int64_t>& ids,
                       const joint::InferResult& inf) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "subject_id";
  for (auto n : cohort::kXHat) out << ',' << n << "_mean," << n << "_std";
  for (auto n : cohort::kY) out << ',' << n << "_mean," << n << "_std";
  out << '\n';
  for (std::size_t r = 0; r < ids.size(); ++r) {
    out << ids[r];
    for (std::size_t c = 0; c < cohort::kXHat.size(); ++c)
      out << ',' << format_double(inf.x_hat_mean(r, c)) << ',' << format_double(inf.x_hat_std(r, c));
    for (std::size_t c = 0; c < cohort::kY.size(); ++c)
      out << ',' << format_double(inf.y_mean(r, c)) << ',' << format_double(inf.y_std(r, c));
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  DigestCtx d;
  d.update(bytes.data(), bytes.size());
  return d.hex();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for hashing");
  DigestCtx d;
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    d.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  if (in.bad()) throw IoError("failed reading " + path.string());
  return d.hex();
}

nlohmann::json RunManifest::to_json() const {
  return {{"command", command}, {"config", config},   {"seed", seed},
          {"inputs", inputs},   {"outputs", outputs}, {"duration_seconds", duration_seconds}};
}

void RunManifest::write(const std::filesystem::path& path) const { write_json(path, to_json()); }

RunManifest cmd_generate(const GenerateOptions& o) {
  const auto t0 = Clock::now();
  if (o.n < kMinCohortSize)
    throw ValidationError("--n must be at least " + std::to_string(kMinCohortSize) + ", got " +
                          std::to_string(o.n));
  if (o.out.has_parent_path()) ensure_dir(o.out.parent_path());
  const auto table = cohort::generate_cohort(o.n, o.seed);
  cohort::write_csv(table, o.out);

  RunManifest m;
  m.command = "generate";
  m.seed = o.seed;
  m.config = {{"n", o.n}, {"seed", o.seed}, {"out", o.out.string()}};
  m.add_output(o.out);
  m.duration_seconds = seconds_since(t0);
  m.write(o.out.string() + ".manifest.json");
  return m;
}

RunManifest cmd_train(const TrainOptions& o, const joint::EpochCallback& on_epoch) {
  const auto t0 = Clock::now();
  joint::TrainConfig config;
  if (o.config) {
    std::ifstream in(*o.config, std::ios::binary);
    if (!in) throw IoError("cannot open training config " + o.config->string());
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigurationError("training config " + o.config->string() + " is not valid JSON: " + e.what());
    }
    config = joint::TrainConfig::from_json(j);
  }
  config.seed = Rng::derive(o.seed, tag::kTrain);
  config.validate();

  const auto table = cohort::read_csv(o.cohort);
  if (o.n_complete < 2 || o.n_complete >= table.n_subjects())
    throw ValidationError("--n-complete must be in [2, " + std::to_string(table.n_subjects()) + "), got " +
                          std::to_string(o.n_complete));
  const std::uint64_t split_seed = Rng::derive(o.seed, tag::kSplit);
  const auto parts = cohort::split(table, o.n_complete, split_seed);
  const auto rows = all_rows(parts.complete.n_subjects());
  const auto train_table = cohort::standardize(cohort::box_cox_columns(parts.complete, rows), rows);

  ensure_dir(o.out);
  const auto ckpt = o.out / "checkpoint.json";
  joint::TrainResult result;
  try {
    result = joint::train(train_table, config, on_epoch);
  } catch (const joint::TrainingDiverged& e) {
    e.last_good().save(o.out / "checkpoint_last_good.json");
    throw;
  }
  result.model.metadata = {{"cohort_sha256", sha256_file(o.cohort)},
                           {"n_subjects", table.n_subjects()},
                           {"n_complete", o.n_complete},
                           {"split_seed", split_seed},
                           {"seed", o.seed}};
  result.model.save(ckpt);
  result.report.write_csv(o.out / "elbo.csv");
  cohort::write_transform_log(train_table.transform_log, o.out / "transform_log.json");

  RunManifest m;
  m.command = "train";
  m.seed = o.seed;
  m.config = {{"cohort", o.cohort.string()},
              {"n_complete", o.n_complete},
              {"seed", o.seed},
              {"train", config.to_json()},
              {"out", o.out.string()}};
  m.add_input(o.cohort);
  if (o.config) m.add_input(*o.config);
  for (const char* f : {"checkpoint.json", "elbo.csv", "transform_log.json"}) m.add_output(o.out / f);
  m.duration_seconds = seconds_since(t0);
  m.write(o.out / "manifest.json");
  return m;
}

cohort::SplitResult recover_split(const joint::JointModel& model, const std::filesystem::path& cohort_csv) {
  const auto& meta = model.metadata;
  if (!meta.contains("cohort_sha256") || !meta.contains("n_complete") || !meta.contains("split_seed"))
    throw ValidationError("checkpoint lacks the cohort hash and split metadata");
  const std::string hash = sha256_file(cohort_csv);
  if (hash != meta["cohort_sha256"].get<std::string>())
    throw ValidationError("cohort " + cohort_csv.string() + " (sha256 " + hash +
                          ") is not the cohort this checkpoint was trained on (sha256 " +
                          meta["cohort_sha256"].get<std::string>() + ")");
  const auto table = cohort::read_csv(cohort_csv);
  return cohort::split(table, meta["n_complete"].get<std::size_t>(), meta["split_seed"].get<std::uint64_t>());
}

RunManifest cmd_evaluate(const EvaluateOptions& o) {
  const auto t0 = Clock::now();
  if (o.samples < 1) throw ConfigurationError("--samples must be at least 1");
  const auto model = joint::JointModel::load(o.checkpoint);
  if (!model.trained()) throw ValidationError("checkpoint " + o.checkpoint.string() + " is not trained");
  const auto parts = recover_split(model, o.cohort);
  const auto& log = model.transform_log;

  const auto train = joint::Dataset::from_table(cohort::apply_transforms(parts.complete, log), true);
  const auto test = joint::Dataset::from_table(cohort::apply_transforms(parts.incomplete, log), false);
  const auto truth_t = cohort::apply_transforms(parts.incomplete_truth, log);
  const DenseMatrix truth_xhat = truth_t.matrix(cohort::kXHat);
  const DenseMatrix truth_y = truth_t.matrix(cohort::kY);
  const std::size_t n_test = test.size();

  const auto inf = joint::infer(model, test, o.samples, Rng::derive(o.seed, tag::kInfer));

  const DenseMatrix train_features = hcat(train.x_obs, train.nu);
  const DenseMatrix test_features = hcat(test.x_obs, test.nu);
  const auto knn = baselines::select_k(train_features, train.x_hat, baselines::kDefaultKGrid, 10,
                                       Rng::derive(o.seed, tag::kKnnFolds));

  const auto ids = parts.incomplete.subject_ids;
  const auto xhat_names = names_of(cohort::kXHat);
  auto result = baselines::mse_table(
      truth_xhat, xhat_names,
      {{"joint", to_standard(inf.x_hat_mean, cohort::kXHat, log)},
       {"mean", baselines::impute_mean(train.x_hat, n_test)},
       {"median", baselines::impute_median(train.x_hat, n_test)},
       {"knn", baselines::impute_knn(train_features, train.x_hat, test_features, knn.k)}},
      ids);
  const auto emulation = baselines::mse_table(truth_y, names_of(cohort::kY),
                                              {{"joint", to_standard(inf.y_mean, cohort::kY, log)}}, ids);
  result.series.insert(result.series.end(), emulation.series.begin(), emulation.series.end());
  baselines::compare_methods(result, "joint", xhat_names, 0.05);

  // Emulation quality in physical units.
  const DenseMatrix phys_y = parts.incomplete_truth.matrix(cohort::kY);
  nlohmann::json r2 = nlohmann::json::object(), coverage = nlohmann::json::object();
  for (std::size_t j = 0; j < cohort::kY.size(); ++j) {
    double mean = 0.0;
    for (std::size_t r = 0; r < n_test; ++r) mean += phys_y(r, j);
    mean /= static_cast<double>(n_test);
    double sse = 0.0, sst = 0.0;
    std::size_t inside = 0;
    for (std::size_t r = 0; r < n_test; ++r) {
      const double err = inf.y_mean(r, j) - phys_y(r, j);
      sse += err * err;
      sst += (phys_y(r, j) - mean) * (phys_y(r, j) - mean);
      inside += std::abs(err) <= 1.96 * inf.y_std(r, j);
    }
    const std::string name(cohort::kY[j]);
    r2[name] = 1.0 - sse / sst;
    coverage[name] = static_cast<double>(inside) / static_cast<double>(n_test);
  }
  result.notes = {{"n_train", train.size()},
                  {"n_test", n_test},
                  {"samples", o.samples},
                  {"knn", {{"k", knn.k}, {"grid", knn.grid}, {"cv_mse", knn.cv_mse}}},
                  {"emulation_r2", r2},
                  {"emulation_coverage95", coverage},
                  {"units", "squared errors in standardized units"}};

  ensure_dir(o.out);
  result.write_csv(o.out / "squared_errors.csv");
  write_json(o.out / "summary.json", result.summary());
  write_predictions(o.out / "predictions.csv", ids, inf);

  RunManifest m;
  m.command = "evaluate";
  m.seed = o.seed;
  m.config = {{"cohort", o.cohort.string()},
              {"checkpoint", o.checkpoint.string()},
              {"samples", o.samples},
              {"seed", o.seed},
              {"out", o.out.string()}};
  m.add_input(o.cohort);
  m.add_input(o.checkpoint);
  for (const char* f : {"squared_errors.csv", "summary.json", "predictions.csv"}) m.add_output(o.out / f);
  m.duration_seconds = seconds_since(t0);
  m.write(o.out / "manifest.json");
  return m;
}

RunManifest cmd_sweep(const SweepOptions& o) {
  const auto t0 = Clock::now();
  explorer::SweepSpec spec;
  spec.variable = o.variable;
  spec.n_points = o.points;
  spec.n_mc = o.samples;
  spec.seed = Rng::derive(o.seed, tag::kSweep);
  spec.validate();

  const auto model = joint::JointModel::load(o.checkpoint);
  if (!model.trained()) throw ValidationError("checkpoint " + o.checkpoint.string() + " is not trained");
  const auto parts = recover_split(model, o.cohort);
  const auto result = explorer::sweep(model, parts.complete, spec);
  explorer::export_sweep(result, o.out);

  RunManifest m;
  m.command = "sweep";
  m.seed = o.seed;
  m.config = {{"cohort", o.cohort.string()},
              {"checkpoint", o.checkpoint.string()},
              {"variable", o.variable},
              {"points", o.points},
              {"samples", o.samples},
              {"seed", o.seed},
              {"out", o.out.string()}};
  m.add_input(o.cohort);
  m.add_input(o.checkpoint);
  for (const char* prefix : {"params_", "loops_", "measurements_"})
    m.add_output(o.out / (prefix + o.variable + ".csv"));
  m.duration_seconds = seconds_since(t0);
  m.write(o.out / "manifest.json");
  return m;
}

}  // namespace hb::pipeline
