#pragma once

// File-based commands: generate -> train -> evaluate -> sweep. Each command
// reads and writes plain CSV/JSON artifacts and leaves a manifest with
// SHA-256 hashes of everything it touched.
//
// Seeds: generate passes --seed straight to the cohort generator. The other
// commands derive their streams as Rng::derive(seed, tag):
//   train     21 split, 22 model
//   evaluate  31 inference draws, 32 KNN fold assignment
//   sweep     41 latent draws

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "heartbrain/baselines.hpp"
#include "heartbrain/joint_trainer.hpp"
#include "json.hpp"

namespace hb::pipeline {

inline constexpr std::size_t kMinCohortSize = 50;

namespace tag {
inline constexpr std::uint64_t kSplit = 21;
inline constexpr std::uint64_t kTrain = 22;
inline constexpr std::uint64_t kInfer = 31;
inline constexpr std::uint64_t kKnnFolds = 32;
inline constexpr std::uint64_t kSweep = 41;
}  // namespace tag

std::string sha256_hex(std::string_view bytes);
// Throws IoError when the file cannot be read.
std::string sha256_file(const std::filesystem::path& path);

struct RunManifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::map<std::string, std::string> inputs;   // path -> sha256
  std::map<std::string, std::string> outputs;  // path -> sha256
  double duration_seconds = 0.0;

  void add_input(const std::filesystem::path& p) { inputs[p.string()] = sha256_file(p); }
  void add_output(const std::filesystem::path& p) { outputs[p.string()] = sha256_file(p); }

  nlohmann::json to_json() const;
  void write(const std::filesystem::path& path) const;
};

struct GenerateOptions {
  std::size_t n = 3445;
  std::uint64_t seed = 7;
  std::filesystem::path out = "cohort.csv";
};

struct TrainOptions {
  std::filesystem::path cohort;
  std::size_t n_complete = 2309;
  std::optional<std::filesystem::path> config;  // JSON overrides of TrainConfig
  std::uint64_t seed = 7;
  std::filesystem::path out = "train";
};

struct EvaluateOptions {
  std::filesystem::path cohort;
  std::filesystem::path checkpoint;
  std::size_t samples = 8;
  std::uint64_t seed = 7;
  std::filesystem::path out = "evaluate";
};

struct SweepOptions {
  std::filesystem::path cohort;
  std::filesystem::path checkpoint;
  std::string variable;
  std::size_t points = 20;
  std::size_t samples = 256;
  std::uint64_t seed = 7;
  std::filesystem::path out = "sweep";
};

// Writes the cohort CSV and <out>.manifest.json.
RunManifest cmd_generate(const GenerateOptions& o);

// Writes checkpoint.json, elbo.csv, transform_log.json and manifest.json under `out`.
RunManifest cmd_train(const TrainOptions& o, const joint::EpochCallback& on_epoch = nullptr);

// Writes squared_errors.csv, summary.json, predictions.csv and manifest.json under `out`.
RunManifest cmd_evaluate(const EvaluateOptions& o);

// Writes params_/loops_/measurements_<variable>.csv and manifest.json under `out`.
RunManifest cmd_sweep(const SweepOptions& o);

// The partition a checkpoint was trained on, recovered from its metadata after
// checking the cohort hash. Throws ValidationError on a mismatch.
cohort::SplitResult recover_split(const joint::JointModel& model, const std::filesystem::path& cohort_csv);

}  // namespace hb::pipeline
