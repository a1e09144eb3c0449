// heartbrain: generate -> train -> evaluate -> sweep.
// Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure.

#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "heartbrain/errors.hpp"
#include "heartbrain/pipeline.hpp"

namespace pl = hb::pipeline;

namespace {

void log(const std::string& msg) { std::cerr << "[heartbrain] " << msg << '\n'; }

void report(const pl::RunManifest& m) {
  for (const auto& [path, hash] : m.outputs) log("wrote " + path + "  sha256 " + hash.substr(0, 16));
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f", m.duration_seconds);
  log(m.command + " finished in " + buf + " s");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint CVAE and GP emulator pipeline on a synthetic heart-brain cohort"};
  app.require_subcommand(1);

  pl::GenerateOptions gen;
  auto* generate = app.add_subcommand("generate", "Write a synthetic cohort CSV");
  generate->add_option("--n", gen.n, "Number of subjects (at least 50)")->capture_default_str();
  generate->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();
  generate->add_option("--out", gen.out, "Output CSV path")->capture_default_str();

  pl::TrainOptions tr;
  std::string config_path;
  auto* train = app.add_subcommand("train", "Split, standardize and train the joint model");
  train->add_option("--cohort", tr.cohort, "Cohort CSV")->required()->check(CLI::ExistingFile);
  train->add_option("--n-complete", tr.n_complete, "Subjects with full cardiac data")->capture_default_str();
  train->add_option("--config", config_path, "JSON training config overrides")->check(CLI::ExistingFile);
  train->add_option("--seed", tr.seed, "Seed for the split and training")->capture_default_str();
  train->add_option("--out", tr.out, "Output directory")->capture_default_str();

  pl::EvaluateOptions ev;
  auto* evaluate = app.add_subcommand("evaluate", "Compare the joint model with baseline imputers");
  evaluate->add_option("--cohort", ev.cohort, "Cohort CSV used for training")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--checkpoint", ev.checkpoint, "checkpoint.json from train")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--samples", ev.samples, "Latent draws per subject")->capture_default_str();
  evaluate->add_option("--seed", ev.seed, "Seed for inference and KNN folds")->capture_default_str();
  evaluate->add_option("--out", ev.out, "Output directory")->capture_default_str();

  pl::SweepOptions sw;
  auto* sweep = app.add_subcommand("sweep", "Sweep one conditioning variable");
  sweep->add_option("--checkpoint", sw.checkpoint, "checkpoint.json from train")->required()->check(CLI::ExistingFile);
  sweep->add_option("--cohort", sw.cohort, "Cohort CSV used for training")->required()->check(CLI::ExistingFile);
  sweep->add_option("--variable", sw.variable, "age, bsa, brain_vol, vent_vol, wmh_vol or wmh_count")
      ->required();
  sweep->add_option("--points", sw.points, "Grid size")->capture_default_str();
  sweep->add_option("--samples", sw.samples, "Prior draws per grid point")->capture_default_str();
  sweep->add_option("--seed", sw.seed, "Seed for latent draws")->capture_default_str();
  sweep->add_option("--out", sw.out, "Output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*generate) {
      log("generating " + std::to_string(gen.n) + " subjects, seed " + std::to_string(gen.seed));
      report(pl::cmd_generate(gen));
    } else if (*train) {
      if (!config_path.empty()) tr.config = config_path;
      log("training on " + tr.cohort.string());
      report(pl::cmd_train(tr, [](const hb::joint::ElboRow& r) {
        if (r.epoch % 25 == 0) {
          char buf[160];
          std::snprintf(buf, sizeof buf, "epoch %zu  elbo %.4f  gp %.4f  recon %.4f  kl %.4f", r.epoch,
                        r.terms.total, r.terms.gp, r.terms.recon, r.terms.kl);
          log(buf);
        }
      }));
    } else if (*evaluate) {
      log("evaluating " + ev.checkpoint.string());
      report(pl::cmd_evaluate(ev));
    } else if (*sweep) {
      log("sweeping " + sw.variable);
      report(pl::cmd_sweep(sw));
    }
  } catch (const hb::ValidationError& e) {
    log(std::string("error: ") + e.what());
    return 1;
  } catch (const std::exception& e) {
    log(std::string("failure: ") + e.what());
    return 2;
  }
  return 0;
}
