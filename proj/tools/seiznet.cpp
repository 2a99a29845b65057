// seiznet: batch runner for the seizure-prediction pipeline.
//
//   seiznet generate|train|evaluate|simulate|report [--config PATH] [--seed N]
//           [--out DIR] [--patients a,b] [--fusion and|or|ecg|ieeg]
//
// Exit status: 0 success, 1 runtime error, 2 configuration error,
// 3 missing artifacts from an earlier stage.

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "seiznet/error.hpp"
#include "seiznet/pipeline.hpp"

namespace {

enum ExitCode { kOk = 0, kRuntimeError = 1, kConfigError = 2, kDependencyError = 3 };

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("seiznet");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("SEIZNET_LOG")) {
    const auto level = spdlog::level::from_str(env);
    // from_str maps unknown names to "off"; only honor it when asked for.
    if (level != spdlog::level::off || std::string(env) == "off") {
      spdlog::set_level(level);
    } else {
      spdlog::warn("ignoring unknown SEIZNET_LOG level '{}'", env);
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();

  CLI::App app{"Seizure prediction pipeline: synthetic data, CNN training, evaluation and network simulation"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string patients;
  std::string fusion;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "Global seed (overrides the config)");
    cmd->add_option("--out", out_dir, "Output directory (overrides the config)");
    cmd->add_option("--patients", patients, "Comma-separated patient ids (overrides the config)");
    cmd->add_option("--fusion", fusion, "Modality fusion rule")->check(CLI::IsMember({"and", "or", "ecg", "ieeg"}));
  };

  auto* gen = app.add_subcommand("generate", "Synthesize training and held-out recordings");
  auto* trn = app.add_subcommand("train", "Train per-patient ECG and iEEG models");
  auto* evl = app.add_subcommand("evaluate", "Score single-modality and fused predictors on held-out streams");
  auto* sim = app.add_subcommand("simulate", "Run the closed-loop network simulation");
  auto* rep = app.add_subcommand("report", "Aggregate per-patient metrics into the comparison table");
  for (auto* cmd : {gen, trn, evl, sim, rep}) add_common(cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  using namespace seiznet;
  try {
    auto cfg = config_path.empty() ? pipeline::PipelineConfig{} : pipeline::load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (!patients.empty()) cfg.patients = pipeline::parse_patient_list(patients);
    if (!fusion.empty()) cfg.fusion.modality_rule = predictor::parse_modality_rule(fusion);

    if (gen->parsed()) {
      pipeline::cmd_generate(cfg);
    } else if (trn->parsed()) {
      pipeline::cmd_train(cfg);
    } else if (evl->parsed()) {
      pipeline::cmd_evaluate(cfg);
    } else if (sim->parsed()) {
      const auto report = pipeline::cmd_simulate(cfg);
      std::cout << report.to_json() << "\n";
    } else if (rep->parsed()) {
      pipeline::cmd_report(cfg);
    }
  } catch (const ConfigError& e) {
    spdlog::error("configuration error: {}", e.what());
    return kConfigError;
  } catch (const DependencyError& e) {
    spdlog::error("{}", e.what());
    return kDependencyError;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kRuntimeError;
  }
  return kOk;
}
