#pragma once

// Staged experiment runner behind the command-line tool. Every stage reads
// the artifacts of the previous one from the output directory and writes its
// own atomically, so reruns with the same config and seed reproduce the same
// bytes.
//
//   <out>/data/<patient>_<modality>[_eval].szn      generate
//   <out>/models/<patient>_<modality>.sznm, _curve.csv   train
//   <out>/eval/<patient>_probs.csv, metrics.csv, metrics.json   evaluate
//   <out>/sim/trace.txt, report.json, decisions.csv   simulate
//   <out>/report/comparison.csv, comparison.json     report

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "seiznet/netsim.hpp"
#include "seiznet/nn.hpp"
#include "seiznet/predictor.hpp"
#include "seiznet/signal.hpp"

namespace seiznet::pipeline {

struct GeneratorBlock {
  signal::Separability separability = signal::Separability::Default;
  double imbalance_ratio = signal::kDefaultImbalanceRatio;
  std::uint32_t onset_count = 1;
  std::uint32_t eval_onset_count = 1;
  std::uint32_t sample_rate_hz = signal::kDefaultSampleRateHz;
  std::uint32_t ieeg_channels = 3;
  double horizon_s = signal::kDefaultHorizonSeconds;
  double exclusion_s = signal::kDefaultExclusionSeconds;
};

struct TrainingBlock {
  nn::TrainConfig train;
  nn::FocalLossConfig loss;
};

enum class NetworkSource : std::uint8_t { Oracle, Trained };

struct NetworkBlock {
  NetworkSource source = NetworkSource::Oracle;
  std::string patient;        // trained source: whose evaluation stream to replay
  std::string scenario_json;  // remaining keys, parsed by netsim::parse_scenario
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "out";
  std::vector<std::string> patients{"p01"};
  GeneratorBlock generator;
  signal::FilterConfig ecg_filters;
  signal::FilterConfig ieeg_filters;
  std::optional<nn::ModelSpec> model;  // unset: reference topology sized to the sample rate
  TrainingBlock training;
  predictor::FusionConfig fusion;
  NetworkBlock network;

  nn::ModelSpec model_spec() const;
  void validate() const;
};

/// Parses the JSON config; unknown keys are rejected. A relative out_dir is
/// used as given, so it resolves against the working directory.
PipelineConfig parse_config(std::string_view json_text);
PipelineConfig load_config(const std::filesystem::path& path);

/// Comma-separated patient ids, validated ([A-Za-z0-9_-]+).
std::vector<std::string> parse_patient_list(std::string_view list);

struct Paths {
  std::filesystem::path root;

  std::filesystem::path recording(const std::string& patient, signal::Modality m, bool eval) const;
  std::filesystem::path checkpoint(const std::string& patient, signal::Modality m) const;
  std::filesystem::path curve(const std::string& patient, signal::Modality m) const;
  std::filesystem::path probabilities(const std::string& patient) const;
  std::filesystem::path metrics_csv() const { return root / "eval" / "metrics.csv"; }
  std::filesystem::path metrics_json() const { return root / "eval" / "metrics.json"; }
  std::filesystem::path trace() const { return root / "sim" / "trace.txt"; }
  std::filesystem::path sim_report() const { return root / "sim" / "report.json"; }
  std::filesystem::path decisions() const { return root / "sim" / "decisions.csv"; }
  std::filesystem::path comparison_csv() const { return root / "report" / "comparison.csv"; }
  std::filesystem::path comparison_json() const { return root / "report" / "comparison.json"; }
};

/// Per-window probability streams of one patient's held-out recordings.
struct ProbabilityStreams {
  std::vector<signal::WindowClass> classes;
  std::vector<double> ecg;                // [step]
  std::vector<std::vector<double>> ieeg;  // [channel][step]
};

std::string probabilities_csv(const ProbabilityStreams& s);
ProbabilityStreams parse_probabilities_csv(std::string_view text);

/// One evaluation row; modality is ecg, ieeg or combined.
struct MetricsRow {
  std::string patient;
  std::string modality;
  std::string rule;  // fusion rule for combined rows, "none" otherwise
  metrics::Summary summary;
};

inline constexpr std::string_view kMetricsHeader =
    "patient,modality,rule,tp,tn,fp,fn,sensitivity,specificity,accuracy,fph,auc";

std::string metrics_csv_line(const MetricsRow& row);

/// Stream-level evaluation of one patient: threshold, channel and time
/// voting per modality, fusion under `fusion.modality_rule`. Excluded
/// windows feed the voting buffers but are never scored.
std::vector<MetricsRow> evaluate_streams(const std::string& patient, const ProbabilityStreams& streams,
                                         const predictor::FusionConfig& fusion);

void cmd_generate(const PipelineConfig& cfg);
void cmd_train(const PipelineConfig& cfg);
void cmd_evaluate(const PipelineConfig& cfg);
netsim::SimReport cmd_simulate(const PipelineConfig& cfg);
void cmd_report(const PipelineConfig& cfg);

/// Scenario the simulate stage runs (seed and fusion taken from the
/// pipeline config; trained sources loaded from the evaluate stage).
netsim::Scenario build_scenario(const PipelineConfig& cfg);

}  // namespace seiznet::pipeline
