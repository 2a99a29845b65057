#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "seiznet/error.hpp"
#include "seiznet/metrics.hpp"
#include "seiznet/netsim.hpp"
#include "seiznet/nn.hpp"
#include "seiznet/pipeline.hpp"
#include "seiznet/predictor.hpp"
#include "seiznet/signal.hpp"

namespace py = pybind11;
using namespace seiznet;

namespace {

metrics::ConfusionMatrix cm_from(std::uint64_t tp, std::uint64_t tn, std::uint64_t fp, std::uint64_t fn) {
  return {tp, tn, fp, fn};
}

py::dict recording_dict(const signal::Recording& rec) {
  const std::size_t ch = rec.channel_count(), n = rec.sample_count();
  py::array_t<float> samples({ch, n});
  auto view = samples.mutable_unchecked<2>();
  for (std::size_t c = 0; c < ch; ++c)
    for (std::size_t i = 0; i < n; ++i) view(c, i) = rec.samples[c][i];
  py::dict d;
  d["modality"] = std::string(signal::to_string(rec.modality));
  d["sample_rate_hz"] = rec.sample_rate_hz;
  d["samples"] = samples;
  d["seizure_onsets"] = rec.seizure_onsets;
  return d;
}

}  // namespace

PYBIND11_MODULE(_seiznet, m) {
  m.doc() = "Seizure prediction and intra-body network simulation core";

  auto base = py::register_exception<Error>(m, "SeizNetError");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DependencyError>(m, "DependencyError", base.ptr());
  py::register_exception<UndefinedMetricError>(m, "UndefinedMetricError", base.ptr());
  py::register_exception<AlignmentError>(m, "AlignmentError", base.ptr());
  py::register_exception<DecodeError>(m, "DecodeError", base.ptr());

  m.def(
      "focal_loss",
      [](double p, int y, double alpha, double gamma) { return nn::focal_loss(p, y, {alpha, gamma}); },
      py::arg("p"), py::arg("y"), py::arg("alpha") = 0.2, py::arg("gamma") = 2.0);
  m.def(
      "focal_loss_grad",
      [](double p, int y, double alpha, double gamma) { return nn::focal_loss_grad(p, y, {alpha, gamma}); },
      py::arg("p"), py::arg("y"), py::arg("alpha") = 0.2, py::arg("gamma") = 2.0);

  m.def(
      "time_vote",
      [](const std::vector<bool>& history, std::size_t capacity) {
        predictor::DecisionBuffer b(capacity);
        for (bool v : history) b.push(v);
        return predictor::time_vote(b);
      },
      py::arg("history"), py::arg("capacity") = predictor::kDefaultTimeWindow,
      "Majority over the most recent `capacity` decisions; false until the buffer is full.");
  m.def(
      "channel_vote",
      [](const std::vector<std::uint8_t>& decisions) { return predictor::channel_vote(decisions); },
      py::arg("decisions"));
  m.def(
      "fuse",
      [](bool ecg, bool ieeg, const std::string& rule) {
        return predictor::fuse_modalities(ecg, ieeg, predictor::parse_modality_rule(rule));
      },
      py::arg("ecg"), py::arg("ieeg"), py::arg("rule") = "and");

  m.def("sensitivity", [](std::uint64_t tp, std::uint64_t tn, std::uint64_t fp, std::uint64_t fn) {
    return metrics::sensitivity(cm_from(tp, tn, fp, fn));
  }, py::arg("tp"), py::arg("tn"), py::arg("fp"), py::arg("fn"));
  m.def("specificity", [](std::uint64_t tp, std::uint64_t tn, std::uint64_t fp, std::uint64_t fn) {
    return metrics::specificity(cm_from(tp, tn, fp, fn));
  }, py::arg("tp"), py::arg("tn"), py::arg("fp"), py::arg("fn"));
  m.def("fpr_per_hour", [](std::uint64_t tp, std::uint64_t tn, std::uint64_t fp, std::uint64_t fn) {
    return metrics::fpr_per_hour(cm_from(tp, tn, fp, fn));
  }, py::arg("tp"), py::arg("tn"), py::arg("fp"), py::arg("fn"));
  m.def(
      "auc",
      [](const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
        return metrics::auc(scores, labels);
      },
      py::arg("scores"), py::arg("labels"));

  m.def(
      "generate_recording",
      [](const std::string& modality, std::uint64_t seed, double imbalance_ratio, std::uint32_t onset_count,
         std::uint32_t sample_rate_hz, std::size_t channels, const std::string& separability, double horizon_s,
         double exclusion_s) {
        const auto mod = signal::parse_modality(modality);
        auto cfg = signal::GeneratorConfig::preset(mod, signal::parse_separability(separability));
        cfg.seed = seed;
        cfg.imbalance_ratio = imbalance_ratio;
        cfg.onset_count = onset_count;
        cfg.sample_rate_hz = sample_rate_hz;
        cfg.horizon_s = horizon_s;
        cfg.exclusion_s = exclusion_s;
        return recording_dict(signal::generate_recording(cfg, mod, channels, signal::recording_duration_for(cfg)));
      },
      py::arg("modality"), py::arg("seed") = 0, py::arg("imbalance_ratio") = signal::kDefaultImbalanceRatio,
      py::arg("onset_count") = 1, py::arg("sample_rate_hz") = signal::kDefaultSampleRateHz, py::arg("channels") = 1,
      py::arg("separability") = "default", py::arg("horizon_s") = signal::kDefaultHorizonSeconds,
      py::arg("exclusion_s") = signal::kDefaultExclusionSeconds);

  m.def(
      "simulate",
      [](const std::string& scenario_json) {
        const auto sc = netsim::parse_scenario(scenario_json);
        py::gil_scoped_release release;
        const auto r = netsim::run_simulation(sc);
        return std::make_pair(r.to_json(), r.trace);
      },
      py::arg("scenario_json") = "{}",
      "Runs one scenario; returns (report JSON text, event trace text).");

  m.def(
      "run_stage",
      [](const std::string& stage, const std::filesystem::path& config) {
        const auto cfg = pipeline::load_config(config);
        py::gil_scoped_release release;
        if (stage == "generate") {
          pipeline::cmd_generate(cfg);
        } else if (stage == "train") {
          pipeline::cmd_train(cfg);
        } else if (stage == "evaluate") {
          pipeline::cmd_evaluate(cfg);
        } else if (stage == "simulate") {
          pipeline::cmd_simulate(cfg);
        } else if (stage == "report") {
          pipeline::cmd_report(cfg);
        } else {
          throw ConfigError("unknown stage '" + stage + "'");
        }
      },
      py::arg("stage"), py::arg("config"));
}
