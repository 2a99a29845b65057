#include "seiznet/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "seiznet/binary_io.hpp"
#include "seiznet/error.hpp"
#include "seiznet/metrics.hpp"
#include "seiznet/random.hpp"

namespace seiznet::pipeline {

using nlohmann::json;
using signal::Modality;

namespace {

constexpr Modality kModalities[] = {Modality::ECG, Modality::IEEG};

void check_keys(const json& j, std::initializer_list<std::string_view> known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read_into(const json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

signal::FilterConfig parse_filters(const json& j, const std::string& where) {
  check_keys(j, {"notch_hz", "band", "notch_q"}, where);
  signal::FilterConfig f;
  if (j.contains("notch_hz") && !j.at("notch_hz").is_null()) f.notch_hz = j.at("notch_hz").get<double>();
  if (j.contains("band") && !j.at("band").is_null()) {
    const auto b = j.at("band").get<std::vector<double>>();
    if (b.size() != 2) throw ConfigError(where + ".band needs [lo_hz, hi_hz]");
    f.band = std::make_pair(b[0], b[1]);
  }
  read_into(j, "notch_q", f.notch_q);
  return f;
}

std::uint64_t stage_seed(std::uint64_t seed, std::string_view stage, std::string_view patient = {},
                         std::string_view modality = {}) {
  std::string tag(stage);
  tag += '/';
  tag += patient;
  tag += '/';
  tag += modality;
  return derive_seed(seed, stable_hash(tag));
}

std::string fmt(double v, const char* spec = "%.9g") {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

void require_file(const std::filesystem::path& p, std::string_view stage) {
  if (!std::filesystem::exists(p))
    throw DependencyError("missing " + p.string() + ": run `seiznet " + std::string(stage) + "` first");
}

const signal::FilterConfig& filters_for(const PipelineConfig& cfg, Modality m) {
  return m == Modality::ECG ? cfg.ecg_filters : cfg.ieeg_filters;
}

bool filters_active(const signal::FilterConfig& f) {
  return f.notch_hz.has_value() || f.band.has_value();
}

std::string modality_name(Modality m) {
  return std::string(signal::to_string(m));
}

}  // namespace

nn::ModelSpec PipelineConfig::model_spec() const {
  if (model) return *model;
  return nn::ModelSpec::reference(1, static_cast<std::uint32_t>(signal::kWindowSeconds * generator.sample_rate_hz));
}

void PipelineConfig::validate() const {
  if (patients.empty()) throw ConfigError("at least one patient is required");
  for (const auto& p : patients) parse_patient_list(p);
  if (generator.ieeg_channels == 0) throw ConfigError("ieeg_channels must be positive");
  if (generator.onset_count == 0 || generator.eval_onset_count == 0)
    throw ConfigError("onset counts must be positive");
  for (auto m : kModalities) {
    auto g = signal::GeneratorConfig::preset(m, generator.separability);
    g.sample_rate_hz = generator.sample_rate_hz;
    g.imbalance_ratio = generator.imbalance_ratio;
    g.horizon_s = generator.horizon_s;
    g.exclusion_s = generator.exclusion_s;
    g.validate();
  }
  const auto spec = model_spec();
  spec.validate();
  if (spec.input_channels != 1) throw ConfigError("per-channel models take one input channel");
  if (spec.input_length != static_cast<std::uint32_t>(signal::kWindowSeconds * generator.sample_rate_hz))
    throw ConfigError("model input_length must equal 4 s x sample_rate_hz = " +
                      std::to_string(static_cast<std::uint32_t>(signal::kWindowSeconds * generator.sample_rate_hz)));
  training.train.validate();
  training.loss.validate();
  fusion.validate();
}

std::vector<std::string> parse_patient_list(std::string_view list) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    const auto end = std::min(list.find(',', start), list.size());
    std::string id(list.substr(start, end - start));
    if (id.empty()) throw ConfigError("empty patient id in list '" + std::string(list) + "'");
    for (char c : id) {
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'))
        throw ConfigError("patient id '" + id + "' may only contain letters, digits, '_' and '-'");
    }
    if (std::find(out.begin(), out.end(), id) != out.end()) throw ConfigError("duplicate patient id '" + id + "'");
    out.push_back(std::move(id));
    start = end + 1;
  }
  return out;
}

PipelineConfig parse_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j, {"seed", "out_dir", "patients", "generator", "preprocess", "model", "training", "fusion", "network"},
             "config");
  PipelineConfig cfg;
  try {
    read_into(j, "seed", cfg.seed);
    if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();
    read_into(j, "patients", cfg.patients);

    if (j.contains("generator")) {
      const auto& g = j.at("generator");
      check_keys(g,
                 {"separability", "imbalance_ratio", "onset_count", "eval_onset_count", "sample_rate_hz",
                  "ieeg_channels", "horizon_s", "exclusion_s"},
                 "generator");
      if (g.contains("separability")) cfg.generator.separability = signal::parse_separability(g.at("separability").get<std::string>());
      read_into(g, "imbalance_ratio", cfg.generator.imbalance_ratio);
      read_into(g, "onset_count", cfg.generator.onset_count);
      read_into(g, "eval_onset_count", cfg.generator.eval_onset_count);
      read_into(g, "sample_rate_hz", cfg.generator.sample_rate_hz);
      read_into(g, "ieeg_channels", cfg.generator.ieeg_channels);
      read_into(g, "horizon_s", cfg.generator.horizon_s);
      read_into(g, "exclusion_s", cfg.generator.exclusion_s);
    }
    if (j.contains("preprocess")) {
      const auto& p = j.at("preprocess");
      check_keys(p, {"ecg", "ieeg"}, "preprocess");
      if (p.contains("ecg")) cfg.ecg_filters = parse_filters(p.at("ecg"), "preprocess.ecg");
      if (p.contains("ieeg")) cfg.ieeg_filters = parse_filters(p.at("ieeg"), "preprocess.ieeg");
    }
    if (j.contains("model")) {
      const auto& m = j.at("model");
      check_keys(m, {"conv_blocks", "dense_widths"}, "model");
      nn::ModelSpec spec;
      spec.input_length = static_cast<std::uint32_t>(signal::kWindowSeconds * cfg.generator.sample_rate_hz);
      spec = nn::ModelSpec::reference(1, spec.input_length);
      if (m.contains("conv_blocks")) {
        spec.conv_blocks.clear();
        for (const auto& b : m.at("conv_blocks")) {
          check_keys(b, {"filters", "kernel_size", "pool_width"}, "model.conv_blocks entry");
          nn::ConvBlockSpec block;
          read_into(b, "filters", block.filters);
          read_into(b, "kernel_size", block.kernel_size);
          read_into(b, "pool_width", block.pool_width);
          spec.conv_blocks.push_back(block);
        }
      }
      read_into(m, "dense_widths", spec.dense_widths);
      cfg.model = spec;
    }
    if (j.contains("training")) {
      const auto& t = j.at("training");
      check_keys(t,
                 {"optimizer", "learning_rate", "batch_size", "max_epochs", "patience", "bn_momentum", "focal_alpha",
                  "focal_gamma"},
                 "training");
      auto& tc = cfg.training.train;
      if (t.contains("optimizer")) tc.optimizer = nn::parse_optimizer(t.at("optimizer").get<std::string>());
      read_into(t, "learning_rate", tc.learning_rate);
      read_into(t, "batch_size", tc.batch_size);
      read_into(t, "max_epochs", tc.max_epochs);
      read_into(t, "patience", tc.patience);
      read_into(t, "bn_momentum", tc.bn_momentum);
      read_into(t, "focal_alpha", cfg.training.loss.alpha);
      read_into(t, "focal_gamma", cfg.training.loss.gamma);
    }
    if (j.contains("fusion")) {
      const auto& f = j.at("fusion");
      check_keys(f, {"threshold", "time_window", "rule"}, "fusion");
      read_into(f, "threshold", cfg.fusion.threshold);
      read_into(f, "time_window", cfg.fusion.time_window);
      if (f.contains("rule")) cfg.fusion.modality_rule = predictor::parse_modality_rule(f.at("rule").get<std::string>());
    }
    if (j.contains("network")) {
      json n = j.at("network");
      if (!n.is_object()) throw ConfigError("network must be a JSON object");
      if (n.contains("classifier")) {
        const auto src = n.at("classifier").get<std::string>();
        if (src == "oracle") {
          cfg.network.source = NetworkSource::Oracle;
        } else if (src == "trained") {
          cfg.network.source = NetworkSource::Trained;
        } else {
          throw ConfigError("network.classifier must be 'oracle' or 'trained'");
        }
        n.erase("classifier");
      }
      if (n.contains("patient")) {
        cfg.network.patient = n.at("patient").get<std::string>();
        n.erase("patient");
      }
      for (const char* owned : {"seed", "fusion"}) {
        if (n.contains(owned))
          throw ConfigError(std::string("network.") + owned + " is set from the top-level config; remove it");
      }
      cfg.network.scenario_json = n.dump();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::filesystem::path Paths::recording(const std::string& patient, Modality m, bool eval) const {
  return root / "data" / (patient + "_" + modality_name(m) + (eval ? "_eval" : "") + ".szn");
}

std::filesystem::path Paths::checkpoint(const std::string& patient, Modality m) const {
  return root / "models" / (patient + "_" + modality_name(m) + ".sznm");
}

std::filesystem::path Paths::curve(const std::string& patient, Modality m) const {
  return root / "models" / (patient + "_" + modality_name(m) + "_curve.csv");
}

std::filesystem::path Paths::probabilities(const std::string& patient) const {
  return root / "eval" / (patient + "_probs.csv");
}

// --------------------------------------------------------------------------
// Probability stream files

namespace {

char class_code(signal::WindowClass c) {
  switch (c) {
    case signal::WindowClass::Interictal:
      return 'I';
    case signal::WindowClass::Preictal:
      return 'P';
    case signal::WindowClass::Excluded:
      return 'X';
  }
  return '?';
}

signal::WindowClass parse_class(char c) {
  switch (c) {
    case 'I':
      return signal::WindowClass::Interictal;
    case 'P':
      return signal::WindowClass::Preictal;
    case 'X':
      return signal::WindowClass::Excluded;
    default:
      throw FormatError(std::string("unknown window class '") + c + "'", 0);
  }
}

}  // namespace

std::string probabilities_csv(const ProbabilityStreams& s) {
  std::string out = "step,class,ecg";
  for (std::size_t c = 0; c < s.ieeg.size(); ++c) out += ",ieeg_" + std::to_string(c);
  out += '\n';
  for (std::size_t k = 0; k < s.classes.size(); ++k) {
    out += std::to_string(k);
    out += ',';
    out += class_code(s.classes[k]);
    out += ',';
    out += fmt(s.ecg[k]);
    for (const auto& ch : s.ieeg) {
      out += ',';
      out += fmt(ch[k]);
    }
    out += '\n';
  }
  return out;
}

ProbabilityStreams parse_probabilities_csv(std::string_view text) {
  ProbabilityStreams s;
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line.rfind("step,class,ecg", 0) != 0)
    throw FormatError("probability file lacks the 'step,class,ecg' header", 0);
  const auto channels = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) - 2;
  s.ieeg.resize(channels);
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != channels + 3 || cells[1].size() != 1)
      throw FormatError("malformed probability row " + std::to_string(row + 1), row + 1);
    if (std::stoull(cells[0]) != row) throw FormatError("probability rows out of order", row + 1);
    s.classes.push_back(parse_class(cells[1][0]));
    s.ecg.push_back(std::stod(cells[2]));
    for (std::size_t c = 0; c < channels; ++c) s.ieeg[c].push_back(std::stod(cells[3 + c]));
    ++row;
  }
  return s;
}

std::string metrics_csv_line(const MetricsRow& row) {
  const auto& s = row.summary;
  std::string out = row.patient + "," + row.modality + "," + row.rule;
  for (auto v : {s.cm.tp, s.cm.tn, s.cm.fp, s.cm.fn}) out += "," + std::to_string(v);
  for (double v : {s.sensitivity, s.specificity, s.accuracy, s.fph, s.auc}) out += "," + fmt(v, "%.6f");
  return out;
}

std::vector<MetricsRow> evaluate_streams(const std::string& patient, const ProbabilityStreams& streams,
                                         const predictor::FusionConfig& fusion) {
  const std::size_t steps = streams.classes.size();
  if (streams.ecg.size() != steps) throw AlignmentError("ECG stream length differs from the label stream");
  for (const auto& ch : streams.ieeg) {
    if (ch.size() != steps) throw AlignmentError("iEEG stream length differs from the label stream");
  }
  const auto ecg = predictor::ecg_decide(streams.ecg, fusion);
  const auto ieeg = predictor::ieeg_decide(streams.ieeg, fusion);

  metrics::ConfusionMatrix cm_ecg, cm_ieeg, cm_fused;
  std::vector<double> s_ecg, s_ieeg, s_fused;
  std::vector<std::uint8_t> labels;
  for (std::size_t k = 0; k < steps; ++k) {
    if (streams.classes[k] == signal::WindowClass::Excluded) continue;
    const bool truth = streams.classes[k] == signal::WindowClass::Preictal;
    const bool fused = predictor::fuse_modalities(ecg[k], ieeg[k], fusion.modality_rule);
    cm_ecg.add(ecg[k], truth);
    cm_ieeg.add(ieeg[k], truth);
    cm_fused.add(fused, truth);

    double mean_ieeg = 0.0;
    for (const auto& ch : streams.ieeg) mean_ieeg += ch[k];
    mean_ieeg /= static_cast<double>(streams.ieeg.size());
    s_ecg.push_back(streams.ecg[k]);
    s_ieeg.push_back(mean_ieeg);
    // Score ranking the fused alarm: both must be high for AND, either for OR.
    double fused_score = 0.0;
    switch (fusion.modality_rule) {
      case predictor::ModalityRule::And:
        fused_score = std::min(streams.ecg[k], mean_ieeg);
        break;
      case predictor::ModalityRule::Or:
        fused_score = std::max(streams.ecg[k], mean_ieeg);
        break;
      case predictor::ModalityRule::EcgOnly:
        fused_score = streams.ecg[k];
        break;
      case predictor::ModalityRule::IeegOnly:
        fused_score = mean_ieeg;
        break;
    }
    s_fused.push_back(fused_score);
    labels.push_back(truth ? 1 : 0);
  }

  auto safe_auc = [&](const std::vector<double>& scores) {
    try {
      return metrics::auc(scores, labels);
    } catch (const UndefinedMetricError&) {
      return std::nan("");
    }
  };
  const std::string rule(predictor::to_string(fusion.modality_rule));
  return {
      {patient, "ecg", "none", metrics::summarize(cm_ecg, safe_auc(s_ecg))},
      {patient, "ieeg", "none", metrics::summarize(cm_ieeg, safe_auc(s_ieeg))},
      {patient, "combined", rule, metrics::summarize(cm_fused, safe_auc(s_fused))},
  };
}

// --------------------------------------------------------------------------
// Stages

void cmd_generate(const PipelineConfig& cfg) {
  cfg.validate();
  const Paths paths{cfg.out_dir};
  for (const auto& patient : cfg.patients) {
    for (bool eval : {false, true}) {
      signal::GeneratorConfig base = signal::GeneratorConfig::preset(Modality::ECG, cfg.generator.separability);
      base.seed = stage_seed(cfg.seed, eval ? "generate-eval" : "generate", patient);
      base.onset_count = eval ? cfg.generator.eval_onset_count : cfg.generator.onset_count;
      base.imbalance_ratio = cfg.generator.imbalance_ratio;
      base.sample_rate_hz = cfg.generator.sample_rate_hz;
      base.horizon_s = cfg.generator.horizon_s;
      base.exclusion_s = cfg.generator.exclusion_s;
      const double duration = signal::recording_duration_for(base);
      const auto onsets = signal::place_onsets(base, duration);

      for (auto m : kModalities) {
        auto g = signal::GeneratorConfig::preset(m, cfg.generator.separability);
        g.seed = stage_seed(cfg.seed, eval ? "generate-eval" : "generate", patient, modality_name(m));
        g.onset_count = base.onset_count;
        g.imbalance_ratio = base.imbalance_ratio;
        g.sample_rate_hz = base.sample_rate_hz;
        g.horizon_s = base.horizon_s;
        g.exclusion_s = base.exclusion_s;
        const std::size_t channels = m == Modality::ECG ? 1 : cfg.generator.ieeg_channels;
        auto rec = signal::synthesize_recording(g, m, channels, duration, onsets);
        rec.patient_id = patient;
        const auto path = paths.recording(patient, m, eval);
        signal::save_recording(rec, path);
        spdlog::info("generate: wrote {} ({:.0f} s, {} channel(s), {} onset(s))", path.string(), duration, channels,
                     onsets.size());
      }
    }
  }
}

namespace {

std::vector<signal::SampleWindow> labelled_windows(const PipelineConfig& cfg, const signal::Recording& rec) {
  auto windows = signal::label_windows(rec, cfg.generator.horizon_s, cfg.generator.exclusion_s);
  const auto& f = filters_for(cfg, rec.modality);
  if (filters_active(f)) {
    for (auto& w : windows) w = signal::preprocess(w, f);
  }
  return windows;
}

}  // namespace

void cmd_train(const PipelineConfig& cfg) {
  cfg.validate();
  const Paths paths{cfg.out_dir};
  const auto spec = cfg.model_spec();
  for (const auto& patient : cfg.patients) {
    for (auto m : kModalities) {
      const auto rec_path = paths.recording(patient, m, false);
      require_file(rec_path, "generate");
      const auto rec = signal::load_recording(rec_path, patient);
      const auto windows = labelled_windows(cfg, rec);
      auto split = signal::split_dataset(windows, stage_seed(cfg.seed, "split", patient, modality_name(m)));
      // Split on whole windows first so no channel of a test window is trained on.
      split.train = signal::explode_channels(split.train);
      split.validation = signal::explode_channels(split.validation);
      split.test = signal::explode_channels(split.test);

      auto tc = cfg.training.train;
      tc.seed = stage_seed(cfg.seed, "train", patient, modality_name(m));
      spdlog::info("train: {} {} on {} windows ({} validation)", patient, modality_name(m), split.train.size(),
                   split.validation.size());
      const auto result = nn::train(spec, split, cfg.training.loss, tc);
      nn::save_checkpoint(result.params, paths.checkpoint(patient, m));
      io::write_text_atomic(paths.curve(patient, m), nn::curve_csv(result.curve));
      spdlog::info("train: {} {} best epoch {}", patient, modality_name(m), result.best_epoch);
    }
  }
}

void cmd_evaluate(const PipelineConfig& cfg) {
  cfg.validate();
  const Paths paths{cfg.out_dir};
  std::string csv(kMetricsHeader);
  csv += '\n';
  json rows = json::array();
  for (const auto& patient : cfg.patients) {
    ProbabilityStreams streams;
    for (auto m : kModalities) {
      const auto ckpt = paths.checkpoint(patient, m);
      require_file(ckpt, "train");
      const auto rec_path = paths.recording(patient, m, true);
      require_file(rec_path, "generate");
      const auto params = nn::load_checkpoint(ckpt);
      const auto rec = signal::load_recording(rec_path, patient);
      const auto n = signal::window_count(rec);
      if (streams.classes.empty()) {
        streams.classes = signal::classify_windows(rec.seizure_onsets, n, cfg.generator.horizon_s,
                                                   cfg.generator.exclusion_s);
      } else if (streams.classes.size() != n) {
        throw AlignmentError("ECG and iEEG evaluation recordings of " + patient + " differ in length");
      }
      if (m == Modality::IEEG) streams.ieeg.assign(rec.channel_count(), std::vector<double>(n));
      const auto& f = filters_for(cfg, m);
      for (std::size_t k = 0; k < n; ++k) {
        auto w = signal::extract_window(rec, k, signal::Label::Interictal);
        if (filters_active(f)) w = signal::preprocess(w, f);
        const auto p = nn::predict_channels(params, w);
        if (m == Modality::ECG) {
          streams.ecg.push_back(p.front());
        } else {
          for (std::size_t c = 0; c < p.size(); ++c) streams.ieeg[c][k] = p[c];
        }
      }
    }
    io::write_text_atomic(paths.probabilities(patient), probabilities_csv(streams));
    for (const auto& row : evaluate_streams(patient, streams, cfg.fusion)) {
      csv += metrics_csv_line(row);
      csv += '\n';
      const auto& s = row.summary;
      auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
      rows.push_back({{"patient", row.patient},
                      {"modality", row.modality},
                      {"rule", row.rule},
                      {"tp", s.cm.tp},
                      {"tn", s.cm.tn},
                      {"fp", s.cm.fp},
                      {"fn", s.cm.fn},
                      {"sensitivity", num(s.sensitivity)},
                      {"specificity", num(s.specificity)},
                      {"accuracy", num(s.accuracy)},
                      {"fph", num(s.fph)},
                      {"auc", num(s.auc)}});
    }
    spdlog::info("evaluate: {} scored", patient);
  }
  io::write_text_atomic(paths.metrics_csv(), csv);
  io::write_text_atomic(paths.metrics_json(), json{{"rows", rows}}.dump(2) + "\n");
}

netsim::Scenario build_scenario(const PipelineConfig& cfg) {
  const std::string text = cfg.network.scenario_json.empty() ? "{}" : cfg.network.scenario_json;
  json j = json::parse(text);
  j["seed"] = stage_seed(cfg.seed, "simulate");
  j["fusion"] = {{"threshold", cfg.fusion.threshold},
                 {"time_window", cfg.fusion.time_window},
                 {"rule", std::string(predictor::to_string(cfg.fusion.modality_rule))}};

  if (cfg.network.source == NetworkSource::Trained) {
    const std::string patient = cfg.network.patient.empty() ? cfg.patients.front() : cfg.network.patient;
    const Paths paths{cfg.out_dir};
    require_file(paths.probabilities(patient), "evaluate");
    const auto streams = parse_probabilities_csv(io::read_file_text(paths.probabilities(patient)));
    const auto rec_path = paths.recording(patient, Modality::ECG, true);
    require_file(rec_path, "generate");
    const auto rec = signal::load_recording(rec_path, patient);
    if (j.contains("sources") || j.contains("timeline") || j.contains("duration_s"))
      throw ConfigError("network.sources/timeline/duration_s come from the evaluation stream when classifier=trained");
    j["duration_s"] = static_cast<double>(streams.classes.size()) * signal::kWindowSeconds;
    j["timeline"] = {{"onsets", rec.seizure_onsets},
                     {"horizon_s", cfg.generator.horizon_s},
                     {"exclusion_s", cfg.generator.exclusion_s}};
    j["sources"] = {{"ecg", {{"kind", "probabilities"}, {"probabilities", {streams.ecg}}}},
                    {"ieeg", {{"kind", "probabilities"}, {"probabilities", streams.ieeg}}}};
  }
  return netsim::parse_scenario(j.dump());
}

netsim::SimReport cmd_simulate(const PipelineConfig& cfg) {
  cfg.fusion.validate();
  const Paths paths{cfg.out_dir};
  const auto scenario = build_scenario(cfg);
  spdlog::info("simulate: {:.0f} s, {} nodes, rule {}", scenario.duration_s, scenario.nodes.size(),
               predictor::to_string(scenario.fusion.modality_rule));
  auto report = netsim::run_simulation(scenario);
  io::write_text_atomic(paths.trace(), report.trace);
  io::write_text_atomic(paths.sim_report(), report.to_json() + "\n");
  io::write_text_atomic(paths.decisions(), std::string(predictor::kTraceHeader) + "\n" + report.decision_trace);
  spdlog::info("simulate: {} alerts, drop rate {:.4f}, max alert latency {:.4f} s", report.alerts, report.drop_rate,
               report.max_alert_latency);
  return report;
}

void cmd_report(const PipelineConfig& cfg) {
  const Paths paths{cfg.out_dir};
  require_file(paths.metrics_json(), "evaluate");
  json doc;
  try {
    doc = json::parse(io::read_file_text(paths.metrics_json()));
  } catch (const json::exception& e) {
    throw FormatError(std::string("cannot parse ") + paths.metrics_json().string() + ": " + e.what(), 0);
  }

  struct Acc {
    std::string rule;
    metrics::ConfusionMatrix pooled;
    std::vector<double> sens, spec, acc;
    std::size_t patients = 0;
  };
  std::map<std::string, Acc> by_modality;
  const std::vector<std::string> order{"ecg", "ieeg", "combined"};
  for (const auto& r : doc.at("rows")) {
    auto& a = by_modality[r.at("modality").get<std::string>()];
    a.rule = r.at("rule").get<std::string>();
    metrics::ConfusionMatrix cm{r.at("tp").get<std::uint64_t>(), r.at("tn").get<std::uint64_t>(),
                                r.at("fp").get<std::uint64_t>(), r.at("fn").get<std::uint64_t>()};
    a.pooled += cm;
    ++a.patients;
    const auto s = metrics::summarize(cm, std::nan(""));
    if (!std::isnan(s.sensitivity)) a.sens.push_back(s.sensitivity);
    if (!std::isnan(s.specificity)) a.spec.push_back(s.specificity);
    if (!std::isnan(s.accuracy)) a.acc.push_back(s.accuracy);
  }
  auto mean = [](const std::vector<double>& v) {
    if (v.empty()) return std::nan("");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };

  std::string csv =
      "modality,rule,patients,macro_sensitivity,macro_specificity,macro_accuracy,pooled_sensitivity,"
      "pooled_specificity,pooled_accuracy,pooled_fph\n";
  json out = json::array();
  for (const auto& name : order) {
    auto it = by_modality.find(name);
    if (it == by_modality.end()) continue;
    const auto& a = it->second;
    const auto pooled = metrics::summarize(a.pooled, std::nan(""));
    const double vals[] = {mean(a.sens),          mean(a.spec),          mean(a.acc), pooled.sensitivity,
                           pooled.specificity,    pooled.accuracy,       pooled.fph};
    csv += name + "," + a.rule + "," + std::to_string(a.patients);
    for (double v : vals) csv += "," + fmt(v, "%.6f");
    csv += '\n';
    auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
    out.push_back({{"modality", name},
                   {"rule", a.rule},
                   {"patients", a.patients},
                   {"macro", {{"sensitivity", num(vals[0])}, {"specificity", num(vals[1])}, {"accuracy", num(vals[2])}}},
                   {"pooled",
                    {{"sensitivity", num(vals[3])},
                     {"specificity", num(vals[4])},
                     {"accuracy", num(vals[5])},
                     {"fph", num(vals[6])}}}});
  }
  io::write_text_atomic(paths.comparison_csv(), csv);
  io::write_text_atomic(paths.comparison_json(), json{{"rows", out}}.dump(2) + "\n");
  spdlog::info("report: wrote {}", paths.comparison_csv().string());
}

}  // namespace seiznet::pipeline
