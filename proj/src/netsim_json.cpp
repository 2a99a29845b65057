#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "seiznet/error.hpp"
#include "seiznet/netsim.hpp"
#include "seiznet/signal.hpp"

namespace seiznet::netsim {

using nlohmann::json;

namespace {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scenario field '") + key + "': " + e.what());
  }
}

void check_keys(const json& j, std::initializer_list<std::string_view> known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

ClassifierSource parse_source(const json& j, const std::string& where) {
  check_keys(j,
             {"kind", "sensitivity", "specificity", "mean_error_run", "confident_p", "channels", "probabilities"},
             where);
  ClassifierSource s;
  const auto kind = get_or<std::string>(j, "kind", "oracle");
  if (kind == "oracle") {
    s.kind = ClassifierSource::Kind::Oracle;
    s.oracle.sensitivity = get_or(j, "sensitivity", s.oracle.sensitivity);
    s.oracle.specificity = get_or(j, "specificity", s.oracle.specificity);
    s.oracle.mean_error_run = get_or(j, "mean_error_run", s.oracle.mean_error_run);
    s.oracle.confident_p = get_or(j, "confident_p", s.oracle.confident_p);
    s.channels = get_or<std::size_t>(j, "channels", 1);
  } else if (kind == "probabilities") {
    s.kind = ClassifierSource::Kind::Probabilities;
    s.probabilities = get_or<std::vector<std::vector<double>>>(j, "probabilities", {});
  } else {
    throw ConfigError(where + ".kind must be 'oracle' or 'probabilities'");
  }
  return s;
}

Vec3 parse_position(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw ConfigError("node position needs three coordinates");
  return {v[0], v[1], v[2]};
}

}  // namespace

Scenario parse_scenario(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("scenario is not valid JSON: ") + e.what());
  }
  check_keys(j,
             {"seed", "duration_s", "t_app_s", "payload_bits", "nodes", "channel", "phy", "schedule", "fusion",
              "gateway_deadline_s", "timeline", "sources", "offered_load_bps", "record_trace"},
             "scenario");

  Scenario sc;
  sc.seed = get_or<std::uint64_t>(j, "seed", 0);
  sc.duration_s = get_or(j, "duration_s", sc.duration_s);
  sc.t_app_s = get_or(j, "t_app_s", sc.t_app_s);
  sc.payload_bits = get_or(j, "payload_bits", sc.payload_bits);
  sc.gateway_deadline_s = get_or(j, "gateway_deadline_s", sc.gateway_deadline_s);
  sc.offered_load_bps = get_or(j, "offered_load_bps", sc.offered_load_bps);
  sc.record_trace = get_or(j, "record_trace", sc.record_trace);

  try {
    if (j.contains("nodes")) {
      sc.nodes.clear();
      for (const auto& n : j.at("nodes")) {
        check_keys(n, {"id", "kind", "position"}, "node");
        Node node;
        node.id = n.at("id").get<NodeId>();
        node.kind = parse_node_kind(n.at("kind").get<std::string>());
        if (n.contains("position")) node.position = parse_position(n.at("position"));
        sc.nodes.push_back(node);
      }
    }
    if (j.contains("channel")) {
      const auto& c = j.at("channel");
      check_keys(c, {"sound_speed", "loss_probability", "delay_jitter_s", "chip_flip_probability", "links"},
                 "channel");
      sc.channel.sound_speed = get_or(c, "sound_speed", sc.channel.sound_speed);
      sc.channel.loss_probability = get_or(c, "loss_probability", sc.channel.loss_probability);
      sc.channel.delay_jitter_s = get_or(c, "delay_jitter_s", sc.channel.delay_jitter_s);
      sc.channel.chip_flip_probability = get_or(c, "chip_flip_probability", sc.channel.chip_flip_probability);
      if (c.contains("links")) {
        for (const auto& l : c.at("links")) {
          check_keys(l, {"src", "dst", "loss"}, "channel.links entry");
          sc.channel.link_loss[{l.at("src").get<NodeId>(), l.at("dst").get<NodeId>()}] = l.at("loss").get<double>();
        }
      }
    }
    if (j.contains("phy")) {
      const auto& p = j.at("phy");
      check_keys(p, {"spreading_factor", "slot_time_s", "code_count"}, "phy");
      sc.phy.spreading_factor = get_or(p, "spreading_factor", sc.phy.spreading_factor);
      sc.phy.slot_time_s = get_or(p, "slot_time_s", sc.phy.slot_time_s);
      sc.phy.code_count = get_or(p, "code_count", sc.phy.code_count);
    }
    if (j.contains("schedule")) {
      Schedule s;
      for (const auto& e : j.at("schedule")) {
        check_keys(e, {"node", "code", "hop"}, "schedule entry");
        s.entries.push_back(
            {e.at("node").get<NodeId>(), e.at("code").get<std::uint16_t>(), get_or<std::uint32_t>(e, "hop", 0)});
      }
      for (const auto& n : sc.nodes) {
        if (n.kind == NodeKind::Gateway) s.gateway = n.id;
      }
      sc.schedule = std::move(s);
    }
    if (j.contains("fusion")) {
      const auto& f = j.at("fusion");
      check_keys(f, {"threshold", "time_window", "rule"}, "fusion");
      sc.fusion.threshold = get_or(f, "threshold", sc.fusion.threshold);
      sc.fusion.time_window = get_or(f, "time_window", sc.fusion.time_window);
      if (f.contains("rule")) sc.fusion.modality_rule = predictor::parse_modality_rule(f.at("rule").get<std::string>());
    }
    if (j.contains("timeline")) {
      const auto& t = j.at("timeline");
      check_keys(t, {"onsets", "onset_count", "imbalance_ratio", "horizon_s", "exclusion_s"}, "timeline");
      sc.horizon_s = get_or(t, "horizon_s", sc.horizon_s);
      sc.exclusion_s = get_or(t, "exclusion_s", sc.exclusion_s);
      if (t.contains("onsets")) {
        sc.onsets = t.at("onsets").get<std::vector<double>>();
      } else if (t.contains("onset_count")) {
        signal::GeneratorConfig g;
        g.onset_count = t.at("onset_count").get<std::uint32_t>();
        g.imbalance_ratio = get_or(t, "imbalance_ratio", g.imbalance_ratio);
        g.horizon_s = sc.horizon_s;
        g.exclusion_s = sc.exclusion_s;
        if (!j.contains("duration_s")) sc.duration_s = signal::recording_duration_for(g);
        sc.onsets = signal::place_onsets(g, sc.duration_s);
      }
    }
    if (j.contains("sources")) {
      const auto& s = j.at("sources");
      check_keys(s, {"ecg", "ieeg"}, "sources");
      if (s.contains("ecg")) sc.ecg_source = parse_source(s.at("ecg"), "sources.ecg");
      if (s.contains("ieeg")) sc.ieeg_source = parse_source(s.at("ieeg"), "sources.ieeg");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed scenario: ") + e.what());
  }
  sc.validate();
  return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

namespace {

json cm_json(const metrics::ConfusionMatrix& cm) {
  const auto s = metrics::summarize(cm, std::nan(""));
  auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
  return {{"tp", cm.tp},
          {"tn", cm.tn},
          {"fp", cm.fp},
          {"fn", cm.fn},
          {"sensitivity", num(s.sensitivity)},
          {"specificity", num(s.specificity)},
          {"accuracy", num(s.accuracy)},
          {"fph", num(s.fph)}};
}

}  // namespace

std::string SimReport::to_json() const {
  json j;
  j["duration_s"] = duration_s;
  j["steps"] = steps;
  j["frames"] = {{"sent", frames_sent},
                 {"delivered", frames_delivered},
                 {"dropped", frames_dropped},
                 {"drop_rate", drop_rate}};
  j["aggregate_goodput_bps"] = aggregate_goodput_bps;
  json ns = json::array();
  for (const auto& n : nodes) {
    ns.push_back({{"id", n.id},
                  {"kind", std::string(to_string(n.kind))},
                  {"frames_sent", n.frames_sent},
                  {"frames_delivered", n.frames_delivered},
                  {"delivered_bits", n.delivered_bits},
                  {"goodput_bps", n.goodput_bps}});
  }
  j["nodes"] = ns;
  json ls = json::array();
  for (const auto& l : links) {
    ls.push_back({{"src", l.src},
                  {"dst", l.dst},
                  {"sent", l.sent},
                  {"delivered", l.delivered},
                  {"dropped", l.dropped},
                  {"decode_failures", l.decode_failures},
                  {"collisions", l.collisions}});
  }
  j["links"] = ls;
  j["alerts"] = alerts;
  j["stimulations"] = stimulations;
  j["max_alert_latency_s"] = max_alert_latency;
  j["alert_latency_within_t_app"] = alert_latency_within_t_app;
  j["causality_ok"] = causality_ok;
  j["fused"] = cm_json(fused_cm);
  j["ecg"] = cm_json(ecg_cm);
  j["ieeg"] = cm_json(ieeg_cm);
  return j.dump(2);
}

}  // namespace seiznet::netsim
