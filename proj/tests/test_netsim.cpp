#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <map>
#include <set>
#include <sstream>

#include "seiznet/error.hpp"
#include "seiznet/netsim.hpp"
#include "seiznet/signal.hpp"

using namespace seiznet;
using namespace seiznet::netsim;

namespace {

struct TraceLine {
  double t;
  std::string kind, src, dst, detail;
};

std::vector<TraceLine> parse_trace(const std::string& text) {
  std::vector<TraceLine> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    TraceLine t;
    ls >> t.t >> t.kind >> t.src >> t.dst;
    std::getline(ls, t.detail);
    out.push_back(t);
  }
  return out;
}

int field(const std::string& detail, const std::string& key) {
  const auto pos = detail.find(key + "=");
  REQUIRE(pos != std::string::npos);
  return std::stoi(detail.substr(pos + key.size() + 1));
}

ClassifierSource oracle(double sens, double spec, std::size_t channels = 1, double run = 1.0) {
  ClassifierSource s;
  s.oracle = {sens, spec, run, 0.9};
  s.channels = channels;
  return s;
}

Scenario lossless(double duration_s) {
  Scenario sc;
  sc.duration_s = duration_s;
  sc.channel.loss_probability = 0.0;
  sc.seed = 3;
  return sc;
}

const Node& node_of(const Scenario& sc, NodeKind k) {
  for (const auto& n : sc.nodes) {
    if (n.kind == k) return n;
  }
  throw std::runtime_error("missing node");
}

}  // namespace

TEST_CASE("required bit rate") {
  CHECK(required_bitrate(20, 4) == 5.0);
  CHECK(required_bitrate(0, 4) == 0.0);
  CHECK(4 * required_bitrate(16, 4) == 16.0);
  CHECK_THROWS_AS(required_bitrate(16, 0), ConfigError);
  CHECK_THROWS_AS(required_bitrate(16, -1), ConfigError);
}

TEST_CASE("code assignment") {
  const auto nodes = default_nodes();
  const auto s = assign_codes(2, nodes, 4, 9);
  std::set<std::uint16_t> codes;
  for (const auto& e : s.entries) {
    codes.insert(e.code_index);
    CHECK(e.code_index < 4);
  }
  CHECK(codes.size() == 4);
  CHECK(s.entries.size() == 4);
  const auto again = assign_codes(2, nodes, 4, 9);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(again.entries[i].code_index == s.entries[i].code_index);
    CHECK(again.entries[i].hop_sequence == s.entries[i].hop_sequence);
  }

  auto five = nodes;
  five.push_back({4, NodeKind::EcgClassifier, {}});
  CHECK_THROWS_AS(assign_codes(2, five, 4, 9), CapacityError);
  auto dup = nodes;
  dup[1].id = 0;
  CHECK_THROWS_AS(assign_codes(2, dup, 8, 9), ConfigError);
  CHECK_THROWS_AS(assign_codes(7, nodes, 8, 9), ConfigError);
}

TEST_CASE("Walsh codes are mutually orthogonal") {
  for (std::size_t i = 0; i < 8; ++i) {
    const auto a = walsh_code(8, i);
    for (std::size_t j = 0; j < 8; ++j) {
      const auto b = walsh_code(8, j);
      int dot = 0;
      for (std::size_t c = 0; c < 8; ++c) dot += (a[c] == b[c]) ? 1 : -1;
      CHECK(dot == (i == j ? 8 : 0));
    }
  }
  CHECK(walsh_code(8, 0) == std::vector<std::uint8_t>(8, 0));
  CHECK_THROWS_AS(walsh_code(6, 0), ConfigError);
  CHECK_THROWS_AS(walsh_code(8, 8), ConfigError);
}

TEST_CASE("hop slots form a permutation") {
  const auto s = hop_slots(1234, 128);
  CHECK(std::set<std::uint32_t>(s.begin(), s.end()).size() == 128);
  CHECK(*std::max_element(s.begin(), s.end()) == 127);
  CHECK(hop_slots(1234, 128) == s);
  CHECK(hop_slots(1235, 128) != s);
}

TEST_CASE("payload encoding and CRC") {
  AppMessage m;
  m.decision = true;
  m.origin = 2;
  m.step_index = 37;
  const auto bits = encode_payload(m);
  CHECK(bits.size() == 16);
  const auto d = decode_payload(bits);
  CHECK(d.decision);
  CHECK(d.origin == 2);
  CHECK(d.step_mod == 37 % 32);
  for (std::size_t i = 0; i < bits.size(); ++i) {
    auto bad = bits;
    bad[i] ^= 1;
    CHECK_THROWS_AS(decode_payload(bad), DecodeError);
  }
  // CRC-8/0x07 of the byte 0x00 is 0, so an all-zero message is all-zero bits.
  CHECK(encode_payload(AppMessage{}) == std::vector<std::uint8_t>(16, 0));
  AppMessage small;
  small.payload_bits = 8;
  CHECK_THROWS_AS(encode_payload(small), ConfigError);
}

TEST_CASE("PPM modulation round trip and frame arithmetic") {
  AppMessage m;
  m.decision = true;
  m.origin = 1;
  m.step_index = 5;
  const auto code = walsh_code(8, 3);
  const auto f = ppm_modulate(m, code, 3, 77, 100e-6, 2.0);
  CHECK(f.chip_count() == 16 * 8);
  CHECK(f.duration == doctest::Approx(0.0128).epsilon(1e-12));
  CHECK(f.tx_time == 2.0);
  CHECK(ppm_demodulate(f, code) == encode_payload(m));
  CHECK(PhyConfig{}.frame_duration(16) == doctest::Approx(0.0128).epsilon(1e-12));

  const std::vector<std::uint8_t> zeros(16, 0);
  const auto z = ppm_modulate_bits(zeros, walsh_code(8, 0), 0, 5, 100e-6);
  CHECK(std::all_of(z.pulses.begin(), z.pulses.end(), [](auto p) { return p == 0; }));

  CHECK_THROWS_AS(ppm_modulate(m, std::vector<std::uint8_t>{}, 0, 1, 100e-6), ConfigError);
}

TEST_CASE("chip majority tolerates three flips per bit") {
  AppMessage m;
  m.decision = true;
  m.step_index = 19;
  const auto code = walsh_code(8, 5);
  auto f = ppm_modulate(m, code, 5, 99, 100e-6);
  const auto slots = hop_slots(99, f.chip_count());
  for (std::size_t bit = 0; bit < 16; ++bit) {
    auto g = f;
    for (std::size_t c = 0; c < 3; ++c) g.pulses[slots[bit * 8 + c]] ^= 1;
    CHECK(ppm_demodulate(g, code) == encode_payload(m));
    g.pulses[slots[bit * 8 + 3]] ^= 1;
    CHECK_THROWS_AS(ppm_demodulate(g, code), DecodeError);
  }
}

TEST_CASE("decoding with another node's code fails loudly") {
  AppMessage m;
  m.decision = true;
  const auto f = ppm_modulate(m, walsh_code(8, 1), 1, 4, 100e-6);
  for (std::size_t other = 0; other < 8; ++other) {
    if (other == 1) continue;
    CHECK_THROWS_AS(decode_payload(ppm_demodulate(f, walsh_code(8, other))), DecodeError);
  }
  CHECK_THROWS_AS(ppm_demodulate(f, walsh_code(4, 1)), DecodeError);
}

TEST_CASE("transmit: loss extremes and Monte Carlo drop rate") {
  MacFrame f;
  f.tx_time = 1.0;
  const Link link{0, 1, 0.154};
  ChannelModel ch;
  Rng rng(5);
  ch.loss_probability = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto o = transmit(f, link, ch, rng);
    CHECK(o.delivered);
    CHECK(o.arrival_time == doctest::Approx(1.0 + 0.154 / 1540.0));
  }
  ch.loss_probability = 1.0;
  for (int i = 0; i < 1000; ++i) CHECK_FALSE(transmit(f, link, ch, rng).delivered);
  ch.loss_probability = 0.005;
  int dropped = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) dropped += transmit(f, link, ch, rng).delivered ? 0 : 1;
  CHECK(std::abs(dropped / double(n) - 0.005) <= 0.001);

  ch.link_loss[{0, 1}] = 1.0;
  CHECK_FALSE(transmit(f, link, ch, rng).delivered);
  CHECK(transmit(f, Link{1, 0, 0.1}, ch, rng).arrival_time > 1.0);
}

TEST_CASE("event queue orders by time then insertion") {
  EventQueue q;
  q.push(2.0, EventKind::FrameRx, 0, 1);
  q.push(1.0, EventKind::FrameTx, 0, 2);
  q.push(2.0, EventKind::Decision, 0, 3);
  q.push(1.0, EventKind::WindowReady, 0, 4);
  std::vector<std::uint64_t> order;
  while (!q.empty()) order.push_back(q.pop().step);
  CHECK(order == std::vector<std::uint64_t>{2, 4, 1, 3});
}

TEST_CASE("always-interictal oracles never alert") {
  auto sc = lossless(600);
  sc.ecg_source = oracle(0.0, 1.0);
  sc.ieeg_source = oracle(0.0, 1.0, 3);
  const auto r = run_simulation(sc);
  CHECK(r.alerts == 0);
  CHECK(r.stimulations == 0);
  CHECK(r.trace.find(" alert ") == std::string::npos);
}

TEST_CASE("always-preictal oracles alert every step after warm-up with hand-computed latency") {
  auto sc = lossless(600);
  sc.ecg_source = oracle(1.0, 0.0);
  sc.ieeg_source = oracle(1.0, 0.0, 3);
  const auto r = run_simulation(sc);
  const auto steps = static_cast<std::uint64_t>(600 / 4);
  CHECK(r.alerts == steps - 14);
  CHECK(r.stimulations == steps - 14);

  const double c = sc.channel.sound_speed;
  const double frame = sc.phy.frame_duration(16);
  const auto& ieeg = node_of(sc, NodeKind::IeegClassifier);
  const auto& ecg = node_of(sc, NodeKind::EcgClassifier);
  const auto& gw = node_of(sc, NodeKind::Gateway);
  const auto& dbs = node_of(sc, NodeKind::Dbs);
  const double ecg_path = distance(ecg.position, gw.position) / c + frame;
  const double ieeg_path = distance(ieeg.position, dbs.position) / c + distance(dbs.position, gw.position) / c +
                           2 * frame;
  CHECK(distance(ieeg.position, dbs.position) == doctest::Approx(0.005));
  const double expected = std::max(ecg_path, ieeg_path);
  for (double l : r.alert_latencies) CHECK(l == doctest::Approx(expected).epsilon(1e-9));
  CHECK(r.max_alert_latency <= 4.0 + ieeg_path);
  CHECK(r.alert_latency_within_t_app);
}

TEST_CASE("lossless run: conservation, causality, no collisions, relay path") {
  auto sc = lossless(1200);
  sc.ecg_source = oracle(0.9, 0.9, 1, 5);
  sc.ieeg_source = oracle(0.9, 0.9, 3, 5);
  const auto r = run_simulation(sc);
  CHECK(r.causality_ok);
  CHECK(r.frames_dropped == 0);
  CHECK(r.frames_sent == r.frames_delivered);
  std::uint64_t collisions = 0;
  for (const auto& l : r.links) {
    CHECK(l.sent == l.delivered + l.dropped);
    collisions += l.collisions;
  }
  CHECK(collisions == 0);

  std::map<std::pair<std::string, std::string>, int> tx;
  double last = 0.0;
  for (const auto& t : parse_trace(r.trace)) {
    CHECK(t.t >= last);
    last = t.t;
    if (t.kind == "tx") ++tx[{t.src, t.dst}];
  }
  CHECK(tx[{"ieeg", "dbs"}] == 300);
  CHECK(tx[{"dbs", "gateway"}] == 300);
  CHECK(tx[{"ecg", "gateway"}] == 300);
  CHECK(tx[{"ieeg", "gateway"}] == 0);
  CHECK(tx[{"gateway", "dbs"}] == static_cast<int>(r.alerts));
}

TEST_CASE("control messages announce the schedule at t = 0") {
  const auto r = run_simulation(lossless(40));
  const auto lines = parse_trace(r.trace);
  int control = 0;
  for (const auto& l : lines) {
    if (l.kind != "control") continue;
    ++control;
    CHECK(l.t == 0.0);
    CHECK(l.src == "gateway");
  }
  CHECK(control == 4);
}

TEST_CASE("report confusion counts reconcile with the trace") {
  auto sc = Scenario{};
  sc.duration_s = 4 * 3000;
  sc.onsets = {4000.0, 10000.0};
  sc.horizon_s = 1200;
  sc.exclusion_s = 300;
  sc.seed = 17;
  sc.ecg_source = oracle(0.8, 0.9, 1, 20);
  sc.ieeg_source = oracle(0.85, 0.9, 3, 20);
  const auto r = run_simulation(sc);
  const auto classes = signal::classify_windows(sc.onsets, 3000, sc.horizon_s, sc.exclusion_s);
  metrics::ConfusionMatrix cm;
  std::size_t decisions = 0;
  for (const auto& t : parse_trace(r.trace)) {
    if (t.kind != "decision") continue;
    ++decisions;
    const auto k = static_cast<std::size_t>(field(t.detail, "step"));
    if (classes[k] == signal::WindowClass::Excluded) continue;
    cm.add(field(t.detail, "fused") == 1, classes[k] == signal::WindowClass::Preictal);
  }
  CHECK(decisions == 3000);
  CHECK(cm == r.fused_cm);
  CHECK(r.fused_cm.tp > 0);
  CHECK(r.fused_cm.fp <= std::min(r.ecg_cm.fp, r.ieeg_cm.fp));
  CHECK(r.alert_latency_within_t_app);
}

TEST_CASE("simulation is deterministic per seed") {
  auto sc = Scenario{};
  sc.duration_s = 2000;
  sc.seed = 4;
  sc.ecg_source = oracle(0.9, 0.9, 1, 10);
  sc.ieeg_source = oracle(0.9, 0.9, 3, 10);
  const auto a = run_simulation(sc);
  const auto b = run_simulation(sc);
  CHECK(a.trace == b.trace);
  CHECK(a.to_json() == b.to_json());
  sc.seed = 5;
  CHECK(run_simulation(sc).trace != a.trace);
}

TEST_CASE("lost results fall back to held decisions within the deadline") {
  auto sc = Scenario{};
  sc.duration_s = 800;
  sc.channel.loss_probability = 0.3;
  sc.ecg_source = oracle(1.0, 0.0);
  sc.ieeg_source = oracle(1.0, 0.0, 3);
  const auto r = run_simulation(sc);
  CHECK(r.frames_dropped > 0);
  CHECK(r.frames_sent == r.frames_delivered + r.frames_dropped);
  CHECK(r.alert_latency_within_t_app);
  CHECK(r.max_alert_latency <= sc.gateway_deadline_s + 1e-12);
  CHECK(r.trace.find("_held") != std::string::npos);
}

TEST_CASE("offered load: goodput and drop rate near capacity") {
  auto sc = Scenario{};
  sc.duration_s = 300;
  sc.phy.slot_time_s = 20e-6;  // 6.25 kbit/s per node, 25 kbit/s aggregate
  sc.offered_load_bps = 5000;
  sc.record_trace = false;
  sc.ecg_source = oracle(0.0, 1.0);
  sc.ieeg_source = oracle(0.0, 1.0, 3);
  const auto r = run_simulation(sc);
  CHECK(4 * sc.phy.bit_rate() == doctest::Approx(25000.0));
  CHECK(r.frames_sent > 90000);
  CHECK(std::abs(r.drop_rate - 0.005) <= 0.001);
  CHECK(r.aggregate_goodput_bps >= 19800.0);
  CHECK(r.frames_sent == r.frames_delivered + r.frames_dropped);
}

TEST_CASE("scenario validation") {
  Scenario sc;
  CHECK_NOTHROW(sc.validate());

  auto s = sc;
  s.nodes.push_back({4, NodeKind::Gateway, {}});
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = sc;
  s.t_app_s = 2.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = sc;
  s.channel.loss_probability = 1.5;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = sc;
  s.ieeg_source.kind = ClassifierSource::Kind::Probabilities;
  s.ieeg_source.probabilities = {std::vector<double>(10, 0.5)};
  CHECK_THROWS_AS(s.validate(), AlignmentError);

  s = sc;
  Schedule partial;
  partial.gateway = 2;
  partial.entries = {{0, 0, 1}, {1, 1, 2}, {2, 2, 3}};
  s.schedule = partial;
  CHECK_THROWS_AS(run_simulation(s), ScenarioError);
  partial.entries.push_back({3, 2, 4});
  s.schedule = partial;
  CHECK_THROWS_AS(run_simulation(s), ScenarioError);
}

TEST_CASE("scenario JSON parsing") {
  const auto sc = parse_scenario(R"({
    "seed": 12, "duration_s": 400, "payload_bits": 24,
    "channel": {"loss_probability": 0.01, "links": [{"src": 0, "dst": 3, "loss": 0.2}]},
    "phy": {"slot_time_s": 5e-5},
    "fusion": {"rule": "or"},
    "timeline": {"onsets": [300], "horizon_s": 200, "exclusion_s": 50},
    "sources": {"ecg": {"kind": "oracle", "sensitivity": 0.7},
                "ieeg": {"kind": "probabilities", "probabilities": [[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.1,
                  0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.1, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.1,
                  0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.1, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.1,
                  0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.1, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.1,
                  0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.1, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.1,
                  0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.1]]}}
  })");
  CHECK(sc.seed == 12);
  CHECK(sc.payload_bits == 24);
  CHECK(sc.channel.loss_for(0, 3) == 0.2);
  CHECK(sc.channel.loss_for(3, 2) == 0.01);
  CHECK(sc.phy.slot_time_s == 5e-5);
  CHECK(sc.fusion.modality_rule == predictor::ModalityRule::Or);
  CHECK(sc.onsets == std::vector<double>{300});
  CHECK(sc.ecg_source.oracle.sensitivity == 0.7);
  CHECK(sc.ieeg_source.kind == ClassifierSource::Kind::Probabilities);
  const auto r = run_simulation(sc);
  CHECK(r.steps == 100);

  CHECK_THROWS_AS(parse_scenario("{\"bogus\": 1}"), ConfigError);
  CHECK_THROWS_AS(parse_scenario("{not json"), ConfigError);
  CHECK_THROWS_AS(parse_scenario(R"({"nodes": [{"id": 0, "kind": "toaster"}]})"), ConfigError);
  CHECK_THROWS_AS(load_scenario("/nonexistent/scenario.json"), ConfigError);

  const auto gen = parse_scenario(R"({"timeline": {"onset_count": 2, "imbalance_ratio": 0.2, "horizon_s": 400,
                                                  "exclusion_s": 100}})");
  CHECK(gen.onsets.size() == 2);
}

TEST_CASE("report JSON carries the summary fields") {
  auto sc = lossless(200);
  const auto j = run_simulation(sc).to_json();
  for (const char* key : {"\"goodput_bps\"", "\"drop_rate\"", "\"max_alert_latency_s\"", "\"fused\"", "\"tp\""})
    CHECK(j.find(key) != std::string::npos);
}
