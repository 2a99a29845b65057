#include "seiznet/netsim.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <unordered_map>

#include "seiznet/error.hpp"
#include "seiznet/signal.hpp"

namespace seiznet::netsim {

namespace {

MacFrame modulate_with_slots(std::span<const std::uint8_t> bits, std::span<const std::uint8_t> code,
                             std::span<const std::uint32_t> slots, std::uint16_t code_index,
                             std::uint32_t hop_sequence, double slot_time_s, double tx_time) {
  const std::size_t sf = code.size();
  MacFrame f;
  f.code_index = code_index;
  f.hop_sequence = hop_sequence;
  f.spreading_factor = static_cast<std::uint32_t>(sf);
  f.pulses.assign(bits.size() * sf, 0);
  for (std::size_t i = 0; i < f.pulses.size(); ++i) f.pulses[slots[i]] = (bits[i / sf] ^ code[i % sf]) & 1;
  f.tx_time = tx_time;
  f.duration = static_cast<double>(f.pulses.size()) * slot_time_s;
  return f;
}

std::vector<std::uint8_t> demodulate_with_slots(const MacFrame& frame, std::span<const std::uint8_t> code,
                                                std::span<const std::uint32_t> slots) {
  const std::size_t sf = code.size();
  const std::size_t n_bits = frame.pulses.size() / sf;
  std::vector<std::uint8_t> bits(n_bits);
  for (std::size_t b = 0; b < n_bits; ++b) {
    std::size_t ones = 0;
    for (std::size_t c = 0; c < sf; ++c) ones += frame.pulses[slots[b * sf + c]] ^ code[c];
    if (2 * ones == sf) throw DecodeError("chip majority inconclusive at bit " + std::to_string(b));
    bits[b] = 2 * ones > sf ? 1 : 0;
  }
  return bits;
}

void check_code(std::span<const std::uint8_t> code) {
  if (code.empty()) throw ConfigError("spreading code must not be empty");
}

std::string fmt_time(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9f", t);
  return buf;
}

}  // namespace

std::string_view to_string(NodeKind k) {
  switch (k) {
    case NodeKind::IeegClassifier:
      return "ieeg";
    case NodeKind::EcgClassifier:
      return "ecg";
    case NodeKind::Gateway:
      return "gateway";
    case NodeKind::Dbs:
      return "dbs";
  }
  return "?";
}

NodeKind parse_node_kind(std::string_view s) {
  if (s == "ieeg" || s == "IEEG_CLASSIFIER") return NodeKind::IeegClassifier;
  if (s == "ecg" || s == "ECG_CLASSIFIER") return NodeKind::EcgClassifier;
  if (s == "gateway" || s == "GATEWAY") return NodeKind::Gateway;
  if (s == "dbs" || s == "DBS") return NodeKind::Dbs;
  throw ConfigError("unknown node kind '" + std::string(s) + "'");
}

std::string_view to_string(MessageKind k) {
  switch (k) {
    case MessageKind::ClassificationResult:
      return "classification";
    case MessageKind::StimulationSettings:
      return "stimulation";
    case MessageKind::Alert:
      return "alert";
  }
  return "?";
}

std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::Control:
      return "control";
    case EventKind::WindowReady:
      return "window";
    case EventKind::FrameTx:
      return "tx";
    case EventKind::FrameRx:
      return "rx";
    case EventKind::FrameDrop:
      return "drop";
    case EventKind::Decision:
      return "decision";
    case EventKind::Alert:
      return "alert";
    case EventKind::Stimulation:
      return "stimulation";
  }
  return "?";
}

double distance(const Vec3& a, const Vec3& b) {
  return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) + (a.z - b.z) * (a.z - b.z));
}

std::vector<Node> default_nodes() {
  return {
      {0, NodeKind::IeegClassifier, {0.0, 0.0, 1.60}},
      {1, NodeKind::EcgClassifier, {-0.2, 0.1, 1.40}},
      {2, NodeKind::Gateway, {0.1, 0.1, 1.20}},
      {3, NodeKind::Dbs, {0.0, 0.005, 1.60}},
  };
}

std::uint8_t crc8(std::span<const std::uint8_t> bits) {
  std::uint8_t crc = 0;
  for (auto b : bits) {
    const bool feedback = ((crc >> 7) & 1) != (b & 1);
    crc = static_cast<std::uint8_t>(crc << 1);
    if (feedback) crc ^= 0x07;
  }
  return crc;
}

std::vector<std::uint8_t> encode_payload(const AppMessage& msg) {
  if (msg.payload_bits < kMinPayloadBits)
    throw ConfigError("payload needs at least " + std::to_string(kMinPayloadBits) + " bits");
  std::vector<std::uint8_t> bits(msg.payload_bits, 0);
  bits[0] = msg.decision ? 1 : 0;
  for (int i = 0; i < 2; ++i) bits[1 + i] = (msg.origin >> i) & 1;
  for (int i = 0; i < 5; ++i) bits[3 + i] = (msg.step_index >> i) & 1;
  const auto crc = crc8(std::span(bits).first(8));
  for (int i = 0; i < 8; ++i) bits[msg.payload_bits - 8 + i] = (crc >> i) & 1;
  return bits;
}

DecodedPayload decode_payload(std::span<const std::uint8_t> bits) {
  if (bits.size() < kMinPayloadBits) throw DecodeError("payload shorter than " + std::to_string(kMinPayloadBits));
  std::uint8_t stored = 0;
  for (int i = 0; i < 8; ++i) stored |= static_cast<std::uint8_t>((bits[bits.size() - 8 + i] & 1) << i);
  if (stored != crc8(bits.first(8))) throw DecodeError("payload CRC-8 mismatch");
  for (std::size_t i = 8; i + 8 < bits.size(); ++i) {
    if (bits[i] != 0) throw DecodeError("nonzero payload padding");
  }
  DecodedPayload d;
  d.decision = bits[0] != 0;
  d.origin = static_cast<std::uint8_t>(bits[1] | (bits[2] << 1));
  for (int i = 0; i < 5; ++i) d.step_mod |= static_cast<std::uint8_t>(bits[3 + i] << i);
  return d;
}

std::vector<std::uint8_t> walsh_code(std::size_t order, std::size_t index) {
  if (order == 0 || !std::has_single_bit(order)) throw ConfigError("Walsh code order must be a power of two");
  if (index >= order) throw ConfigError("Walsh code index out of range");
  std::vector<std::uint8_t> code(order);
  for (std::size_t j = 0; j < order; ++j) code[j] = std::popcount(index & j) & 1;
  return code;
}

void PhyConfig::validate() const {
  if (spreading_factor == 0 || !std::has_single_bit(spreading_factor))
    throw ConfigError("spreading_factor must be a power of two");
  if (!(slot_time_s > 0.0)) throw ConfigError("slot_time_s must be positive");
  if (code_count == 0 || code_count > spreading_factor)
    throw ConfigError("code_count must be in [1, spreading_factor]");
}

std::vector<std::uint32_t> hop_slots(std::uint32_t hop_sequence, std::size_t n_chips) {
  std::vector<std::uint32_t> slots(n_chips);
  for (std::size_t i = 0; i < n_chips; ++i) slots[i] = static_cast<std::uint32_t>(i);
  Rng rng(derive_seed(hop_sequence, n_chips));
  shuffle(slots.begin(), slots.end(), rng);
  return slots;
}

MacFrame ppm_modulate_bits(std::span<const std::uint8_t> bits, std::span<const std::uint8_t> code,
                           std::uint16_t code_index, std::uint32_t hop_sequence, double slot_time_s, double tx_time) {
  check_code(code);
  if (bits.empty()) throw ConfigError("payload must have at least one bit");
  if (!(slot_time_s > 0.0)) throw ConfigError("slot_time_s must be positive");
  const auto slots = hop_slots(hop_sequence, bits.size() * code.size());
  return modulate_with_slots(bits, code, slots, code_index, hop_sequence, slot_time_s, tx_time);
}

MacFrame ppm_modulate(const AppMessage& msg, std::span<const std::uint8_t> code, std::uint16_t code_index,
                      std::uint32_t hop_sequence, double slot_time_s, double tx_time) {
  const auto bits = encode_payload(msg);
  return ppm_modulate_bits(bits, code, code_index, hop_sequence, slot_time_s, tx_time);
}

std::vector<std::uint8_t> ppm_demodulate(const MacFrame& frame, std::span<const std::uint8_t> code) {
  check_code(code);
  if (code.size() != frame.spreading_factor)
    throw DecodeError("code length " + std::to_string(code.size()) + " does not match spreading factor " +
                      std::to_string(frame.spreading_factor));
  if (frame.pulses.empty() || frame.pulses.size() % code.size() != 0)
    throw DecodeError("frame chip count is not a multiple of the spreading factor");
  const auto slots = hop_slots(frame.hop_sequence, frame.pulses.size());
  return demodulate_with_slots(frame, code, slots);
}

double ChannelModel::loss_for(NodeId src, NodeId dst) const {
  if (auto it = link_loss.find({src, dst}); it != link_loss.end()) return it->second;
  return loss_probability;
}

void ChannelModel::validate() const {
  if (!(sound_speed > 0.0)) throw ConfigError("sound_speed must be positive");
  auto in_unit = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!in_unit(loss_probability)) throw ConfigError("loss_probability must be in [0, 1]");
  if (!in_unit(chip_flip_probability)) throw ConfigError("chip_flip_probability must be in [0, 1]");
  if (!(delay_jitter_s >= 0.0)) throw ConfigError("delay_jitter_s must be nonnegative");
  for (const auto& [link, p] : link_loss) {
    if (!in_unit(p)) throw ConfigError("per-link loss must be in [0, 1]");
  }
}

DeliveryOutcome transmit(const MacFrame& frame, const Link& link, const ChannelModel& channel, Rng& rng) {
  DeliveryOutcome out;
  const double loss = channel.loss_for(link.src, link.dst);
  out.delivered = !(loss > 0.0 && (loss >= 1.0 || bernoulli(rng, loss)));
  double delay = link.distance_m / channel.sound_speed;
  if (channel.delay_jitter_s > 0.0) delay += uniform(rng, 0.0, channel.delay_jitter_s);
  out.arrival_time = frame.tx_time + delay;
  return out;
}

double required_bitrate(double payload_bits, double t_app_s) {
  if (!(t_app_s > 0.0)) throw ConfigError("t_app must be positive");
  if (!(payload_bits >= 0.0)) throw ConfigError("payload_bits must be nonnegative");
  return payload_bits / t_app_s;
}

const NodeSchedule* Schedule::find(NodeId id) const {
  for (const auto& e : entries) {
    if (e.node == id) return &e;
  }
  return nullptr;
}

Schedule assign_codes(NodeId gateway, std::span<const Node> nodes, std::size_t code_count, std::uint64_t seed) {
  std::set<NodeId> ids;
  bool has_gateway = false;
  for (const auto& n : nodes) {
    if (!ids.insert(n.id).second) throw ConfigError("duplicate node id " + std::to_string(n.id));
    has_gateway |= n.id == gateway;
  }
  if (!has_gateway) throw ConfigError("gateway id " + std::to_string(gateway) + " is not among the nodes");
  if (nodes.size() > code_count)
    throw CapacityError(std::to_string(nodes.size()) + " nodes but only " + std::to_string(code_count) +
                        " orthogonal codes");

  Rng rng(derive_seed(seed, stable_hash("codes")));
  std::vector<std::uint16_t> codes(code_count);
  for (std::size_t i = 0; i < code_count; ++i) codes[i] = static_cast<std::uint16_t>(i);
  shuffle(codes.begin(), codes.end(), rng);

  Schedule s;
  s.gateway = gateway;
  std::size_t i = 0;
  for (NodeId id : ids) s.entries.push_back({id, codes[i++], static_cast<std::uint32_t>(rng() >> 32)});
  return s;
}

const SimEvent& EventQueue::push(double time, EventKind kind, NodeId node, std::uint64_t step, std::size_t ref) {
  heap_.push({time, next_seq_++, kind, node, step, ref});
  return heap_.top();
}

SimEvent EventQueue::pop() {
  SimEvent e = heap_.top();
  heap_.pop();
  return e;
}

void OracleConfig::validate() const {
  auto in_unit = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!in_unit(sensitivity) || !in_unit(specificity)) throw ConfigError("oracle sensitivity/specificity in [0, 1]");
  if (!(mean_error_run >= 1.0)) throw ConfigError("oracle mean_error_run must be >= 1");
  if (!(confident_p > 0.5 && confident_p <= 1.0)) throw ConfigError("oracle confident_p must be in (0.5, 1]");
}

void Scenario::validate() const {
  channel.validate();
  phy.validate();
  fusion.validate();
  if (std::abs(t_app_s - signal::kWindowSeconds) > 1e-12)
    throw ConfigError("t_app must equal the 4 s window (decisions are per window)");
  if (!(duration_s > 0.0)) throw ConfigError("duration_s must be positive");
  if (payload_bits < kMinPayloadBits) throw ConfigError("payload_bits must be at least 16");
  if (!(gateway_deadline_s > 0.0 && gateway_deadline_s < t_app_s))
    throw ConfigError("gateway_deadline_s must be in (0, t_app)");
  if (!(offered_load_bps >= 0.0)) throw ConfigError("offered_load_bps must be nonnegative");

  std::map<NodeKind, int> kinds;
  std::set<NodeId> ids;
  for (const auto& n : nodes) {
    ++kinds[n.kind];
    if (!ids.insert(n.id).second) throw ConfigError("duplicate node id " + std::to_string(n.id));
    if (n.id > 3) throw ConfigError("node ids must fit the 2-bit payload origin field (0..3)");
  }
  for (auto k : {NodeKind::IeegClassifier, NodeKind::EcgClassifier, NodeKind::Gateway, NodeKind::Dbs}) {
    if (kinds[k] != 1)
      throw ConfigError("scenario needs exactly one " + std::string(to_string(k)) + " node, found " +
                        std::to_string(kinds[k]));
  }

  for (const auto* src : {&ecg_source, &ieeg_source}) {
    if (src->kind == ClassifierSource::Kind::Oracle) {
      src->oracle.validate();
      if (src->channels == 0) throw ConfigError("oracle source needs at least one channel");
    } else {
      if (src->probabilities.empty()) throw ConfigError("probability source has no channels");
      const auto steps = static_cast<std::size_t>(duration_s / t_app_s + 1e-9);
      for (const auto& ch : src->probabilities) {
        if (ch.size() < steps)
          throw AlignmentError("probability stream has " + std::to_string(ch.size()) + " steps, scenario needs " +
                               std::to_string(steps));
      }
    }
  }
  if (ecg_source.kind == ClassifierSource::Kind::Oracle && ecg_source.channels != 1)
    throw ConfigError("the ECG classifier has exactly one channel");

  if (schedule) {
    std::set<std::uint16_t> codes;
    for (const auto& n : nodes) {
      const auto* e = schedule->find(n.id);
      if (!e)
        throw ScenarioError("node " + std::to_string(n.id) + " (" + std::string(to_string(n.kind)) +
                            ") is unreachable: no code/hop schedule");
      if (e->code_index >= phy.code_count) throw ScenarioError("scheduled code index out of range");
      if (!codes.insert(e->code_index).second) throw ScenarioError("two nodes share a spreading code");
    }
  }
}

// ---------------------------------------------------------------------------

namespace {

class Simulator {
 public:
  explicit Simulator(const Scenario& sc) : sc_(sc) {
    sc_.validate();
    for (const auto& n : sc_.nodes) {
      by_kind_[n.kind] = n.id;
      nodes_[n.id] = n;
    }
    gateway_ = by_kind_.at(NodeKind::Gateway);
    schedule_ = sc_.schedule ? *sc_.schedule : assign_codes(gateway_, sc_.nodes, sc_.phy.code_count, sc_.seed);

    const std::size_t n_chips = std::size_t{sc_.payload_bits} * sc_.phy.spreading_factor;
    for (const auto& e : schedule_.entries) {
      codes_[e.node] = walsh_code(sc_.phy.spreading_factor, e.code_index);
      slots_[e.node] = hop_slots(e.hop_sequence, n_chips);
    }

    steps_ = static_cast<std::uint64_t>(sc_.duration_s / sc_.t_app_s + 1e-9);
    classes_ = signal::classify_windows(sc_.onsets, steps_, sc_.horizon_s, sc_.exclusion_s);
    channel_rng_ = Rng(derive_seed(sc_.seed, stable_hash("channel")));
    for (auto kind : {NodeKind::EcgClassifier, NodeKind::IeegClassifier}) {
      oracle_rng_[kind] = Rng(derive_seed(sc_.seed, stable_hash(to_string(kind))));
      deciders_.emplace(kind, predictor::NodeDecider(sc_.fusion));
    }
    report_.duration_s = sc_.duration_s;
    report_.steps = steps_;
    report_.fused_decisions.assign(steps_, 0);
    fused_.assign(steps_, 0);
    results_.resize(steps_);
  }

  SimReport run() {
    control();
    for (std::uint64_t k = 0; k < steps_; ++k) {
      const double edge = static_cast<double>(k + 1) * sc_.t_app_s;
      queue_.push(edge, EventKind::WindowReady, by_kind_[NodeKind::EcgClassifier], k);
      queue_.push(edge, EventKind::WindowReady, by_kind_[NodeKind::IeegClassifier], k);
      queue_.push(edge + sc_.gateway_deadline_s, EventKind::Decision, gateway_, k);
    }
    if (sc_.offered_load_bps > 0.0) start_load();

    double last = 0.0;
    while (!queue_.empty()) {
      const SimEvent e = queue_.pop();
      if (e.time < last) report_.causality_ok = false;
      last = e.time;
      dispatch(e);
    }
    finish();
    return std::move(report_);
  }

 private:
  struct FrameRecord {
    AppMessage msg;
    MacFrame frame;
    NodeId rx = 0;
    double arrival = 0.0;
    bool load = false;
    bool collided = false;
  };

  struct StepResults {
    std::optional<bool> ecg, ieeg;
  };

  // Traffic generator event ids live above the application steps.
  static constexpr EventKind kLoadTick = EventKind::Control;

  void trace(double t, std::string_view kind, std::string_view src, std::string_view dst, const std::string& detail) {
    if (!sc_.record_trace) return;
    auto& out = report_.trace;
    out += fmt_time(t);
    out += ' ';
    out += kind;
    out += ' ';
    out += src;
    out += ' ';
    out += dst;
    out += ' ';
    out += detail;
    out += '\n';
  }

  std::string_view name(NodeId id) const { return to_string(nodes_.at(id).kind); }

  void control() {
    for (const auto& e : schedule_.entries) {
      trace(0.0, "control", name(gateway_), name(e.node),
            "code=" + std::to_string(e.code_index) + " hop=" + std::to_string(e.hop_sequence));
    }
  }

  void start_load() {
    const double interval = sc_.payload_bits / sc_.offered_load_bps;
    std::size_t i = 0;
    for (auto kind : {NodeKind::IeegClassifier, NodeKind::Dbs, NodeKind::EcgClassifier, NodeKind::Gateway}) {
      const double phase = interval * static_cast<double>(i++) / 4.0;
      queue_.push(phase, kLoadTick, by_kind_[kind], 0, load_marker);
    }
  }

  NodeId load_destination(NodeKind kind) const {
    switch (kind) {
      case NodeKind::IeegClassifier:
      case NodeKind::Gateway:
        return by_kind_.at(NodeKind::Dbs);
      default:
        return gateway_;
    }
  }

  void dispatch(const SimEvent& e) {
    switch (e.kind) {
      case EventKind::Control:
        if (e.ref == load_marker) on_load_tick(e);
        break;
      case EventKind::WindowReady:
        on_window(e);
        break;
      case EventKind::FrameTx:
        on_tx(e);
        break;
      case EventKind::FrameRx:
        on_rx(e);
        break;
      case EventKind::FrameDrop:
        on_loss(e);
        break;
      case EventKind::Decision:
        if (!fused_[e.step]) fuse(e.step, e.time);
        break;
      case EventKind::Alert:
      case EventKind::Stimulation:
        break;
    }
  }

  void on_load_tick(const SimEvent& e) {
    const double interval = sc_.payload_bits / sc_.offered_load_bps;
    const auto kind = nodes_.at(e.node).kind;
    AppMessage msg;
    msg.kind = kind == NodeKind::Gateway ? MessageKind::StimulationSettings : MessageKind::ClassificationResult;
    msg.source = e.node;
    msg.destination = load_destination(kind);
    msg.payload_bits = sc_.payload_bits;
    msg.step_index = e.step;
    msg.origin = e.node;
    send(msg, e.time, true);
    const double next = e.time + interval;
    if (next < sc_.duration_s) queue_.push(next, kLoadTick, e.node, e.step + 1, load_marker);
  }

  std::vector<double> probabilities(NodeKind kind, std::uint64_t k) {
    const auto& src = kind == NodeKind::EcgClassifier ? sc_.ecg_source : sc_.ieeg_source;
    if (src.kind == ClassifierSource::Kind::Probabilities) {
      std::vector<double> out;
      for (const auto& ch : src.probabilities) out.push_back(ch[k]);
      return out;
    }
    const auto& o = src.oracle;
    const bool truth = classes_[k] == signal::WindowClass::Preictal;
    const double err = truth ? 1.0 - o.sensitivity : 1.0 - o.specificity;
    auto& rng = oracle_rng_[kind];
    bool& in_error = oracle_state_[kind];
    if (o.mean_error_run <= 1.0) {
      in_error = bernoulli(rng, err);
    } else if (in_error) {
      in_error = !bernoulli(rng, 1.0 / o.mean_error_run);
    } else {
      const double enter = err >= 1.0 ? 1.0 : std::min(1.0, err / (o.mean_error_run * (1.0 - err)));
      in_error = bernoulli(rng, enter);
    }
    const bool decision = truth != in_error;
    return std::vector<double>(src.channels, decision ? o.confident_p : 1.0 - o.confident_p);
  }

  void on_window(const SimEvent& e) {
    const auto kind = nodes_.at(e.node).kind;
    const auto d = deciders_.at(kind).step(probabilities(kind, e.step));
    trace(e.time, "window", name(e.node), "-",
          "step=" + std::to_string(e.step) + " vote=" + (d.time ? "1" : "0"));
    AppMessage msg;
    msg.kind = MessageKind::ClassificationResult;
    msg.source = e.node;
    msg.destination = kind == NodeKind::IeegClassifier ? by_kind_[NodeKind::Dbs] : gateway_;
    msg.payload_bits = sc_.payload_bits;
    msg.step_index = e.step;
    msg.decision = d.time;
    msg.origin = e.node;
    local_[kind][e.step] = d;
    send(msg, e.time, false);
  }

  void send(const AppMessage& msg, double t, bool load) {
    const double start = std::max(t, busy_until_[msg.source]);
    const double duration = sc_.phy.frame_duration(sc_.payload_bits);
    busy_until_[msg.source] = start + duration;
    const auto& sched = *schedule_.find(msg.source);
    FrameRecord rec;
    rec.msg = msg;
    rec.rx = msg.destination;
    rec.load = load;
    rec.frame = modulate_with_slots(encode_payload(msg), codes_.at(msg.source), slots_.at(msg.source),
                                    sched.code_index, sched.hop_sequence, sc_.phy.slot_time_s, start);
    const std::size_t id = next_frame_++;
    frames_.emplace(id, std::move(rec));
    queue_.push(start, EventKind::FrameTx, msg.source, msg.step_index, id);
  }

  LinkStats& link(NodeId src, NodeId dst) {
    auto& l = links_[{src, dst}];
    l.src = src;
    l.dst = dst;
    return l;
  }

  void on_tx(const SimEvent& e) {
    auto& rec = frames_.at(e.ref);
    const Link lk{rec.msg.source, rec.rx, distance(nodes_.at(rec.msg.source).position, nodes_.at(rec.rx).position)};
    const auto outcome = transmit(rec.frame, lk, sc_.channel, channel_rng_);
    rec.arrival = outcome.arrival_time;
    ++link(lk.src, lk.dst).sent;
    ++sent_by_[lk.src];
    if (!rec.load) {
      trace(e.time, "tx", name(lk.src), name(lk.dst),
            std::string(to_string(rec.msg.kind)) + " step=" + std::to_string(rec.msg.step_index) +
                " code=" + std::to_string(rec.frame.code_index) + " chips=" + std::to_string(rec.frame.chip_count()));
    }
    const double done = outcome.arrival_time + rec.frame.duration;
    if (!outcome.delivered) {
      queue_.push(done, EventKind::FrameDrop, lk.dst, rec.msg.step_index, e.ref);
      return;
    }
    // Same-code overlap at one receiver corrupts both frames.
    auto& active = receiving_[{lk.dst, rec.frame.code_index}];
    if (active.second > outcome.arrival_time && frames_.count(active.first)) {
      rec.collided = true;
      frames_.at(active.first).collided = true;
    }
    if (done > active.second) active = {e.ref, done};
    queue_.push(done, EventKind::FrameRx, lk.dst, rec.msg.step_index, e.ref);
  }

  void on_loss(const SimEvent& e) {
    auto node = frames_.extract(e.ref);
    const auto& rec = node.mapped();
    ++link(rec.msg.source, rec.rx).dropped;
    if (!rec.load)
      trace(e.time, "drop", name(rec.msg.source), name(rec.rx),
            "step=" + std::to_string(rec.msg.step_index) + " cause=loss");
  }

  void on_rx(const SimEvent& e) {
    auto node = frames_.extract(e.ref);
    auto& rec = node.mapped();
    auto& ls = link(rec.msg.source, rec.rx);
    const auto drop = [&](const char* cause, std::uint64_t LinkStats::*counter) {
      ++ls.dropped;
      ++(ls.*counter);
      if (!rec.load)
        trace(e.time, "drop", name(rec.msg.source), name(rec.rx),
              "step=" + std::to_string(rec.msg.step_index) + " cause=" + cause);
    };
    if (rec.collided) return drop("collision", &LinkStats::collisions);

    if (sc_.channel.chip_flip_probability > 0.0) {
      for (auto& p : rec.frame.pulses) {
        if (bernoulli(channel_rng_, sc_.channel.chip_flip_probability)) p ^= 1;
      }
    }
    DecodedPayload payload;
    try {
      payload = decode_payload(demodulate_with_slots(rec.frame, codes_.at(rec.msg.source), slots_.at(rec.msg.source)));
    } catch (const DecodeError&) {
      return drop("decode", &LinkStats::decode_failures);
    }

    ++ls.delivered;
    ++delivered_by_[rec.msg.source];
    delivered_bits_by_[rec.msg.source] += sc_.payload_bits;
    if (rec.load) return;

    trace(e.time, "rx", name(rec.msg.source), name(rec.rx),
          std::string(to_string(rec.msg.kind)) + " step=" + std::to_string(rec.msg.step_index) +
              " decision=" + (payload.decision ? "1" : "0"));

    const auto rx_kind = nodes_.at(rec.rx).kind;
    if (rec.msg.kind == MessageKind::StimulationSettings && rx_kind == NodeKind::Dbs) {
      ++report_.stimulations;
      trace(e.time, "stimulation", name(rec.rx), "-", "step=" + std::to_string(rec.msg.step_index));
      return;
    }
    if (rec.msg.kind != MessageKind::ClassificationResult) return;
    if (rx_kind == NodeKind::Dbs) {
      // iEEG controller relays the implant's result to the gateway.
      AppMessage relay = rec.msg;
      relay.source = rec.rx;
      relay.destination = gateway_;
      relay.decision = payload.decision;
      send(relay, e.time, false);
    } else if (rx_kind == NodeKind::Gateway) {
      const auto origin = nodes_.at(rec.msg.origin).kind;
      on_result(origin, rec.msg.step_index, payload.decision, e.time);
    }
  }

  void on_result(NodeKind origin, std::uint64_t step, bool decision, double t) {
    auto& r = results_[step];
    if (origin == NodeKind::EcgClassifier) {
      r.ecg = decision;
      held_ecg_ = decision;
    } else {
      r.ieeg = decision;
      held_ieeg_ = decision;
    }
    if (r.ecg && r.ieeg && !fused_[step]) fuse(step, t);
  }

  void fuse(std::uint64_t k, double t) {
    fused_[k] = 1;
    const auto& r = results_[k];
    const bool ecg = r.ecg.value_or(held_ecg_);
    const bool ieeg = r.ieeg.value_or(held_ieeg_);
    const bool fused = predictor::fuse_modalities(ecg, ieeg, sc_.fusion.modality_rule);
    report_.fused_decisions[k] = fused;
    if (classes_[k] != signal::WindowClass::Excluded) {
      const bool truth = classes_[k] == signal::WindowClass::Preictal;
      report_.fused_cm.add(fused, truth);
      report_.ecg_cm.add(ecg, truth);
      report_.ieeg_cm.add(ieeg, truth);
    }
    const double edge = static_cast<double>(k + 1) * sc_.t_app_s;
    trace(t, "decision", name(gateway_), "-",
          "step=" + std::to_string(k) + " ecg=" + (ecg ? "1" : "0") + " ieeg=" + (ieeg ? "1" : "0") +
              " fused=" + (fused ? "1" : "0") + (r.ecg ? "" : " ecg_held") + (r.ieeg ? "" : " ieeg_held"));
    if (sc_.record_trace) {
      for (auto kind : {NodeKind::EcgClassifier, NodeKind::IeegClassifier}) {
        auto& local = local_[kind];
        if (auto it = local.find(k); it != local.end()) {
          report_.decision_trace += predictor::trace_line(edge, to_string(kind), it->second, fused);
          report_.decision_trace += '\n';
        }
      }
    }
    local_[NodeKind::EcgClassifier].erase(k);
    local_[NodeKind::IeegClassifier].erase(k);

    if (!fused) return;
    const double latency = t - edge;
    ++report_.alerts;
    report_.alert_latencies.push_back(latency);
    trace(t, "alert", name(gateway_), "sink", "step=" + std::to_string(k) + " latency=" + fmt_time(latency));
    AppMessage stim;
    stim.kind = MessageKind::StimulationSettings;
    stim.source = gateway_;
    stim.destination = by_kind_[NodeKind::Dbs];
    stim.payload_bits = sc_.payload_bits;
    stim.step_index = k;
    stim.decision = true;
    stim.origin = gateway_;
    send(stim, t, false);
  }

  void finish() {
    for (const auto& [id, n] : nodes_) {
      NodeStats s;
      s.id = id;
      s.kind = n.kind;
      s.frames_sent = sent_by_[id];
      s.frames_delivered = delivered_by_[id];
      s.delivered_bits = delivered_bits_by_[id];
      s.goodput_bps = static_cast<double>(s.delivered_bits) / sc_.duration_s;
      report_.aggregate_goodput_bps += s.goodput_bps;
      report_.nodes.push_back(s);
    }
    for (const auto& [key, l] : links_) {
      report_.links.push_back(l);
      report_.frames_sent += l.sent;
      report_.frames_delivered += l.delivered;
      report_.frames_dropped += l.dropped;
    }
    report_.drop_rate =
        report_.frames_sent ? static_cast<double>(report_.frames_dropped) / static_cast<double>(report_.frames_sent) : 0.0;
    for (double l : report_.alert_latencies) report_.max_alert_latency = std::max(report_.max_alert_latency, l);
    report_.alert_latency_within_t_app = report_.max_alert_latency <= sc_.t_app_s;
  }

  static constexpr std::size_t load_marker = SIZE_MAX;

  const Scenario& sc_;
  std::map<NodeKind, NodeId> by_kind_;
  std::map<NodeId, Node> nodes_;
  NodeId gateway_ = 0;
  Schedule schedule_;
  std::map<NodeId, std::vector<std::uint8_t>> codes_;
  std::map<NodeId, std::vector<std::uint32_t>> slots_;
  std::uint64_t steps_ = 0;
  std::vector<signal::WindowClass> classes_;
  Rng channel_rng_;
  std::map<NodeKind, Rng> oracle_rng_;
  std::map<NodeKind, bool> oracle_state_;
  std::map<NodeKind, predictor::NodeDecider> deciders_;
  std::map<NodeKind, std::map<std::uint64_t, predictor::StepDecision>> local_;
  EventQueue queue_;
  std::unordered_map<std::size_t, FrameRecord> frames_;
  std::size_t next_frame_ = 0;
  std::map<NodeId, double> busy_until_;
  std::map<std::pair<NodeId, std::uint16_t>, std::pair<std::size_t, double>> receiving_;
  std::map<std::pair<NodeId, NodeId>, LinkStats> links_;
  std::map<NodeId, std::uint64_t> sent_by_, delivered_by_, delivered_bits_by_;
  std::vector<StepResults> results_;
  std::vector<std::uint8_t> fused_;
  bool held_ecg_ = false;
  bool held_ieeg_ = false;
  SimReport report_;
};

}  // namespace

SimReport run_simulation(const Scenario& scenario) {
  return Simulator(scenario).run();
}

}  // namespace seiznet::netsim
