#pragma once

// Discrete-event model of the four-node intra-body network: ultrasonic
// channel (propagation delay + Bernoulli frame loss), PPM with Walsh
// spreading codes and per-node time-hopping, centralized code assignment by
// the gateway, and the closed classification -> fusion -> alert/stimulation
// loop.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "seiznet/metrics.hpp"
#include "seiznet/predictor.hpp"
#include "seiznet/random.hpp"

namespace seiznet::netsim {

using NodeId = std::uint16_t;

enum class NodeKind : std::uint8_t { IeegClassifier, EcgClassifier, Gateway, Dbs };

std::string_view to_string(NodeKind k);
NodeKind parse_node_kind(std::string_view s);

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;
};

double distance(const Vec3& a, const Vec3& b);

struct Node {
  NodeId id = 0;
  NodeKind kind = NodeKind::Gateway;
  Vec3 position;
};

/// Implant, DBS controller 5 mm away, chest ECG and wearable gateway.
std::vector<Node> default_nodes();

enum class MessageKind : std::uint8_t { ClassificationResult, StimulationSettings, Alert };

std::string_view to_string(MessageKind k);

struct AppMessage {
  MessageKind kind = MessageKind::ClassificationResult;
  NodeId source = 0;
  NodeId destination = 0;
  std::uint32_t payload_bits = 16;
  std::uint64_t step_index = 0;
  bool decision = false;
  NodeId origin = 0;  // classifier that produced the decision (relays keep it)
};

inline constexpr std::uint32_t kDefaultPayloadBits = 16;
inline constexpr std::uint32_t kMinPayloadBits = 16;

/// Payload bits (LSB first): decision (1) | origin node (2) | step mod 32 (5)
/// | zero padding | CRC-8 (poly 0x07) over the first 8 bits.
std::vector<std::uint8_t> encode_payload(const AppMessage& msg);

struct DecodedPayload {
  bool decision = false;
  std::uint8_t origin = 0;
  std::uint8_t step_mod = 0;
};

/// Throws DecodeError on a CRC mismatch.
DecodedPayload decode_payload(std::span<const std::uint8_t> bits);

std::uint8_t crc8(std::span<const std::uint8_t> bits);

/// Row `index` of the Sylvester-Hadamard matrix of size `order` as chips
/// (0 for +1, 1 for -1). Throws ConfigError unless order is a power of two.
std::vector<std::uint8_t> walsh_code(std::size_t order, std::size_t index);

struct PhyConfig {
  std::uint32_t spreading_factor = 8;
  double slot_time_s = 100e-6;
  std::uint32_t code_count = 8;  // available orthogonal codes

  double frame_duration(std::uint32_t payload_bits) const {
    return static_cast<double>(payload_bits) * spreading_factor * slot_time_s;
  }
  double bit_rate() const { return 1.0 / (spreading_factor * slot_time_s); }

  void validate() const;
};

/// On-air frame. pulses[s] is the PPM position (0 early, 1 late) in slot s.
struct MacFrame {
  std::uint16_t code_index = 0;
  std::uint32_t hop_sequence = 0;
  std::uint32_t spreading_factor = 0;
  std::vector<std::uint8_t> pulses;
  double tx_time = 0.0;
  double duration = 0.0;

  std::size_t chip_count() const { return pulses.size(); }
};

/// Slot of every chip of an `n_chips` frame under hop sequence `hop_sequence`.
std::vector<std::uint32_t> hop_slots(std::uint32_t hop_sequence, std::size_t n_chips);

MacFrame ppm_modulate_bits(std::span<const std::uint8_t> bits, std::span<const std::uint8_t> code,
                           std::uint16_t code_index, std::uint32_t hop_sequence, double slot_time_s,
                           double tx_time = 0.0);

MacFrame ppm_modulate(const AppMessage& msg, std::span<const std::uint8_t> code, std::uint16_t code_index,
                      std::uint32_t hop_sequence, double slot_time_s, double tx_time = 0.0);

/// Chip-majority despreading; a tied bit throws DecodeError.
std::vector<std::uint8_t> ppm_demodulate(const MacFrame& frame, std::span<const std::uint8_t> code);

struct ChannelModel {
  double sound_speed = 1540.0;  // m/s, soft tissue
  double loss_probability = 0.005;
  double delay_jitter_s = 0.0;
  double chip_flip_probability = 0.0;
  std::map<std::pair<NodeId, NodeId>, double> link_loss;  // per-link overrides

  double loss_for(NodeId src, NodeId dst) const;
  void validate() const;
};

struct Link {
  NodeId src = 0;
  NodeId dst = 0;
  double distance_m = 0.0;
};

struct DeliveryOutcome {
  bool delivered = false;
  double arrival_time = 0.0;  // leading edge at the receiver
};

/// Bernoulli loss draw plus propagation delay (distance / sound speed,
/// optional uniform jitter).
DeliveryOutcome transmit(const MacFrame& frame, const Link& link, const ChannelModel& channel, Rng& rng);

double required_bitrate(double payload_bits, double t_app_s);

struct NodeSchedule {
  NodeId node = 0;
  std::uint16_t code_index = 0;
  std::uint32_t hop_sequence = 0;
};

struct Schedule {
  NodeId gateway = 0;
  std::vector<NodeSchedule> entries;

  const NodeSchedule* find(NodeId id) const;
};

/// Gateway-side assignment of distinct codes and hop sequences.
Schedule assign_codes(NodeId gateway, std::span<const Node> nodes, std::size_t code_count, std::uint64_t seed);

enum class EventKind : std::uint8_t { Control, WindowReady, FrameTx, FrameRx, FrameDrop, Decision, Alert, Stimulation };

std::string_view to_string(EventKind k);

struct SimEvent {
  double time = 0.0;
  std::uint64_t seq = 0;
  EventKind kind = EventKind::Control;
  NodeId node = 0;
  std::uint64_t step = 0;
  std::size_t ref = 0;  // frame index for frame events
};

/// Min-queue on (time, insertion sequence).
class EventQueue {
 public:
  const SimEvent& push(double time, EventKind kind, NodeId node = 0, std::uint64_t step = 0, std::size_t ref = 0);
  SimEvent pop();
  bool empty() const { return heap_.empty(); }
  std::size_t size() const { return heap_.size(); }

 private:
  struct Later {
    bool operator()(const SimEvent& a, const SimEvent& b) const {
      return a.time != b.time ? a.time > b.time : a.seq > b.seq;
    }
  };
  std::priority_queue<SimEvent, std::vector<SimEvent>, Later> heap_;
  std::uint64_t next_seq_ = 0;
};

/// Synthetic classifier with configured error rates. Errors arrive in runs
/// (two-state Markov chain with mean run length `mean_error_run` windows) so
/// they can survive time voting; 1 gives independent errors.
struct OracleConfig {
  double sensitivity = 0.94;
  double specificity = 0.955;
  double mean_error_run = 1.0;
  double confident_p = 0.9;

  void validate() const;
};

struct ClassifierSource {
  enum class Kind : std::uint8_t { Oracle, Probabilities };
  Kind kind = Kind::Oracle;
  OracleConfig oracle;
  std::size_t channels = 1;                    // oracle channel count
  std::vector<std::vector<double>> probabilities;  // [channel][step] for Kind::Probabilities
};

struct Scenario {
  std::vector<Node> nodes = default_nodes();
  ChannelModel channel;
  PhyConfig phy;
  std::optional<Schedule> schedule;  // explicit assignment instead of assign_codes
  std::uint32_t payload_bits = kDefaultPayloadBits;
  double t_app_s = 4.0;
  double duration_s = 3600.0;
  std::uint64_t seed = 0;
  predictor::FusionConfig fusion;
  double gateway_deadline_s = 0.5;  // fuse with held decisions if a result is missing

  std::vector<double> onsets;
  double horizon_s = 3600.0;
  double exclusion_s = 600.0;

  ClassifierSource ecg_source;
  ClassifierSource ieeg_source;

  double offered_load_bps = 0.0;  // extra saturating traffic per transmitting node
  bool record_trace = true;

  void validate() const;
};

Scenario parse_scenario(std::string_view json_text);
Scenario load_scenario(const std::filesystem::path& path);

struct NodeStats {
  NodeId id = 0;
  NodeKind kind = NodeKind::Gateway;
  std::uint64_t frames_sent = 0;
  std::uint64_t frames_delivered = 0;
  std::uint64_t delivered_bits = 0;
  double goodput_bps = 0.0;
};

struct LinkStats {
  NodeId src = 0;
  NodeId dst = 0;
  std::uint64_t sent = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;  // channel loss + decode failures + collisions
  std::uint64_t decode_failures = 0;
  std::uint64_t collisions = 0;
};

struct SimReport {
  double duration_s = 0.0;
  std::uint64_t steps = 0;
  std::vector<NodeStats> nodes;
  std::vector<LinkStats> links;
  std::uint64_t frames_sent = 0;
  std::uint64_t frames_delivered = 0;
  std::uint64_t frames_dropped = 0;
  double drop_rate = 0.0;
  double aggregate_goodput_bps = 0.0;

  std::uint64_t alerts = 0;
  std::uint64_t stimulations = 0;
  std::vector<double> alert_latencies;  // from the closing edge of the triggering window
  double max_alert_latency = 0.0;
  bool alert_latency_within_t_app = true;
  bool causality_ok = true;  // every dequeued timestamp was nondecreasing

  metrics::ConfusionMatrix fused_cm;
  metrics::ConfusionMatrix ecg_cm;   // decisions as seen by the gateway
  metrics::ConfusionMatrix ieeg_cm;
  std::vector<std::uint8_t> fused_decisions;  // per step

  std::string trace;           // `timestamp_s kind src dst detail` lines
  std::string decision_trace;  // predictor trace CSV

  std::string to_json() const;
};

SimReport run_simulation(const Scenario& scenario);

}  // namespace seiznet::netsim
