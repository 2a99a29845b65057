#pragma once

// Turns per-window classifier probabilities into alarm decisions:
// threshold -> channel majority -> time majority over the last 15 windows
// -> cross-modality fusion at the gateway.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace seiznet::predictor {

inline constexpr std::size_t kDefaultTimeWindow = 15;  // 60 s of 4 s decisions

enum class ModalityRule : std::uint8_t { And, Or, EcgOnly, IeegOnly };

std::string_view to_string(ModalityRule r);
ModalityRule parse_modality_rule(std::string_view s);

/// Rolling store of the most recent binary decisions, oldest first.
class DecisionBuffer {
 public:
  explicit DecisionBuffer(std::size_t capacity = kDefaultTimeWindow);

  void push(bool decision);
  void clear();

  std::size_t capacity() const { return capacity_; }
  std::size_t fill_count() const { return fill_; }
  bool full() const { return fill_ == capacity_; }
  std::size_t ones() const { return ones_; }

  /// Decisions oldest first.
  std::vector<std::uint8_t> contents() const;

 private:
  std::vector<std::uint8_t> ring_;
  std::size_t capacity_;
  std::size_t head_ = 0;  // next write position
  std::size_t fill_ = 0;
  std::size_t ones_ = 0;
};

struct FusionConfig {
  double threshold = 0.5;
  std::size_t time_window = kDefaultTimeWindow;
  ModalityRule modality_rule = ModalityRule::And;

  /// Throws ConfigError unless the threshold is in [0, 1] and the time
  /// window is odd.
  void validate() const;
};

bool threshold_decision(double p, double threshold);

/// Strict majority of a full buffer; Interictal (0) while warming up.
bool time_vote(const DecisionBuffer& buf);

/// Majority across channels; an exact tie on an even count votes Preictal.
bool channel_vote(std::span<const std::uint8_t> decisions);

bool fuse_modalities(bool ecg_decision, bool ieeg_decision, ModalityRule rule);

/// Everything computed for one node at one 4 s step.
struct StepDecision {
  std::vector<double> probabilities;
  std::vector<std::uint8_t> thresholded;
  bool channel = false;
  bool time = false;
};

/// Stateful per-node decider: threshold each channel, channel vote, push
/// into one time buffer, emit the time vote.
class NodeDecider {
 public:
  explicit NodeDecider(const FusionConfig& cfg = {});

  StepDecision step(std::span<const double> channel_probabilities);
  void reset() { buffer_.clear(); }

  const DecisionBuffer& buffer() const { return buffer_; }

 private:
  double threshold_;
  DecisionBuffer buffer_;
};

/// Runs the decider over aligned streams [channel][step].
std::vector<StepDecision> decide_stream(const std::vector<std::vector<double>>& channel_streams,
                                        const FusionConfig& cfg);

/// Final time-voted decision per step for a multi-channel (iEEG) node.
std::vector<std::uint8_t> ieeg_decide(const std::vector<std::vector<double>>& channel_streams, const FusionConfig& cfg);

/// Single-channel special case.
std::vector<std::uint8_t> ecg_decide(std::span<const double> stream, const FusionConfig& cfg);

/// One line of the decision trace:
/// `t_s,modality,raw_p,thresholded,channel_vote,time_vote,fused`.
/// Multi-channel probabilities and thresholds are joined with ';'.
std::string trace_line(double t_s, std::string_view modality, const StepDecision& d, bool fused);

inline constexpr std::string_view kTraceHeader = "t_s,modality,raw_p,thresholded,channel_vote,time_vote,fused";

}  // namespace seiznet::predictor
