#include "seiznet/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "seiznet/error.hpp"

namespace seiznet::predictor {

std::string_view to_string(ModalityRule r) {
  switch (r) {
    case ModalityRule::And:
      return "and";
    case ModalityRule::Or:
      return "or";
    case ModalityRule::EcgOnly:
      return "ecg";
    case ModalityRule::IeegOnly:
      return "ieeg";
  }
  return "?";
}

ModalityRule parse_modality_rule(std::string_view s) {
  if (s == "and" || s == "AND") return ModalityRule::And;
  if (s == "or" || s == "OR") return ModalityRule::Or;
  if (s == "ecg" || s == "ECG_only") return ModalityRule::EcgOnly;
  if (s == "ieeg" || s == "IEEG_only") return ModalityRule::IeegOnly;
  throw ConfigError("unknown fusion rule '" + std::string(s) + "' (expected and|or|ecg|ieeg)");
}

DecisionBuffer::DecisionBuffer(std::size_t capacity) : ring_(capacity, 0), capacity_(capacity) {
  if (capacity == 0) throw ConfigError("decision buffer capacity must be positive");
}

void DecisionBuffer::push(bool decision) {
  if (fill_ == capacity_) {
    ones_ -= ring_[head_];
  } else {
    ++fill_;
  }
  ring_[head_] = decision ? 1 : 0;
  ones_ += ring_[head_];
  head_ = (head_ + 1) % capacity_;
}

void DecisionBuffer::clear() {
  std::fill(ring_.begin(), ring_.end(), 0);
  head_ = fill_ = ones_ = 0;
}

std::vector<std::uint8_t> DecisionBuffer::contents() const {
  std::vector<std::uint8_t> out;
  out.reserve(fill_);
  const std::size_t oldest = (head_ + capacity_ - fill_) % capacity_;
  for (std::size_t i = 0; i < fill_; ++i) out.push_back(ring_[(oldest + i) % capacity_]);
  return out;
}

void FusionConfig::validate() const {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("decision threshold must be in [0, 1]");
  if (time_window == 0 || time_window % 2 == 0)
    throw ConfigError("time_window must be odd for a tie-free vote, got " + std::to_string(time_window));
}

bool threshold_decision(double p, double threshold) {
  return p >= threshold;
}

bool time_vote(const DecisionBuffer& buf) {
  if (!buf.full()) return false;
  return buf.ones() > buf.capacity() / 2;
}

bool channel_vote(std::span<const std::uint8_t> decisions) {
  if (decisions.empty()) throw ConfigError("channel vote needs at least one channel");
  std::size_t ones = 0;
  for (auto d : decisions) ones += d != 0;
  return 2 * ones >= decisions.size();
}

bool fuse_modalities(bool ecg_decision, bool ieeg_decision, ModalityRule rule) {
  switch (rule) {
    case ModalityRule::And:
      return ecg_decision && ieeg_decision;
    case ModalityRule::Or:
      return ecg_decision || ieeg_decision;
    case ModalityRule::EcgOnly:
      return ecg_decision;
    case ModalityRule::IeegOnly:
      return ieeg_decision;
  }
  return false;
}

NodeDecider::NodeDecider(const FusionConfig& cfg) : threshold_(cfg.threshold), buffer_(cfg.time_window) {
  cfg.validate();
}

StepDecision NodeDecider::step(std::span<const double> channel_probabilities) {
  StepDecision d;
  d.probabilities.assign(channel_probabilities.begin(), channel_probabilities.end());
  d.thresholded.reserve(d.probabilities.size());
  for (double p : d.probabilities) {
    if (std::isnan(p)) throw NumericError("NaN probability reached the decider");
    d.thresholded.push_back(threshold_decision(p, threshold_) ? 1 : 0);
  }
  d.channel = channel_vote(d.thresholded);
  buffer_.push(d.channel);
  d.time = time_vote(buffer_);
  return d;
}

std::vector<StepDecision> decide_stream(const std::vector<std::vector<double>>& channel_streams,
                                        const FusionConfig& cfg) {
  if (channel_streams.empty()) throw ConfigError("at least one channel stream is required");
  const std::size_t steps = channel_streams.front().size();
  for (const auto& s : channel_streams) {
    if (s.size() != steps)
      throw AlignmentError("channel streams differ in length: " + std::to_string(s.size()) + " vs " +
                           std::to_string(steps));
  }
  NodeDecider decider(cfg);
  std::vector<StepDecision> out;
  out.reserve(steps);
  std::vector<double> column(channel_streams.size());
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t c = 0; c < channel_streams.size(); ++c) column[c] = channel_streams[c][t];
    out.push_back(decider.step(column));
  }
  return out;
}

std::vector<std::uint8_t> ieeg_decide(const std::vector<std::vector<double>>& channel_streams, const FusionConfig& cfg) {
  std::vector<std::uint8_t> out;
  for (const auto& d : decide_stream(channel_streams, cfg)) out.push_back(d.time ? 1 : 0);
  return out;
}

std::vector<std::uint8_t> ecg_decide(std::span<const double> stream, const FusionConfig& cfg) {
  return ieeg_decide({std::vector<double>(stream.begin(), stream.end())}, cfg);
}

std::string trace_line(double t_s, std::string_view modality, const StepDecision& d, bool fused) {
  std::string line;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", t_s);
  line += buf;
  line += ',';
  line += modality;
  line += ',';
  for (std::size_t i = 0; i < d.probabilities.size(); ++i) {
    if (i) line += ';';
    std::snprintf(buf, sizeof buf, "%.6f", d.probabilities[i]);
    line += buf;
  }
  line += ',';
  for (std::size_t i = 0; i < d.thresholded.size(); ++i) {
    if (i) line += ';';
    line += d.thresholded[i] ? '1' : '0';
  }
  line += ',';
  line += d.channel ? '1' : '0';
  line += ',';
  line += d.time ? '1' : '0';
  line += ',';
  line += fused ? '1' : '0';
  return line;
}

}  // namespace seiznet::predictor
