#pragma once

#include <cstdint>
#include <span>
#include <string>

namespace seiznet::metrics {

/// Counts of scored 4 s decisions.
struct ConfusionMatrix {
  std::uint64_t tp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const { return tp + tn + fp + fn; }
  std::uint64_t positives() const { return tp + fn; }
  std::uint64_t negatives() const { return tn + fp; }

  void add(bool decision, bool label);
  ConfusionMatrix& operator+=(const ConfusionMatrix& o);

  bool operator==(const ConfusionMatrix&) const = default;
};

/// Decisions per hour at one decision per 4 s window.
inline constexpr double kDecisionsPerHour = 3600.0 / 4.0;

ConfusionMatrix confusion_from_decisions(std::span<const std::uint8_t> decisions, std::span<const std::uint8_t> labels);

// All of these throw UndefinedMetricError on a zero denominator.
double sensitivity(const ConfusionMatrix& cm);
double specificity(const ConfusionMatrix& cm);
double accuracy(const ConfusionMatrix& cm);
double fpr_per_hour(const ConfusionMatrix& cm);

/// Area under the ROC curve via the Mann-Whitney rank statistic; tied
/// scores count 1/2. Throws UndefinedMetricError unless both classes occur.
double auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// Metric set of one evaluation row; undefined entries are NaN.
struct Summary {
  ConfusionMatrix cm;
  double sensitivity;
  double specificity;
  double accuracy;
  double fph;
  double auc;
};

/// Computes every defined metric, leaving undefined ones as NaN (used for
/// reports where one class may be absent).
Summary summarize(const ConfusionMatrix& cm, double auc_value);

}  // namespace seiznet::metrics
