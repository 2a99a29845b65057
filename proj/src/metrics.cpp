#include "seiznet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "seiznet/error.hpp"

namespace seiznet::metrics {

void ConfusionMatrix::add(bool decision, bool label) {
  if (label) {
    decision ? ++tp : ++fn;
  } else {
    decision ? ++fp : ++tn;
  }
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& o) {
  tp += o.tp;
  tn += o.tn;
  fp += o.fp;
  fn += o.fn;
  return *this;
}

ConfusionMatrix confusion_from_decisions(std::span<const std::uint8_t> decisions, std::span<const std::uint8_t> labels) {
  if (decisions.size() != labels.size())
    throw AlignmentError("decision/label length mismatch: " + std::to_string(decisions.size()) + " vs " +
                         std::to_string(labels.size()));
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < decisions.size(); ++i) cm.add(decisions[i] != 0, labels[i] != 0);
  return cm;
}

double sensitivity(const ConfusionMatrix& cm) {
  if (cm.positives() == 0) throw UndefinedMetricError("sensitivity undefined: no preictal decisions scored");
  return static_cast<double>(cm.tp) / static_cast<double>(cm.positives());
}

double specificity(const ConfusionMatrix& cm) {
  if (cm.negatives() == 0) throw UndefinedMetricError("specificity undefined: no interictal decisions scored");
  return static_cast<double>(cm.tn) / static_cast<double>(cm.negatives());
}

double accuracy(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw UndefinedMetricError("accuracy undefined: empty confusion matrix");
  return static_cast<double>(cm.tn + cm.tp) / static_cast<double>(cm.total());
}

double fpr_per_hour(const ConfusionMatrix& cm) {
  if (cm.negatives() == 0) throw UndefinedMetricError("false positive rate undefined: no interictal decisions");
  return static_cast<double>(cm.fp) / static_cast<double>(cm.negatives()) * kDecisionsPerHour;
}

double auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size())
    throw AlignmentError("score/label length mismatch: " + std::to_string(scores.size()) + " vs " +
                         std::to_string(labels.size()));
  for (double s : scores) {
    if (std::isnan(s)) throw NumericError("NaN score passed to auc");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });

  // Sum of midranks of the positives.
  double positive_rank_sum = 0.0;
  std::uint64_t n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) {
        positive_rank_sum += midrank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::uint64_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw UndefinedMetricError("auc undefined: both classes must be present");
  const double n_p = static_cast<double>(n_pos);
  const double u = positive_rank_sum - n_p * (n_p + 1.0) / 2.0;
  return u / (n_p * static_cast<double>(n_neg));
}

Summary summarize(const ConfusionMatrix& cm, double auc_value) {
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  auto guarded = [&](double (*f)(const ConfusionMatrix&)) {
    try {
      return f(cm);
    } catch (const UndefinedMetricError&) {
      return nan;
    }
  };
  return {cm, guarded(sensitivity), guarded(specificity), guarded(accuracy), guarded(fpr_per_hour), auc_value};
}

}  // namespace seiznet::metrics
