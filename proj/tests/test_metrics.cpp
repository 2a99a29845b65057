#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "seiznet/error.hpp"
#include "seiznet/metrics.hpp"
#include "seiznet/random.hpp"

using namespace seiznet;
using namespace seiznet::metrics;

namespace {

// O(n^2) pair count: P(score_pos > score_neg) + 1/2 P(equal).
double pair_auc(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      pairs += 1.0;
      if (s[i] > s[j]) wins += 1.0;
      if (s[i] == s[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

ConfusionMatrix random_cm(Rng& rng) {
  return {uniform_index(rng, 1000), uniform_index(rng, 5000) + 1, uniform_index(rng, 500), uniform_index(rng, 100)};
}

}  // namespace

TEST_CASE("confusion counts") {
  const std::vector<std::uint8_t> d{1, 0}, l{1, 0};
  const auto cm = confusion_from_decisions(d, l);
  CHECK(cm == ConfusionMatrix{1, 1, 0, 0});
  const auto all_miss = confusion_from_decisions(std::vector<std::uint8_t>(5, 0), std::vector<std::uint8_t>(5, 1));
  CHECK(all_miss.fn == 5);
  CHECK(all_miss.total() == 5);
  CHECK_THROWS_AS(confusion_from_decisions(d, std::vector<std::uint8_t>{1}), AlignmentError);
}

TEST_CASE("confusion matches a brute-force recount") {
  Rng rng(1);
  std::vector<std::uint8_t> d(1000), l(1000);
  for (std::size_t i = 0; i < 1000; ++i) {
    d[i] = bernoulli(rng, 0.3);
    l[i] = bernoulli(rng, 0.2);
  }
  std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < 1000; ++i) {
    if (d[i] && l[i]) ++tp;
    if (!d[i] && !l[i]) ++tn;
    if (d[i] && !l[i]) ++fp;
    if (!d[i] && l[i]) ++fn;
  }
  CHECK(confusion_from_decisions(d, l) == ConfusionMatrix{tp, tn, fp, fn});
}

TEST_CASE("sensitivity, specificity, accuracy examples") {
  CHECK(sensitivity({94, 0, 0, 6}) == doctest::Approx(0.94).epsilon(1e-15));
  CHECK(specificity({0, 1, 0, 0}) == 1.0);
  CHECK_THROWS_AS(sensitivity({0, 5, 5, 0}), UndefinedMetricError);
  CHECK_THROWS_AS(specificity({5, 0, 0, 5}), UndefinedMetricError);
  CHECK(accuracy({50, 50, 0, 0}) == 1.0);
  CHECK(accuracy({0, 0, 50, 50}) == 0.0);
  CHECK(accuracy({9, 90, 1, 0}) == doctest::Approx(0.99).epsilon(1e-15));
  CHECK_THROWS_AS(accuracy({}), UndefinedMetricError);
}

TEST_CASE("false positives per hour") {
  CHECK(fpr_per_hour({3, 100, 0, 1}) == 0.0);
  CHECK(fpr_per_hour({0, 891, 9, 0}) == doctest::Approx(9.0).epsilon(1e-15));
  CHECK(fpr_per_hour({0, 3899, 1, 0}) == doctest::Approx(900.0 / 3900.0).epsilon(1e-15));
  CHECK(std::abs(fpr_per_hour({0, 3899, 1, 0}) - 0.2308) < 1e-4);
  CHECK_THROWS_AS(fpr_per_hour({4, 0, 0, 1}), UndefinedMetricError);
}

TEST_CASE("algebraic identities on random matrices") {
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    auto cm = random_cm(rng);
    if (cm.positives() == 0) cm.fn = 1;
    const double se = sensitivity(cm), sp = specificity(cm), ac = accuracy(cm);
    CHECK(fpr_per_hour(cm) == doctest::Approx((1.0 - sp) * 900.0).epsilon(1e-12));
    const double P = static_cast<double>(cm.positives()), N = static_cast<double>(cm.negatives());
    CHECK(ac == doctest::Approx((se * P + sp * N) / (P + N)).epsilon(1e-12));
    for (double v : {se, sp, ac}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    CHECK(ac >= std::min(se, sp) - 1e-12);
    CHECK(ac <= std::max(se, sp) + 1e-12);
  }
}

TEST_CASE("AUC examples") {
  CHECK(auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<std::uint8_t>{0, 0, 1, 1}) == 1.0);
  CHECK(auc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, std::vector<std::uint8_t>{0, 0, 1, 1}) == 0.0);
  CHECK(auc(std::vector<double>(8, 0.3), std::vector<std::uint8_t>{0, 1, 0, 1, 0, 1, 0, 1}) == 0.5);
  CHECK_THROWS_AS(auc(std::vector<double>{0.1, 0.2}, std::vector<std::uint8_t>{1, 1}), UndefinedMetricError);
  CHECK_THROWS_AS(auc(std::vector<double>{0.1}, std::vector<std::uint8_t>{1, 0}), AlignmentError);
}

TEST_CASE("AUC equals pair counting, ties included") {
  Rng rng(3);
  for (int set = 0; set < 200; ++set) {
    const std::size_t n = 20 + uniform_index(rng, 80);
    std::vector<double> s(n);
    std::vector<std::uint8_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse grid forces many ties.
      s[i] = static_cast<double>(uniform_index(rng, 10)) / 10.0;
      y[i] = bernoulli(rng, 0.4);
    }
    y[0] = 1;
    y[1] = 0;
    CHECK(auc(s, y) == pair_auc(s, y));
  }
}

TEST_CASE("AUC is invariant under strictly monotone transforms") {
  Rng rng(4);
  std::vector<double> s(300);
  std::vector<std::uint8_t> y(300);
  for (std::size_t i = 0; i < s.size(); ++i) {
    y[i] = bernoulli(rng, 0.3);
    s[i] = standard_normal(rng) + (y[i] ? 0.8 : 0.0);
  }
  std::vector<double> t(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) t[i] = std::exp(3.0 * s[i]) + 7.0;
  CHECK(auc(t, y) == auc(s, y));
}

TEST_CASE("summary marks undefined entries as NaN") {
  const auto s = summarize({0, 10, 2, 0}, std::nan(""));
  CHECK(std::isnan(s.sensitivity));
  CHECK(s.specificity == doctest::Approx(10.0 / 12.0));
  CHECK(std::isnan(s.auc));
  CHECK(s.fph == doctest::Approx(150.0));
}
