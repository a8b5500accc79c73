#include "cxr/evaluate.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cxr/error.hpp"
#include "support.hpp"

using namespace cxr;
using cxr::testing::brute_force_roc;
using cxr::testing::pairwise_auc;
using cxr::testing::random_scores;

namespace {

ScoreEntry entry(double s, Label l) {
  return {s, l, l == Label::Covid ? Subgroup::Covid : Subgroup::Normal, ""};
}

// COVID: 0.9, 0.8; NON_COVID: 0.1, 0.2
ScoreSet four_entry_fixture() {
  return {{entry(0.9, Label::Covid), entry(0.8, Label::Covid), entry(0.1, Label::NonCovid),
           entry(0.2, Label::NonCovid)}};
}

}  // namespace

TEST(OperatingPoint, SeparatedFixtureAtHalf) {
  const auto op = operating_point(four_entry_fixture(), 0.5);
  EXPECT_EQ(op.sensitivity, 1.0);
  EXPECT_EQ(op.specificity, 1.0);
  EXPECT_EQ(op.tp, 2u);
  EXPECT_EQ(op.tn, 2u);
}

TEST(OperatingPoint, ThresholdAtMaxScore) {
  const auto op = operating_point(four_entry_fixture(), 0.9);
  EXPECT_EQ(op.sensitivity, 0.0);
  EXPECT_EQ(op.specificity, 1.0);
}

TEST(OperatingPoint, TieAtThresholdPredictsNegative) {
  ScoreSet s{{entry(0.5, Label::Covid), entry(0.4, Label::NonCovid)}};
  EXPECT_EQ(operating_point(s, 0.5).tp, 0u);
  EXPECT_EQ(operating_point(s, 0.4).fp, 0u);
}

TEST(OperatingPoint, RequiresBothLabels) {
  ScoreSet s{{entry(0.5, Label::Covid), entry(0.7, Label::Covid)}};
  EXPECT_THROW(operating_point(s, 0.5), ValidationError);
  ScoreSet nan_score{{entry(std::nan(""), Label::Covid), entry(0.1, Label::NonCovid)}};
  EXPECT_THROW(operating_point(nan_score, 0.5), ValidationError);
}

TEST(ThresholdSweep, HandEnumeratedFixture) {
  const auto sweep = threshold_sweep(four_entry_fixture(), {0.15, 0.5, 0.85});
  ASSERT_EQ(sweep.size(), 3u);
  EXPECT_EQ(sweep[0].sensitivity, 1.0);
  EXPECT_EQ(sweep[0].specificity, 0.5);
  EXPECT_EQ(sweep[1].sensitivity, 1.0);
  EXPECT_EQ(sweep[1].specificity, 1.0);
  EXPECT_EQ(sweep[2].sensitivity, 0.5);
  EXPECT_EQ(sweep[2].specificity, 1.0);
}

TEST(ThresholdSweep, ZeroAndOneBoundaries) {
  cxr::Rng rng(5);
  const auto s = random_scores(rng, 50, false);
  const auto sweep = threshold_sweep(s, {0.0, 1.0});
  EXPECT_EQ(sweep.front().sensitivity, 1.0);
  EXPECT_EQ(sweep.front().specificity, 0.0);
  EXPECT_EQ(sweep.back().sensitivity, 0.0);
  EXPECT_EQ(sweep.back().specificity, 1.0);
}

TEST(ThresholdSweep, RejectsUnsortedThresholds) {
  EXPECT_THROW(threshold_sweep(four_entry_fixture(), {0.5, 0.2}), ValidationError);
}

TEST(ThresholdSweep, MonotoneOnRandomScoreSets) {
  cxr::Rng rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto s = random_scores(rng, 2 + rng.below(100), trial % 2 == 0);
    const auto sweep = threshold_sweep(s, default_thresholds(s, 50));
    for (std::size_t i = 1; i < sweep.size(); ++i) {
      ASSERT_LE(sweep[i].sensitivity, sweep[i - 1].sensitivity);
      ASSERT_GE(sweep[i].specificity, sweep[i - 1].specificity);
    }
  }
}

TEST(DefaultThresholds, IncludesScoresAndGrid) {
  const auto t = default_thresholds(four_entry_fixture());
  EXPECT_TRUE(std::is_sorted(t.begin(), t.end()));
  EXPECT_EQ(t.front(), 0.0);
  EXPECT_EQ(t.back(), 1.0);
  EXPECT_NE(std::find(t.begin(), t.end(), 0.8), t.end());
  // 1000 grid points; 0.1, 0.2, 0.8 and 0.9 lie off the i/999 grid.
  EXPECT_EQ(t.size(), 1004u);
}

TEST(ThresholdForSensitivity, FortyPositivesAtNinetySevenPointFive) {
  ScoreSet s;
  for (int i = 0; i < 40; ++i) s.entries.push_back(entry(0.3 + 0.01 * i, Label::Covid));
  for (int i = 0; i < 30; ++i) s.entries.push_back(entry(0.005 * i, Label::NonCovid));
  const double t = threshold_for_sensitivity(s, 0.975);
  EXPECT_EQ(t, std::nextafter(0.3 + 0.01, 0.0));
  const auto op = operating_point(s, t);
  EXPECT_EQ(op.tp, 39u);
  EXPECT_EQ(op.sensitivity, 0.975);
}

TEST(ThresholdForSensitivity, TargetOneIsBelowMinimum) {
  const auto s = four_entry_fixture();
  const double t = threshold_for_sensitivity(s, 1.0);
  EXPECT_EQ(t, std::nextafter(0.8, -1.0));
  EXPECT_EQ(operating_point(s, t).sensitivity, 1.0);
}

TEST(ThresholdForSensitivity, RejectsOutOfRangeTarget) {
  EXPECT_THROW(threshold_for_sensitivity(four_entry_fixture(), 0.0), ValidationError);
  EXPECT_THROW(threshold_for_sensitivity(four_entry_fixture(), 1.5), ValidationError);
}

TEST(ThresholdForSensitivity, LargestThresholdProperty) {
  cxr::Rng rng(17);
  const double inf = std::numeric_limits<double>::infinity();
  for (int trial = 0; trial < 500; ++trial) {
    const auto s = random_scores(rng, 2 + rng.below(150), trial % 3 == 0);
    const double target = 0.05 + 0.95 * rng.uniform01();
    const double t = threshold_for_sensitivity(s, target);
    ASSERT_GE(operating_point(s, t).sensitivity, target - 1e-12);
    ASSERT_LT(operating_point(s, std::nextafter(t, inf)).sensitivity, target - 1e-12);
  }
}

TEST(ConfidenceInterval, WaldHalfWidth) {
  // High-precision reference values of 1.96 * sqrt(a (1 - a) / n).
  EXPECT_NEAR(confidence_interval(0.975, 40).r, 0.04838362326242219, 1e-15);
  EXPECT_NEAR(confidence_interval(0.888, 3000).r, 0.011285243603928095, 1e-15);
  EXPECT_EQ(confidence_interval(1.0, 40).r, 0.0);
  EXPECT_EQ(confidence_interval(0.0, 40).r, 0.0);
}

TEST(ConfidenceInterval, SymmetricInAccuracy) {
  cxr::Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const double a = rng.uniform01();
    const std::size_t n = 1 + rng.below(5000);
    EXPECT_NEAR(confidence_interval(a, n).r, confidence_interval(1.0 - a, n).r, 1e-15);
  }
}

TEST(ConfidenceInterval, RejectsInvalidInput) {
  EXPECT_THROW(confidence_interval(1.2, 10), ValidationError);
  EXPECT_THROW(confidence_interval(0.5, 0), ValidationError);
  EXPECT_THROW(confidence_interval(0.5, 10, 0.0), ValidationError);
}

TEST(RocCurve, PerfectSeparationPassesThroughTopLeft) {
  const auto roc = roc_curve(four_entry_fixture());
  EXPECT_NE(std::find(roc.begin(), roc.end(), RocPoint{0.0, 1.0}), roc.end());
  EXPECT_EQ(roc.front(), (RocPoint{0.0, 0.0}));
  EXPECT_EQ(roc.back(), (RocPoint{1.0, 1.0}));
  EXPECT_EQ(auc(roc), 1.0);
}

TEST(RocCurve, AllTiedIsSingleDiagonal) {
  ScoreSet s{{entry(0.4, Label::Covid), entry(0.4, Label::NonCovid), entry(0.4, Label::NonCovid)}};
  const auto roc = roc_curve(s);
  ASSERT_EQ(roc.size(), 2u);
  EXPECT_EQ(roc[1], (RocPoint{1.0, 1.0}));
  EXPECT_EQ(auc(roc), 0.5);
}

TEST(RocCurve, MatchesBruteForceEnumeration) {
  cxr::Rng rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = random_scores(rng, 20, trial % 2 == 1);
    EXPECT_EQ(roc_curve(s), brute_force_roc(s));
  }
}

TEST(RocCurve, SingleLabelRejected) {
  ScoreSet s{{entry(0.4, Label::NonCovid), entry(0.2, Label::NonCovid)}};
  EXPECT_THROW(roc_curve(s), ValidationError);
}

TEST(RocCurve, InvariantUnderIncreasingTransform) {
  cxr::Rng rng(29);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = random_scores(rng, 2 + rng.below(60), trial % 2 == 0);
    ScoreSet t = s;
    for (auto& e : t.entries) e.score = std::log(e.score / (1.0 - e.score)) * 3.0 + 7.0;
    EXPECT_EQ(roc_curve(s), roc_curve(t));
    EXPECT_EQ(auc(roc_curve(s)), auc(roc_curve(t)));
  }
}

TEST(Auc, MatchesPairwiseOracle) {
  cxr::Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = random_scores(rng, 50, trial % 2 == 0);
    EXPECT_NEAR(auc(roc_curve(s)), pairwise_auc(s), 1e-12);
  }
}

TEST(ConfusionMatrix, FixtureAndBoundaries) {
  const auto s = four_entry_fixture();
  const ConfusionMatrix expected{{{2, 0}, {0, 2}}};
  EXPECT_EQ(confusion_matrix(s, 0.5), expected);
  const ConfusionMatrix above_max{{{2, 0}, {2, 0}}};
  EXPECT_EQ(confusion_matrix(s, 0.95), above_max);
}

TEST(ConfusionMatrix, ConsistentWithOperatingPoint) {
  cxr::Rng rng(37);
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = random_scores(rng, 2 + rng.below(80), true);
    for (double t : default_thresholds(s, 11)) {
      const auto cm = confusion_matrix(s, t);
      const auto op = operating_point(s, t);
      ASSERT_EQ(cm[0][0], op.tn);
      ASSERT_EQ(cm[0][1], op.fp);
      ASSERT_EQ(cm[1][0], op.fn);
      ASSERT_EQ(cm[1][1], op.tp);
      ASSERT_EQ(cm[0][0] + cm[0][1] + cm[1][0] + cm[1][1], s.entries.size());
    }
  }
}

TEST(ScoreHistogram, UpperBinIsClosedAtHalf) {
  ScoreSet s{{entry(0.5, Label::Covid), entry(0.5, Label::NonCovid)}};
  const auto h = score_histogram(s, 2);
  EXPECT_EQ(h[static_cast<int>(Subgroup::Covid)], (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(h[static_cast<int>(Subgroup::Normal)], (std::vector<std::size_t>{0, 1}));
}

TEST(ScoreHistogram, EndpointsLandInEdgeBins) {
  ScoreSet s{{entry(1.0, Label::Covid), entry(0.0, Label::NonCovid)}};
  const auto h = score_histogram(s, 4);
  EXPECT_EQ(h[0].back(), 1u);
  EXPECT_EQ(h[1].front(), 1u);
}

TEST(ScoreHistogram, MatchesNaiveBinning) {
  cxr::Rng rng(41);
  for (int trial = 0; trial < 100; ++trial) {
    auto s = random_scores(rng, 300, false);
    // Include exact bin edges.
    for (int k = 0; k <= 10; ++k) s.entries.push_back(entry(k / 10.0, Label::NonCovid));
    const int bins = 10;
    const auto h = score_histogram(s, bins);
    SubgroupHistograms naive;
    for (auto& v : naive) v.assign(bins, 0);
    for (const auto& e : s.entries) {
      for (int k = 0; k < bins; ++k) {
        const double lo = static_cast<double>(k) / bins;
        const double hi = static_cast<double>(k + 1) / bins;
        const bool last = k == bins - 1;
        if (e.score >= lo && (e.score < hi || (last && e.score <= hi))) {
          ++naive[static_cast<int>(e.subgroup)][k];
          break;
        }
      }
    }
    ASSERT_EQ(h, naive);
  }
}

TEST(ScoreHistogram, SubgroupTotalsOfFullTestSet) {
  cxr::Rng rng(43);
  ScoreSet s;
  auto add = [&](Subgroup g, int n) {
    for (int i = 0; i < n; ++i) s.entries.push_back({rng.uniform01(), label_of(g), g, ""});
  };
  add(Subgroup::Covid, 40);
  add(Subgroup::Normal, 1700);
  add(Subgroup::OtherDisease, 1300);
  const auto h = score_histogram(s, 20);
  auto total = [](const std::vector<std::size_t>& v) { return std::accumulate(v.begin(), v.end(), std::size_t{0}); };
  EXPECT_EQ(total(h[0]), 40u);
  EXPECT_EQ(total(h[1]), 1700u);
  EXPECT_EQ(total(h[2]), 1300u);
  EXPECT_THROW(score_histogram(s, 0), ValidationError);
}

TEST(EvalReport, JsonHasFixedFieldsAndRoundTrips) {
  cxr::Rng rng(47);
  const auto s = random_scores(rng, 120, false);
  const auto report = evaluate(s);
  const auto j = to_json(report);
  for (const char* key : {"sweep", "roc", "auc", "confusion", "histograms", "sensitivity_ci", "specificity_ci"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  const auto back = report_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(back.auc, report.auc);
  EXPECT_EQ(back.roc, report.roc);
  EXPECT_EQ(back.confusion, report.confusion);
  EXPECT_EQ(back.histograms, report.histograms);
  EXPECT_EQ(back.sweep.size(), report.sweep.size());
  EXPECT_EQ(back.specificity_ci.r, report.specificity_ci.r);
}

TEST(EvalReport, SelectedPointAndConfusionAgree) {
  cxr::Rng rng(53);
  const auto s = random_scores(rng, 300, false);
  const auto r = evaluate(s);
  EXPECT_GE(r.selected.sensitivity, 0.975);
  EXPECT_EQ(r.confusion[1][1], r.selected.tp);
  EXPECT_EQ(r.confusion[0][0] + r.confusion[0][1] + r.confusion[1][0] + r.confusion[1][1], s.entries.size());
  EXPECT_EQ(r.sensitivity_ci.n, s.positives());
  EXPECT_EQ(r.specificity_ci.n, s.negatives());
  EXPECT_GE(r.auc, 0.0);
  EXPECT_LE(r.auc, 1.0);
}

TEST(EvalReport, SweepCsvHeader) {
  const auto csv = sweep_csv(threshold_sweep(four_entry_fixture(), {0.5}));
  EXPECT_EQ(csv, "threshold,sensitivity,specificity,tp,fn,tn,fp\n0.5,1,1,2,0,2,0\n");
}
