#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cxr/types.hpp"
#include "json.hpp"

namespace cxr {

struct ScoreEntry {
  double score = 0.0;  // predicted COVID probability
  Label label = Label::NonCovid;
  Subgroup subgroup = Subgroup::Normal;
  std::string image_path;
};

struct ScoreSet {
  std::vector<ScoreEntry> entries;

  std::size_t positives() const;
  std::size_t negatives() const;

  // Throws ValidationError on non-finite scores or when a label is missing.
  void require_both_labels() const;
};

// Prediction rule: COVID iff score > threshold.
struct OperatingPoint {
  double threshold = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  std::size_t tp = 0, fn = 0, tn = 0, fp = 0;
};

OperatingPoint operating_point(const ScoreSet& scores, double threshold);

// Thresholds must be ascending.
std::vector<OperatingPoint> threshold_sweep(const ScoreSet& scores, const std::vector<double>& thresholds);

// Every distinct score plus `grid_points` evenly spaced values covering
// [0, 1], sorted and deduplicated.
std::vector<double> default_thresholds(const ScoreSet& scores, std::size_t grid_points = 1000);

// Largest double threshold whose sensitivity is at least `target`: one ulp
// below the k-th lowest COVID score, where k leaves ceil(target * P) scores
// above it.
double threshold_for_sensitivity(const ScoreSet& scores, double target);

// Wald interval half-width r = z sqrt(a (1 - a) / n).
struct ConfidenceInterval {
  double accuracy = 0.0;
  std::size_t n = 0;
  double z = 1.96;
  double r = 0.0;
};

ConfidenceInterval confidence_interval(double accuracy, std::size_t n, double z = 1.96);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  friend bool operator==(const RocPoint&, const RocPoint&) = default;
};

// Starts at (0,0), one vertex per distinct score (descending), ends at (1,1).
// Tied scores move along a single diagonal segment.
std::vector<RocPoint> roc_curve(const ScoreSet& scores);

// Trapezoidal area under a ROC polyline.
double auc(const std::vector<RocPoint>& roc);

// [[tn, fp], [fn, tp]]
using ConfusionMatrix = std::array<std::array<std::size_t, 2>, 2>;
ConfusionMatrix confusion_matrix(const ScoreSet& scores, double threshold);

// Equal-width bins over [0, 1]; bin k is [k/B, (k+1)/B) except the last,
// which is closed. Indexed by subgroup.
using SubgroupHistograms = std::array<std::vector<std::size_t>, kNumSubgroups>;
SubgroupHistograms score_histogram(const ScoreSet& scores, int bins);

struct EvalOptions {
  int bins = 20;
  double target_sensitivity = 0.975;
  double z = 1.96;
  std::optional<std::vector<double>> thresholds;  // default_thresholds when unset
};

struct EvalReport {
  std::vector<OperatingPoint> sweep;
  std::vector<RocPoint> roc;
  double auc = 0.0;
  double target_sensitivity = 0.0;
  OperatingPoint selected;  // the operating point at threshold_for_sensitivity
  ConfusionMatrix confusion{};
  int bins = 0;
  SubgroupHistograms histograms;
  ConfidenceInterval sensitivity_ci;
  ConfidenceInterval specificity_ci;
  std::size_t n_entries = 0;
};

EvalReport evaluate(const ScoreSet& scores, const EvalOptions& opts = {});

nlohmann::json to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);
std::string sweep_csv(const std::vector<OperatingPoint>& sweep);

}  // namespace cxr
