#include "cxr/evaluate.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include "cxr/error.hpp"

namespace cxr {

std::size_t ScoreSet::positives() const {
  return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(),
                                                [](const ScoreEntry& e) { return e.label == Label::Covid; }));
}

std::size_t ScoreSet::negatives() const { return entries.size() - positives(); }

void ScoreSet::require_both_labels() const {
  for (const auto& e : entries) {
    if (!std::isfinite(e.score)) throw ValidationError("scores: non-finite score for " + e.image_path);
  }
  if (positives() == 0 || negatives() == 0) {
    throw ValidationError("scores: both COVID and NON_COVID entries are required");
  }
}

namespace {

// Scores of each class in ascending order.
struct SortedScores {
  std::vector<double> pos;
  std::vector<double> neg;

  explicit SortedScores(const ScoreSet& s) {
    for (const auto& e : s.entries) (e.label == Label::Covid ? pos : neg).push_back(e.score);
    std::sort(pos.begin(), pos.end());
    std::sort(neg.begin(), neg.end());
  }

  static std::size_t above(const std::vector<double>& v, double t) {
    return static_cast<std::size_t>(v.end() - std::upper_bound(v.begin(), v.end(), t));
  }

  OperatingPoint at(double threshold) const {
    OperatingPoint op;
    op.threshold = threshold;
    op.tp = above(pos, threshold);
    op.fn = pos.size() - op.tp;
    op.fp = above(neg, threshold);
    op.tn = neg.size() - op.fp;
    op.sensitivity = static_cast<double>(op.tp) / static_cast<double>(pos.size());
    op.specificity = static_cast<double>(op.tn) / static_cast<double>(neg.size());
    return op;
  }
};

}  // namespace

OperatingPoint operating_point(const ScoreSet& scores, double threshold) {
  scores.require_both_labels();
  return SortedScores(scores).at(threshold);
}

std::vector<OperatingPoint> threshold_sweep(const ScoreSet& scores, const std::vector<double>& thresholds) {
  scores.require_both_labels();
  if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
    throw ValidationError("threshold_sweep: thresholds must be ascending");
  }
  const SortedScores sorted(scores);
  std::vector<OperatingPoint> out;
  out.reserve(thresholds.size());
  for (double t : thresholds) out.push_back(sorted.at(t));
  return out;
}

std::vector<double> default_thresholds(const ScoreSet& scores, std::size_t grid_points) {
  std::vector<double> t;
  t.reserve(scores.entries.size() + grid_points);
  for (const auto& e : scores.entries) t.push_back(e.score);
  if (grid_points == 1) {
    t.push_back(0.0);
  } else {
    for (std::size_t i = 0; i < grid_points; ++i) {
      t.push_back(static_cast<double>(i) / static_cast<double>(grid_points - 1));
    }
  }
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  return t;
}

double threshold_for_sensitivity(const ScoreSet& scores, double target) {
  if (!(target > 0.0 && target <= 1.0)) {
    throw ValidationError("threshold_for_sensitivity: target must lie in (0, 1]");
  }
  const SortedScores sorted(scores);
  const std::size_t p = sorted.pos.size();
  if (p == 0) throw ValidationError("threshold_for_sensitivity: no COVID entries");
  // Number of COVID scores that must lie strictly above the threshold. The
  // small slack keeps products such as 0.975 * 40 from rounding up to 40.
  auto need = static_cast<std::size_t>(std::ceil(target * static_cast<double>(p) - 1e-9));
  need = std::clamp<std::size_t>(need, 1, p);
  const double pivot = sorted.pos[p - need];
  return std::nextafter(pivot, -std::numeric_limits<double>::infinity());
}

ConfidenceInterval confidence_interval(double accuracy, std::size_t n, double z) {
  if (!(accuracy >= 0.0 && accuracy <= 1.0)) throw ValidationError("confidence_interval: accuracy outside [0, 1]");
  if (n < 1) throw ValidationError("confidence_interval: n must be >= 1");
  if (!(z > 0.0)) throw ValidationError("confidence_interval: z must be > 0");
  return {accuracy, n, z, z * std::sqrt(accuracy * (1.0 - accuracy) / static_cast<double>(n))};
}

std::vector<RocPoint> roc_curve(const ScoreSet& scores) {
  scores.require_both_labels();
  std::vector<std::pair<double, bool>> items;
  items.reserve(scores.entries.size());
  for (const auto& e : scores.entries) items.emplace_back(e.score, e.label == Label::Covid);
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

  const double p = static_cast<double>(scores.positives());
  const double n = static_cast<double>(scores.negatives());
  std::vector<RocPoint> roc{{0.0, 0.0}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < items.size();) {
    const double s = items[i].first;
    for (; i < items.size() && items[i].first == s; ++i) (items[i].second ? tp : fp) += 1;
    roc.push_back({static_cast<double>(fp) / n, static_cast<double>(tp) / p});
  }
  return roc;
}

double auc(const std::vector<RocPoint>& roc) {
  double area = 0.0;
  for (std::size_t i = 1; i < roc.size(); ++i) {
    area += (roc[i].fpr - roc[i - 1].fpr) * (roc[i].tpr + roc[i - 1].tpr) / 2.0;
  }
  return area;
}

ConfusionMatrix confusion_matrix(const ScoreSet& scores, double threshold) {
  const auto op = operating_point(scores, threshold);
  return {{{op.tn, op.fp}, {op.fn, op.tp}}};
}

SubgroupHistograms score_histogram(const ScoreSet& scores, int bins) {
  if (bins < 1) throw ValidationError("score_histogram: bins must be >= 1");
  SubgroupHistograms h;
  for (auto& v : h) v.assign(static_cast<std::size_t>(bins), 0);
  const double b = static_cast<double>(bins);
  for (const auto& e : scores.entries) {
    if (!std::isfinite(e.score)) throw ValidationError("score_histogram: non-finite score");
    const double s = std::clamp(e.score, 0.0, 1.0);
    int k = std::clamp(static_cast<int>(std::floor(s * b)), 0, bins - 1);
    // Settle rounding in s * bins against the exact edges k / bins.
    if (k > 0 && s < k / b) --k;
    if (k < bins - 1 && s >= (k + 1) / b) ++k;
    ++h[static_cast<int>(e.subgroup)][static_cast<std::size_t>(k)];
  }
  return h;
}

EvalReport evaluate(const ScoreSet& scores, const EvalOptions& opts) {
  scores.require_both_labels();
  EvalReport r;
  r.n_entries = scores.entries.size();
  r.sweep = threshold_sweep(scores, opts.thresholds ? *opts.thresholds : default_thresholds(scores));
  r.roc = roc_curve(scores);
  r.auc = auc(r.roc);
  r.target_sensitivity = opts.target_sensitivity;
  r.selected = operating_point(scores, threshold_for_sensitivity(scores, opts.target_sensitivity));
  r.confusion = {{{r.selected.tn, r.selected.fp}, {r.selected.fn, r.selected.tp}}};
  r.bins = opts.bins;
  r.histograms = score_histogram(scores, opts.bins);
  r.sensitivity_ci = confidence_interval(r.selected.sensitivity, scores.positives(), opts.z);
  r.specificity_ci = confidence_interval(r.selected.specificity, scores.negatives(), opts.z);
  return r;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

nlohmann::json op_json(const OperatingPoint& op) {
  return {{"threshold", op.threshold}, {"sensitivity", op.sensitivity}, {"specificity", op.specificity},
          {"tp", op.tp}, {"fn", op.fn}, {"tn", op.tn}, {"fp", op.fp}};
}

OperatingPoint op_from(const nlohmann::json& j) {
  OperatingPoint op;
  op.threshold = j.at("threshold").get<double>();
  op.sensitivity = j.at("sensitivity").get<double>();
  op.specificity = j.at("specificity").get<double>();
  op.tp = j.at("tp").get<std::size_t>();
  op.fn = j.at("fn").get<std::size_t>();
  op.tn = j.at("tn").get<std::size_t>();
  op.fp = j.at("fp").get<std::size_t>();
  return op;
}

nlohmann::json ci_json(const ConfidenceInterval& ci) {
  return {{"accuracy", ci.accuracy}, {"n", ci.n}, {"z", ci.z}, {"r", ci.r}};
}

ConfidenceInterval ci_from(const nlohmann::json& j) {
  return {j.at("accuracy").get<double>(), j.at("n").get<std::size_t>(), j.at("z").get<double>(),
          j.at("r").get<double>()};
}

std::string shortest(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json sweep = nlohmann::json::array();
  for (const auto& op : report.sweep) sweep.push_back(op_json(op));
  nlohmann::json roc = nlohmann::json::array();
  for (const auto& p : report.roc) roc.push_back({p.fpr, p.tpr});
  nlohmann::json edges = nlohmann::json::array();
  for (int k = 0; k <= report.bins; ++k) edges.push_back(static_cast<double>(k) / report.bins);
  nlohmann::json hist = {{"bins", report.bins}, {"edges", edges}};
  for (int g = 0; g < kNumSubgroups; ++g) {
    hist[std::string(to_string(static_cast<Subgroup>(g)))] = report.histograms[g];
  }
  return {
      {"n_entries", report.n_entries},
      {"auc", report.auc},
      {"target_sensitivity", report.target_sensitivity},
      {"selected", op_json(report.selected)},
      {"confusion", {{report.confusion[0][0], report.confusion[0][1]}, {report.confusion[1][0], report.confusion[1][1]}}},
      {"sensitivity_ci", ci_json(report.sensitivity_ci)},
      {"specificity_ci", ci_json(report.specificity_ci)},
      {"histograms", hist},
      {"roc", roc},
      {"sweep", sweep},
  };
}

EvalReport report_from_json(const nlohmann::json& j) {
  try {
    EvalReport r;
    r.n_entries = j.at("n_entries").get<std::size_t>();
    r.auc = j.at("auc").get<double>();
    r.target_sensitivity = j.at("target_sensitivity").get<double>();
    r.selected = op_from(j.at("selected"));
    const auto& c = j.at("confusion");
    r.confusion = {{{c.at(0).at(0).get<std::size_t>(), c.at(0).at(1).get<std::size_t>()},
                    {c.at(1).at(0).get<std::size_t>(), c.at(1).at(1).get<std::size_t>()}}};
    r.sensitivity_ci = ci_from(j.at("sensitivity_ci"));
    r.specificity_ci = ci_from(j.at("specificity_ci"));
    const auto& h = j.at("histograms");
    r.bins = h.at("bins").get<int>();
    for (int g = 0; g < kNumSubgroups; ++g) {
      r.histograms[g] = h.at(std::string(to_string(static_cast<Subgroup>(g)))).get<std::vector<std::size_t>>();
    }
    for (const auto& p : j.at("roc")) r.roc.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    for (const auto& op : j.at("sweep")) r.sweep.push_back(op_from(op));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("eval report: ") + e.what());
  }
}

std::string sweep_csv(const std::vector<OperatingPoint>& sweep) {
  std::ostringstream os;
  os << "threshold,sensitivity,specificity,tp,fn,tn,fp\n";
  for (const auto& op : sweep) {
    os << shortest(op.threshold) << ',' << shortest(op.sensitivity) << ',' << shortest(op.specificity) << ','
       << op.tp << ',' << op.fn << ',' << op.tn << ',' << op.fp << '\n';
  }
  return os.str();
}

}  // namespace cxr
