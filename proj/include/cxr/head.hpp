#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cxr/backbone.hpp"
#include "cxr/manifest.hpp"
#include "cxr/types.hpp"

namespace cxr {

struct ScoreSet;

// Class index order of logits, probabilities and one-hot targets.
inline constexpr std::size_t kNonCovidIndex = 0;
inline constexpr std::size_t kCovidIndex = 1;

using Vec2 = std::array<double, 2>;

Vec2 one_hot(Label label);

// Max-subtracted softmax. Throws NumericError on non-finite logits.
Vec2 softmax(const Vec2& logits);

// -sum p_i log q_i for one-hot p. Throws NumericError when q is zero at the
// true class.
double cross_entropy(const Vec2& target, const Vec2& probs);

// Affine map from D features to two class logits. Parameters are stored
// flat as [W row 0 (D), W row 1 (D), b0, b1] so the optimizer can treat
// them as one vector.
struct LinearHead {
  std::size_t dim = 0;
  std::vector<double> params;
  Backbone backbone = Backbone::Synthetic;

  static LinearHead zeros(std::size_t dim, Backbone backbone = Backbone::Synthetic);

  double& weight(std::size_t cls, std::size_t j) { return params[cls * dim + j]; }
  double weight(std::size_t cls, std::size_t j) const { return params[cls * dim + j]; }
  double& bias(std::size_t cls) { return params[2 * dim + cls]; }
  double bias(std::size_t cls) const { return params[2 * dim + cls]; }

  Vec2 logits(std::span<const double> x) const;
  Vec2 probabilities(std::span<const double> x) const { return softmax(logits(x)); }

  friend bool operator==(const LinearHead&, const LinearHead&) = default;
};

// Gradient of cross_entropy(p, softmax(W x + b)) laid out like
// LinearHead::params: (q - p) outer x for W, then (q - p) for b.
std::vector<double> grad_head(const LinearHead& head, std::span<const double> x, const Vec2& target);

struct TrainConfig {
  int epochs = 100;
  int batch_size = 20;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t shuffle_seed = 0;

  void validate() const;  // throws ValidationError

  // `key=value` lines in a fixed key order, doubles in shortest round-trip form.
  std::string to_key_values() const;
  static TrainConfig from_key_values(const std::map<std::string, std::string>& kv);
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;

  static AdamState zeros(std::size_t n) { return {std::vector<double>(n), std::vector<double>(n), 0}; }
};

// One bias-corrected ADAM update in place. Throws NumericError on a
// non-finite gradient, ValidationError on shape mismatch.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const TrainConfig& cfg);

struct TrainHistory {
  std::vector<double> epoch_mean_loss;
  std::vector<double> epoch_accuracy;  // on the training rows, measured during the pass
};

struct TrainResult {
  LinearHead head;
  TrainHistory history;
};

// The training order of epoch `epoch` (0-based) over n canonical rows.
std::vector<std::size_t> epoch_permutation(std::uint64_t shuffle_seed, int epoch, std::size_t n);

// Mini-batch ADAM on mean batch cross-entropy from a zero head. Rows are
// first put in canonical order (row id, then feature values, then label) and
// each epoch visits them in epoch_permutation order; the last partial batch
// is kept.
TrainResult train_head(const FeatureMatrix& features, std::span<const Label> labels, const TrainConfig& cfg);

// Labels of the feature rows, looked up in the manifest by image path.
std::vector<Label> labels_for(const FeatureMatrix& features, std::span<const ImageRecord> records);

// COVID probability of each feature row, tagged with the manifest record's
// label and subgroup.
ScoreSet predict_scores(const LinearHead& head, const FeatureMatrix& features,
                        std::span<const ImageRecord> records);

// Binary layout: "HEAD1", u32 D, u8 backbone, (2D + 2) float64 parameters,
// then the training configuration as `key=value` text lines up to EOF.
void write_head(const LinearHead& head, const TrainConfig& cfg, std::ostream& out,
                const std::string& extra_audit = {});
void save_head(const LinearHead& head, const TrainConfig& cfg, const std::filesystem::path& path,
               const std::string& extra_audit = {});

struct HeadFile {
  LinearHead head;
  std::map<std::string, std::string> audit;
};

HeadFile read_head(std::istream& in);
HeadFile load_head(const std::filesystem::path& path);

}  // namespace cxr
