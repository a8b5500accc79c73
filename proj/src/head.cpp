#include "cxr/head.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "binary_io.hpp"
#include "cxr/digest.hpp"
#include "cxr/error.hpp"
#include "cxr/evaluate.hpp"
#include "cxr/random.hpp"

namespace fs = std::filesystem;

namespace cxr {

Vec2 one_hot(Label label) {
  return label == Label::Covid ? Vec2{0.0, 1.0} : Vec2{1.0, 0.0};
}

Vec2 softmax(const Vec2& logits) {
  if (!std::isfinite(logits[0]) || !std::isfinite(logits[1])) {
    throw NumericError("softmax: non-finite logits");
  }
  const double hi = std::max(logits[0], logits[1]);
  const double e0 = std::exp(logits[0] - hi);
  const double e1 = std::exp(logits[1] - hi);
  const double sum = e0 + e1;
  return {e0 / sum, e1 / sum};
}

double cross_entropy(const Vec2& target, const Vec2& probs) {
  double loss = 0.0;
  for (std::size_t i = 0; i < 2; ++i) {
    if (target[i] == 0.0) continue;
    if (!(probs[i] > 0.0)) throw NumericError("cross_entropy: zero probability at the true class");
    loss -= target[i] * std::log(probs[i]);
  }
  return loss;
}

LinearHead LinearHead::zeros(std::size_t dim, Backbone backbone) {
  LinearHead h;
  h.dim = dim;
  h.params.assign(2 * dim + 2, 0.0);
  h.backbone = backbone;
  return h;
}

Vec2 LinearHead::logits(std::span<const double> x) const {
  Vec2 z{bias(0), bias(1)};
  for (std::size_t c = 0; c < 2; ++c) {
    const double* w = params.data() + c * dim;
    double acc = 0.0;
    for (std::size_t j = 0; j < dim; ++j) acc += w[j] * x[j];
    z[c] += acc;
  }
  return z;
}

namespace {

// Adds (q - p) outer x and (q - p) into grad; returns q.
Vec2 accumulate_gradient(const LinearHead& head, std::span<const double> x, const Vec2& target,
                         std::vector<double>& grad) {
  const Vec2 q = head.probabilities(x);
  const std::size_t d = head.dim;
  for (std::size_t c = 0; c < 2; ++c) {
    const double delta = q[c] - target[c];
    double* g = grad.data() + c * d;
    for (std::size_t j = 0; j < d; ++j) g[j] += delta * x[j];
    grad[2 * d + c] += delta;
  }
  return q;
}

}  // namespace

std::vector<double> grad_head(const LinearHead& head, std::span<const double> x, const Vec2& target) {
  if (x.size() != head.dim) throw ValidationError("grad_head: feature dimension mismatch");
  std::vector<double> grad(head.params.size(), 0.0);
  accumulate_gradient(head, x, target, grad);
  return grad;
}

// ---------------------------------------------------------------------------
// TrainConfig

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("train: epochs must be >= 1");
  if (batch_size < 1) throw ValidationError("train: batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ValidationError("train: learning_rate must be > 0");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ValidationError("train: beta1 and beta2 must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw ValidationError("train: epsilon must be > 0");
}

namespace {

std::string shortest(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

template <typename T>
T parse_number(const std::map<std::string, std::string>& kv, const std::string& key, T fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  T v{};
  const auto& s = it->second;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ValidationError("train config: bad value for " + key + ": '" + s + "'");
  }
  return v;
}

}  // namespace

std::string TrainConfig::to_key_values() const {
  std::ostringstream os;
  os << "epochs=" << epochs << '\n'
     << "batch_size=" << batch_size << '\n'
     << "learning_rate=" << shortest(learning_rate) << '\n'
     << "beta1=" << shortest(beta1) << '\n'
     << "beta2=" << shortest(beta2) << '\n'
     << "epsilon=" << shortest(epsilon) << '\n'
     << "shuffle_seed=" << shuffle_seed << '\n';
  return os.str();
}

TrainConfig TrainConfig::from_key_values(const std::map<std::string, std::string>& kv) {
  TrainConfig c;
  c.epochs = parse_number(kv, "epochs", c.epochs);
  c.batch_size = parse_number(kv, "batch_size", c.batch_size);
  c.learning_rate = parse_number(kv, "learning_rate", c.learning_rate);
  c.beta1 = parse_number(kv, "beta1", c.beta1);
  c.beta2 = parse_number(kv, "beta2", c.beta2);
  c.epsilon = parse_number(kv, "epsilon", c.epsilon);
  c.shuffle_seed = parse_number(kv, "shuffle_seed", c.shuffle_seed);
  return c;
}

// ---------------------------------------------------------------------------
// ADAM

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const TrainConfig& cfg) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ValidationError("adam_step: shape mismatch between parameters, gradients and state");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw NumericError("adam_step: non-finite gradient at index " + std::to_string(i));
    }
  }
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = state.m[i] / correction1;
    const double v_hat = state.v[i] / correction2;
    params[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    if (!std::isfinite(params[i])) {
      throw NumericError("adam_step: parameter " + std::to_string(i) + " became non-finite");
    }
  }
}

// ---------------------------------------------------------------------------
// Training

std::vector<std::size_t> epoch_permutation(std::uint64_t shuffle_seed, int epoch, std::size_t n) {
  Sha256 h;
  h.update_u64(shuffle_seed).update("epoch").update_u64(static_cast<std::uint64_t>(epoch));
  Rng rng(leading_u64(h.finish()));
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

TrainResult train_head(const FeatureMatrix& features, std::span<const Label> labels, const TrainConfig& cfg) {
  cfg.validate();
  const std::size_t n = features.rows;
  const std::size_t d = features.cols;
  if (labels.size() != n) {
    throw ValidationError("train: " + std::to_string(labels.size()) + " labels for " +
                          std::to_string(n) + " feature rows");
  }
  const auto positives = std::count(labels.begin(), labels.end(), Label::Covid);
  if (positives == 0 || static_cast<std::size_t>(positives) == n) {
    throw ValidationError("train: both classes must be present in the training rows");
  }

  std::vector<double> x(features.data.begin(), features.data.end());
  std::vector<std::size_t> canonical(n);
  std::iota(canonical.begin(), canonical.end(), std::size_t{0});
  std::sort(canonical.begin(), canonical.end(), [&](std::size_t a, std::size_t b) {
    if (features.row_ids[a] != features.row_ids[b]) return features.row_ids[a] < features.row_ids[b];
    const auto ra = features.row(a);
    const auto rb = features.row(b);
    if (!std::equal(ra.begin(), ra.end(), rb.begin())) {
      return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
    }
    return labels[a] < labels[b];
  });

  TrainResult result{LinearHead::zeros(d, features.backbone), {}};
  LinearHead& head = result.head;
  AdamState state = AdamState::zeros(head.params.size());
  std::vector<double> grad(head.params.size());
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = epoch_permutation(cfg.shuffle_seed, epoch, n);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(start + batch, n);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t k = start; k < stop; ++k) {
        const std::size_t row = canonical[order[k]];
        const std::span<const double> xr(x.data() + row * d, d);
        const Vec2 target = one_hot(labels[row]);
        const Vec2 q = accumulate_gradient(head, xr, target, grad);
        const double loss = cross_entropy(target, q);
        if (!std::isfinite(loss)) {
          throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch + 1) +
                             ", row " + features.row_ids[row]);
        }
        loss_sum += loss;
        const bool predicted_covid = q[kCovidIndex] > 0.5;
        if (predicted_covid == (labels[row] == Label::Covid)) ++correct;
      }
      const double scale = 1.0 / static_cast<double>(stop - start);
      for (auto& g : grad) g *= scale;
      adam_step(head.params, grad, state, cfg);
    }
    result.history.epoch_mean_loss.push_back(loss_sum / static_cast<double>(n));
    result.history.epoch_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(n));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Prediction

std::vector<Label> labels_for(const FeatureMatrix& features, std::span<const ImageRecord> records) {
  std::unordered_map<std::string_view, Label> by_path;
  for (const auto& r : records) by_path.emplace(r.image_path, r.label);
  std::vector<Label> out;
  out.reserve(features.rows);
  for (const auto& id : features.row_ids) {
    auto it = by_path.find(id);
    if (it == by_path.end()) throw ValidationError("feature row " + id + " is not in the manifest");
    out.push_back(it->second);
  }
  return out;
}

ScoreSet predict_scores(const LinearHead& head, const FeatureMatrix& features,
                        std::span<const ImageRecord> records) {
  if (head.dim != features.cols) {
    throw ValidationError("predict: head expects D=" + std::to_string(head.dim) + ", features have D=" +
                          std::to_string(features.cols));
  }
  std::unordered_map<std::string_view, const ImageRecord*> by_path;
  for (const auto& r : records) by_path.emplace(r.image_path, &r);
  ScoreSet out;
  out.entries.reserve(features.rows);
  std::vector<double> x(features.cols);
  for (std::size_t i = 0; i < features.rows; ++i) {
    auto it = by_path.find(features.row_ids[i]);
    if (it == by_path.end()) {
      throw ValidationError("feature row " + features.row_ids[i] + " is not in the manifest");
    }
    const auto row = features.row(i);
    std::copy(row.begin(), row.end(), x.begin());
    const Vec2 q = head.probabilities(x);
    out.entries.push_back({q[kCovidIndex], it->second->label, it->second->subgroup, it->second->image_path});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

void write_head(const LinearHead& head, const TrainConfig& cfg, std::ostream& out, const std::string& extra_audit) {
  if (head.params.size() != 2 * head.dim + 2) throw ValidationError("head: parameter count mismatch");
  out.write("HEAD1", 5);
  detail::put_u32(out, static_cast<std::uint32_t>(head.dim));
  detail::put_u8(out, static_cast<std::uint8_t>(head.backbone));
  for (double p : head.params) detail::put_f64(out, p);
  out << cfg.to_key_values() << extra_audit;
}

void save_head(const LinearHead& head, const TrainConfig& cfg, const fs::path& path, const std::string& extra_audit) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write head file " + path.string());
  write_head(head, cfg, out, extra_audit);
  if (!out) throw IoError("error writing head file " + path.string());
}

HeadFile read_head(std::istream& in) {
  detail::Reader r(in, "head file");
  r.expect_magic("HEAD1");
  HeadFile f;
  f.head.dim = r.u32();
  f.head.backbone = backbone_from_code(r.u8());
  f.head.params.resize(2 * f.head.dim + 2);
  for (auto& p : f.head.params) {
    p = r.f64();
    if (!std::isfinite(p)) throw NumericError("head file: non-finite parameter");
  }
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError("head file: bad audit line '" + line + "'");
    f.audit[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return f;
}

HeadFile load_head(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read head file " + path.string());
  return read_head(in);
}

}  // namespace cxr
