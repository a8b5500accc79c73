#include "cxr/head.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <sstream>

#include "cxr/error.hpp"
#include "cxr/evaluate.hpp"
#include "cxr/synthetic.hpp"
#include "support.hpp"

using namespace cxr;

namespace {

std::vector<double> random_vector(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = scale * rng.normal();
  return v;
}

double loss_at(const LinearHead& h, std::span<const double> x, const Vec2& p) {
  return cross_entropy(p, h.probabilities(x));
}

// Central differences over every parameter.
std::vector<double> numeric_gradient(LinearHead h, std::span<const double> x, const Vec2& p, double step) {
  std::vector<double> g(h.params.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double saved = h.params[i];
    h.params[i] = saved + step;
    const double up = loss_at(h, x, p);
    h.params[i] = saved - step;
    const double down = loss_at(h, x, p);
    h.params[i] = saved;
    g[i] = (up - down) / (2 * step);
  }
  return g;
}

double norm(const std::vector<double>& v) {
  return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
}

struct Labelled {
  FeatureMatrix features;
  std::vector<Label> labels;
};

Labelled synthetic_train(std::uint64_t seed = 20200428) {
  SyntheticSpec spec;
  spec.seed = seed;
  auto fx = make_synthetic_fixture(spec);
  auto labels = labels_for(fx.train, fx.manifest.records);
  return {std::move(fx.train), std::move(labels)};
}

}  // namespace

TEST(Softmax, ReferenceValues) {
  const auto q = softmax({0.3, -1.2});
  EXPECT_NEAR(q[0], 0.8175744761936436596, 1e-15);
  EXPECT_NEAR(q[1], 0.1824255238063563404, 1e-15);
  const auto even = softmax({2.0, 2.0});
  EXPECT_EQ(even[0], 0.5);
  EXPECT_EQ(even[1], 0.5);
}

TEST(Softmax, LargeLogitsStayFinite) {
  const auto q = softmax({1000.0, -1000.0});
  EXPECT_EQ(q[0], 1.0);
  EXPECT_EQ(q[1], 0.0);
  EXPECT_THROW(softmax({std::nan(""), 0.0}), NumericError);
}

TEST(CrossEntropy, ReferenceValues) {
  EXPECT_NEAR(cross_entropy({1, 0}, {0.25, 0.75}), 1.386294361119890619, 1e-15);
  EXPECT_NEAR(cross_entropy({0, 1}, {0.1, 0.9}), 0.1053605156578263012, 1e-15);
  EXPECT_NEAR(cross_entropy(one_hot(Label::NonCovid), softmax({0.3, -1.2})), 0.2014132779827523601, 1e-15);
  EXPECT_THROW(cross_entropy({0, 1}, {1.0, 0.0}), NumericError);
}

TEST(OneHot, ClassIndexOrder) {
  EXPECT_EQ(one_hot(Label::Covid), (Vec2{0.0, 1.0}));
  EXPECT_EQ(one_hot(Label::NonCovid), (Vec2{1.0, 0.0}));
}

TEST(GradHead, ZeroWhenPredictionMatchesTarget) {
  auto h = LinearHead::zeros(4);
  h.bias(0) = -1000.0;
  h.bias(1) = 1000.0;
  const std::vector<double> x{0.5, -1.0, 2.0, 3.0};
  const auto g = grad_head(h, x, one_hot(Label::Covid));
  for (double v : g) EXPECT_EQ(v, 0.0);
}

TEST(GradHead, ZeroFeaturesOnlyMoveBias) {
  const auto h = LinearHead::zeros(3);
  const std::vector<double> x(3, 0.0);
  const auto g = grad_head(h, x, one_hot(Label::Covid));
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(g[i], 0.0);
  EXPECT_EQ(g[6], 0.5);
  EXPECT_EQ(g[7], -0.5);
}

TEST(GradHead, MatchesCentralDifferences) {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = 1 + rng.below(12);
    auto h = LinearHead::zeros(d);
    h.params = random_vector(rng, 2 * d + 2, 0.5);
    const auto x = random_vector(rng, d);
    const Vec2 p = one_hot(rng.below(2) ? Label::Covid : Label::NonCovid);
    const auto analytic = grad_head(h, x, p);
    const auto numeric = numeric_gradient(h, x, p, 1e-5);
    std::vector<double> diff(analytic.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = analytic[i] - numeric[i];
    EXPECT_LT(norm(diff) / std::max(norm(analytic), 1e-12), 1e-6) << "trial " << trial;
  }
}

TEST(GradHead, RejectsDimensionMismatch) {
  const auto h = LinearHead::zeros(3);
  const std::vector<double> x(4, 1.0);
  EXPECT_THROW(grad_head(h, x, one_hot(Label::Covid)), ValidationError);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  std::vector<double> w{0.25, -3.0, 7.5};
  const auto before = w;
  auto state = AdamState::zeros(3);
  const std::vector<double> g(3, 0.0);
  for (int i = 0; i < 5; ++i) adam_step(w, g, state, TrainConfig{});
  EXPECT_EQ(w, before);
  EXPECT_EQ(state.t, 5u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  std::vector<double> w{1.0, -1.0};
  auto state = AdamState::zeros(2);
  const std::vector<double> g{3.0, -0.02};
  adam_step(w, g, state, TrainConfig{});
  EXPECT_NEAR(w[0], 1.0 - 1e-4, 1e-11);
  EXPECT_NEAR(w[1], -1.0 + 1e-4, 1e-9);
}

TEST(Adam, TenStepTrajectoryOnSquare) {
  // f(w) = w^2 from w = 1 with lr 0.1; reference trajectory evaluated
  // independently in double precision.
  const double expected[10] = {0.9000000005,        0.8004122286917928,  0.7015862729460303, 0.603939060573746,
                               0.507963659264342,   0.4142364559936619,  0.3234207049391021, 0.23626372452104188,
                               0.1535845600703636,  0.07624915560691221};
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  std::vector<double> w{1.0};
  auto state = AdamState::zeros(1);
  for (int t = 0; t < 10; ++t) {
    const std::vector<double> g{2.0 * w[0]};
    adam_step(w, g, state, cfg);
    EXPECT_NEAR(w[0], expected[t], 1e-12) << "step " << t + 1;
  }
}

TEST(Adam, NonFiniteGradientRejectedWithoutMutation) {
  std::vector<double> w{1.0, 2.0};
  auto state = AdamState::zeros(2);
  const std::vector<double> g{0.5, std::numeric_limits<double>::infinity()};
  EXPECT_THROW(adam_step(w, g, state, TrainConfig{}), NumericError);
  EXPECT_EQ(w, (std::vector<double>{1.0, 2.0}));
  EXPECT_EQ(state.t, 0u);
}

TEST(TrainConfig, ValidateRejectsBadValues) {
  TrainConfig c;
  c.epochs = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = {};
  c.learning_rate = -1.0;
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(TrainConfig, KeyValuesRoundTrip) {
  TrainConfig c;
  c.learning_rate = 3.3e-5;
  c.shuffle_seed = 18446744073709551615ULL;
  std::map<std::string, std::string> kv;
  std::istringstream in(c.to_key_values());
  for (std::string line; std::getline(in, line);) {
    const auto eq = line.find('=');
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const auto back = TrainConfig::from_key_values(kv);
  EXPECT_EQ(back.learning_rate, c.learning_rate);
  EXPECT_EQ(back.shuffle_seed, c.shuffle_seed);
  EXPECT_EQ(back.epochs, c.epochs);
  EXPECT_EQ(back.beta2, c.beta2);
}

TEST(EpochPermutation, IsPermutationAndVariesByEpoch) {
  const auto a = epoch_permutation(0, 0, 100);
  const auto b = epoch_permutation(0, 1, 100);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(sorted[i], i);
  EXPECT_NE(a, b);
  EXPECT_EQ(a, epoch_permutation(0, 0, 100));
  EXPECT_NE(a, epoch_permutation(1, 0, 100));
}

TEST(TrainHead, SeparableDataReachesFullTrainingAccuracy) {
  const auto data = synthetic_train();
  const auto result = train_head(data.features, data.labels, TrainConfig{});
  ASSERT_EQ(result.history.epoch_mean_loss.size(), 100u);
  EXPECT_EQ(result.history.epoch_accuracy.back(), 1.0);
  for (std::size_t e = 0; e + 10 < 100; ++e) {
    EXPECT_LE(result.history.epoch_mean_loss[e + 10], result.history.epoch_mean_loss[e]);
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.features.rows; ++i) {
    const auto r = data.features.row(i);
    const std::vector<double> x(r.begin(), r.end());
    const bool covid = result.head.probabilities(x)[kCovidIndex] > 0.5;
    correct += covid == (data.labels[i] == Label::Covid);
  }
  EXPECT_EQ(correct, data.features.rows);
}

TEST(TrainHead, DeterministicAndSeedDependent) {
  const auto data = synthetic_train();
  TrainConfig cfg;
  cfg.epochs = 5;
  const auto a = train_head(data.features, data.labels, cfg);
  const auto b = train_head(data.features, data.labels, cfg);
  EXPECT_EQ(a.head, b.head);
  EXPECT_EQ(a.history.epoch_mean_loss, b.history.epoch_mean_loss);
  cfg.shuffle_seed = 1;
  const auto c = train_head(data.features, data.labels, cfg);
  EXPECT_NE(a.head.params, c.head.params);
}

TEST(TrainHead, IndependentOfInputRowOrder) {
  const auto data = synthetic_train();
  TrainConfig cfg;
  cfg.epochs = 3;
  std::vector<std::size_t> order(data.features.rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::reverse(order.begin(), order.end());
  std::rotate(order.begin(), order.begin() + 37, order.end());
  FeatureMatrix shuffled = data.features;
  std::vector<Label> labels(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto src = data.features.row(order[i]);
    std::copy(src.begin(), src.end(), shuffled.data.begin() + i * shuffled.cols);
    shuffled.row_ids[i] = data.features.row_ids[order[i]];
    labels[i] = data.labels[order[i]];
  }
  EXPECT_EQ(train_head(data.features, data.labels, cfg).head, train_head(shuffled, labels, cfg).head);
}

TEST(TrainHead, RejectsSingleClassAndLabelMismatch) {
  const auto data = synthetic_train();
  std::vector<Label> all_covid(data.labels.size(), Label::Covid);
  EXPECT_THROW(train_head(data.features, all_covid, TrainConfig{}), ValidationError);
  std::vector<Label> short_labels(data.labels.begin(), data.labels.end() - 1);
  EXPECT_THROW(train_head(data.features, short_labels, TrainConfig{}), ValidationError);
}

TEST(PredictScores, ZeroWeightsGiveHalf) {
  auto fx = make_synthetic_fixture();
  const auto head = LinearHead::zeros(fx.test.cols);
  const auto scores = predict_scores(head, fx.test, fx.manifest.records);
  ASSERT_EQ(scores.entries.size(), fx.test.rows);
  for (const auto& e : scores.entries) EXPECT_EQ(e.score, 0.5);
}

TEST(PredictScores, NegatedHeadMirrorsScores) {
  auto fx = make_synthetic_fixture();
  Rng rng(13);
  auto head = LinearHead::zeros(fx.test.cols);
  head.params = random_vector(rng, head.params.size(), 0.3);
  auto neg = head;
  for (auto& p : neg.params) p = -p;
  const auto a = predict_scores(head, fx.test, fx.manifest.records);
  const auto b = predict_scores(neg, fx.test, fx.manifest.records);
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    EXPECT_NEAR(a.entries[i].score, 1.0 - b.entries[i].score, 1e-12);
  }
}

TEST(PredictScores, TrainedHeadSeparatesTrainingRows) {
  auto fx = make_synthetic_fixture();
  const auto labels = labels_for(fx.train, fx.manifest.records);
  const auto result = train_head(fx.train, labels, TrainConfig{});
  const auto scores = predict_scores(result.head, fx.train, fx.manifest.records);
  EXPECT_GT(auc(roc_curve(scores)), 0.99);
}

TEST(PredictScores, RejectsDimensionMismatchAndUnknownRows) {
  auto fx = make_synthetic_fixture();
  EXPECT_THROW(predict_scores(LinearHead::zeros(fx.test.cols + 1), fx.test, fx.manifest.records), ValidationError);
  auto unknown = fx.test;
  unknown.row_ids[0] = "not/in/manifest.png";
  EXPECT_THROW(predict_scores(LinearHead::zeros(fx.test.cols), unknown, fx.manifest.records), ValidationError);
}

TEST(HeadFile, RoundTripWithAudit) {
  Rng rng(19);
  auto head = LinearHead::zeros(5, Backbone::ResNet50);
  head.params = random_vector(rng, head.params.size());
  TrainConfig cfg;
  cfg.epochs = 7;
  std::stringstream buf;
  write_head(head, cfg, buf, "backbone=RESNET50\n");
  const auto back = read_head(buf);
  EXPECT_EQ(back.head, head);
  EXPECT_EQ(back.audit.at("epochs"), "7");
  EXPECT_EQ(std::stod(back.audit.at("learning_rate")), 1e-4);
  EXPECT_EQ(back.audit.at("backbone"), "RESNET50");
}

TEST(HeadFile, ByteLayout) {
  auto head = LinearHead::zeros(1, Backbone::SqueezeNet);
  head.params = {1.0, 2.0, 3.0, 4.0};
  std::stringstream buf;
  write_head(head, TrainConfig{}, buf);
  const std::string bytes = buf.str();
  ASSERT_GE(bytes.size(), 5u + 4 + 1 + 32);
  EXPECT_EQ(bytes.substr(0, 5), "HEAD1");
  EXPECT_EQ(static_cast<unsigned char>(bytes[5]), 1u);
  EXPECT_EQ(bytes.substr(6, 3), std::string(3, '\0'));
  EXPECT_EQ(static_cast<unsigned char>(bytes[9]), 2u);
  double first = 0.0;
  std::memcpy(&first, bytes.data() + 10, sizeof first);
  EXPECT_EQ(first, 1.0);
  EXPECT_NE(bytes.find("batch_size=20\n", 42), std::string::npos);
}

TEST(HeadFile, RejectsCorruptInput) {
  std::stringstream bad_magic("HEAD2xxxxxxxxxxxxxxxx");
  EXPECT_THROW(read_head(bad_magic), ValidationError);
  auto head = LinearHead::zeros(3);
  std::stringstream buf;
  write_head(head, TrainConfig{}, buf);
  std::stringstream truncated(buf.str().substr(0, 30));
  EXPECT_THROW(read_head(truncated), ValidationError);
}
