#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "support.hpp"
#include "support_data.hpp"

#include "daest/classify/features.hpp"
#include "daest/classify/mlp.hpp"
#include "daest/error.hpp"

using namespace daest;
using namespace daest::classify;
using nd::Shape;
using nd::Tensor;
using testing::random_tensor;

namespace {

// Posterior mean of the random-walk model as one dense generalized least-squares
// problem: minimize sum (y_t - x_t)^2 / r + sum (x_t - x_{t-1})^2 / q.
std::vector<double> gls_oracle(const std::vector<double>& y, double q, double r) {
  const auto n = static_cast<Eigen::Index>(y.size());
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n) / r;
  for (Eigen::Index t = 1; t < n; ++t) {
    A(t, t) += 1.0 / q;
    A(t - 1, t - 1) += 1.0 / q;
    A(t, t - 1) -= 1.0 / q;
    A(t - 1, t) -= 1.0 / q;
  }
  Eigen::VectorXd b(n);
  for (Eigen::Index t = 0; t < n; ++t) b(t) = y[static_cast<std::size_t>(t)] / r;
  const Eigen::VectorXd x = A.ldlt().solve(b);
  return {x.data(), x.data() + n};
}

SampleSet blobs(std::size_t per_class, std::size_t classes, std::size_t dims, double spread, std::uint64_t seed,
                std::size_t subjects = 4) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  SampleSet s;
  s.x = Tensor(Shape{per_class * classes, dims});
  std::size_t r = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i, ++r) {
      for (std::size_t k = 0; k < dims; ++k) s.x.at(r, k) = (k % classes == c ? 3.0 : 0.0) + spread * n01(rng);
      s.labels.push_back(static_cast<int>(c));
      s.subjects.push_back(i % subjects);
      s.series.push_back(r);
    }
  }
  return s;
}

}  // namespace

TEST_CASE("per-second features") {
  const Tensor c(Shape{3, 375}, 1.75);
  const Tensor f = per_second_features(c, 125.0);
  CHECK(f.shape() == Shape{3, 3});
  for (double v : f.values()) CHECK(v == 1.75);
  CHECK(per_second_features(Tensor(Shape{256, 625}), 125.0).shape() == Shape{256, 5});
  CHECK(per_second_features(Tensor(Shape{2, 300}), 125.0).shape() == Shape{2, 2});
  Tensor alt(Shape{1, 250});
  for (std::size_t t = 0; t < 250; ++t) alt[t] = t % 2 == 0 ? 1.0 : -1.0;
  const Tensor fa = per_second_features(alt, 125.0);
  // 125 samples per second: the odd count leaves one unpaired sample.
  for (double v : fa.values()) CHECK(std::abs(v) <= 1.0 / 125.0 + 1e-15);
  const Tensor fe = per_second_features(alt, 50.0);
  for (double v : fe.values()) CHECK(v == 0.0);
  CHECK_THROWS_AS(per_second_features(Tensor(Shape{2, 100}), 125.0), DimensionError);
}

TEST_CASE("adaptive normalization") {
  NormState st;
  const Tensor constant(Shape{2, 20}, 4.0);
  const Tensor out = adaptive_normalize(constant, st);
  for (double v : out.values()) CHECK(v == 0.0);

  NormState first;
  std::mt19937_64 rng(1);
  const Tensor r = random_tensor({3, 10}, rng);
  const Tensor n = adaptive_normalize(r, first);
  for (std::size_t k = 0; k < 3; ++k) CHECK(n.at(k, 0) == 0.0);

  NormState big;
  std::normal_distribution<double> n01;
  Tensor iid(Shape{1, 10000});
  for (double& v : iid.values()) v = n01(rng);
  const Tensor z = adaptive_normalize(iid, big);
  double mean = 0.0, var = 0.0;
  for (double v : z.values()) mean += v;
  mean /= 10000.0;
  for (double v : z.values()) var += (v - mean) * (v - mean);
  var /= 10000.0;
  CHECK(std::abs(mean) < 0.1);
  CHECK(std::abs(var - 1.0) < 0.1);

  NormState none_state;
  CHECK(adaptive_normalize(r, none_state, NormStrategy::none) == r);
}

TEST_CASE("adaptive normalization is per feature and causal") {
  std::mt19937_64 rng(2);
  const Tensor x = random_tensor({4, 30}, rng);
  Tensor perm(x.shape());
  const std::size_t order[4] = {2, 0, 3, 1};
  for (std::size_t k = 0; k < 4; ++k) {
    for (std::size_t t = 0; t < 30; ++t) perm.at(k, t) = x.at(order[k], t);
  }
  NormState a, b;
  const Tensor nx = adaptive_normalize(x, a), np = adaptive_normalize(perm, b);
  for (std::size_t k = 0; k < 4; ++k) {
    for (std::size_t t = 0; t < 30; ++t) CHECK(np.at(k, t) == nx.at(order[k], t));
  }

  Tensor suffix = x;
  for (std::size_t k = 0; k < 4; ++k) {
    for (std::size_t t = 20; t < 30; ++t) suffix.at(k, t) += 100.0;
  }
  NormState c;
  const Tensor ns = adaptive_normalize(suffix, c);
  for (std::size_t k = 0; k < 4; ++k) {
    for (std::size_t t = 0; t < 20; ++t) CHECK(ns.at(k, t) == nx.at(k, t));
  }

  // Continuing from saved state equals one pass over the concatenation.
  NormState whole, split;
  const Tensor w = adaptive_normalize(x, whole);
  Tensor left(Shape{4, 12}), right(Shape{4, 18});
  for (std::size_t k = 0; k < 4; ++k) {
    for (std::size_t t = 0; t < 30; ++t) (t < 12 ? left.at(k, t) : right.at(k, t - 12)) = x.at(k, t);
  }
  adaptive_normalize(left, split);
  const Tensor rn = adaptive_normalize(right, split);
  for (std::size_t k = 0; k < 4; ++k) {
    for (std::size_t t = 12; t < 30; ++t) CHECK(rn.at(k, t - 12) == w.at(k, t));
  }
}

TEST_CASE("LDS smoother matches a dense GLS solve") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> len(1, 64);
  std::uniform_real_distribution<double> qdist(0.01, 2.0), rdist(0.1, 3.0);
  std::normal_distribution<double> n01;
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = len(rng);
    const double q = qdist(rng), r = rdist(rng);
    std::vector<double> y(n);
    double level = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      if (t == n / 2) level += 3.0;
      y[t] = level + n01(rng);
    }
    const Tensor s = lds_smooth(Tensor(Shape{1, n}, y), LdsParams{q, r});
    const std::vector<double> o = gls_oracle(y, q, r);
    for (std::size_t t = 0; t < n; ++t) worst = std::max(worst, std::abs(s[t] - o[t]));
  }
  CHECK(worst < 1e-8);
}

TEST_CASE("LDS limits") {
  std::mt19937_64 rng(4);
  const Tensor y = random_tensor({3, 40}, rng, -5, 5);
  const Tensor exact = lds_smooth(y, LdsParams{0.1, 1e-12});
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(exact[i] - y[i]) < 1e-9);

  const Tensor flat = lds_smooth(y, LdsParams{0.0, 1.0});
  for (std::size_t k = 0; k < 3; ++k) {
    double mean = 0.0;
    for (std::size_t t = 0; t < 40; ++t) mean += y.at(k, t) / 40.0;
    for (std::size_t t = 0; t < 40; ++t) CHECK(std::abs(flat.at(k, t) - mean) < 1e-12);
  }
  CHECK_THROWS_AS(lds_smooth(Tensor(Shape{2, 0}), LdsParams{}), DimensionError);
  CHECK_THROWS_AS(lds_smooth(y, LdsParams{0.1, 0.0}), ConfigError);
}

TEST_CASE("LDS smoothing shrinks white-noise variance") {
  std::normal_distribution<double> n01;
  int shrunk = 0;
  for (int seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed) + 100);
    Tensor y(Shape{1, 50});
    for (double& v : y.values()) v = n01(rng);
    const Tensor s = lds_smooth(y, LdsParams{0.1, 1.0});
    const auto variance = [](const Tensor& t) {
      const double m = std::accumulate(t.values().begin(), t.values().end(), 0.0) / static_cast<double>(t.size());
      double acc = 0.0;
      for (double v : t.values()) acc += (v - m) * (v - m);
      return acc / static_cast<double>(t.size());
    };
    shrunk += variance(s) <= variance(y);
  }
  CHECK(shrunk == 100);
}

TEST_CASE("classifier heads and parameter counts") {
  for (std::size_t c : {2u, 3u, 5u, 9u}) {
    const ClassifierParams p = ClassifierParams::init(256, c, 1);
    CHECK(p.w3.shape() == Shape{c, 64});
    CHECK(p.w1.shape() == Shape{128, 256});
    CHECK(p.parameter_count() == classifier_parameter_count(256, c));
  }
  CHECK(classifier_parameter_count(256, 9) == 41737);
}

TEST_CASE("prediction contracts") {
  ClassifierParams p = ClassifierParams::init(6, 3, 2);
  std::mt19937_64 rng(5);
  const Tensor x = random_tensor({20, 6}, rng);
  const Prediction pr = predict(x, p);
  for (std::size_t i = 0; i < 20; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 3; ++j) s += pr.probabilities.at(i, j);
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
  ClassifierParams shifted = p;
  for (double& b : shifted.b3.values()) b += 17.0;
  CHECK(predict(x, shifted).labels == pr.labels);

  ClassifierParams zero = p;
  for (nd::Tensor* t : {&zero.w1, &zero.b1, &zero.w2, &zero.b2, &zero.w3, &zero.b3}) t->fill(0.0);
  const Prediction uniform = predict(x, zero);
  for (double v : uniform.probabilities.values()) CHECK(v == doctest::Approx(1.0 / 3.0));
  CHECK_THROWS_AS(predict(random_tensor({2, 5}, rng), p), DimensionError);
}

TEST_CASE("classifier training") {
  ClassifierConfig cfg;
  cfg.lr = 5e-3;
  cfg.epochs = 60;
  cfg.wd_grid = {0.001};
  cfg.batch_size = 32;
  const SampleSet train = blobs(40, 2, 5, 0.3, 6);
  const TrainedClassifier t = train_classifier(train, 2, cfg);
  CHECK(t.report.grid.empty());
  CHECK(accuracy(predict(train.x, t.params).labels, train.labels) == 1.0);

  SampleSet single = train;
  std::fill(single.labels.begin(), single.labels.end(), 1);
  CHECK_THROWS_AS(train_classifier(single, 2, cfg), ConfigError);

  cfg.wd_grid = {0.001, 0.1};
  cfg.epochs = 30;
  const SampleSet three = blobs(30, 3, 6, 0.5, 7, 5);
  const TrainedClassifier g = train_classifier(three, 3, cfg);
  CHECK(g.report.grid.size() == 2);
  CHECK(g.report.epochs >= 1);
  CHECK(accuracy(predict(three.x, g.params).labels, three.labels) > 0.95);
  const TrainedClassifier again = train_classifier(three, 3, cfg);
  CHECK(again.params == g.params);
}

TEST_CASE("feature extraction covers whole trials and leaves the encoder alone") {
  encoder::Geometry g;
  g.M = 3;
  g.T = 250;
  g.K1 = 2;
  g.L1 = 5;
  g.K2 = 2;
  g.L2 = 3;
  g.dilations = {{1, 2}, {2, 2}};
  g.L3 = 5;
  const io::Dataset d = testing::shared_source_dataset(2, 3, 3, 12 * 125 + 60, 8);
  const encoder::EncoderParams p = encoder::EncoderParams::init(g, 9);
  const encoder::EncoderParams before = p;
  const auto series = extract_features(d, {0, 1}, p, g);
  CHECK(p == before);
  REQUIRE(series.size() == 6);
  for (const FeatureSeries& s : series) CHECK(s.values.shape() == Shape{4, 12});
  // First second of every subject normalizes to zero before smoothing.
  FeatureOptions raw;
  raw.smooth = false;
  const auto unsmoothed = extract_features(d, {1}, p, g, raw);
  for (std::size_t k = 0; k < 4; ++k) CHECK(unsmoothed[0].values.at(k, 0) == 0.0);
  const SampleSet samples = to_samples(series);
  CHECK(samples.size() == 72);
  CHECK(samples.x.shape() == Shape{72, 4});
  CHECK(samples.subjects.back() == 1);
}
