#include "daest/classify/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "daest/error.hpp"
#include "daest/ndcore/ops.hpp"
#include "daest/ndcore/optim.hpp"
#include "daest/ndcore/parallel.hpp"

namespace daest::classify {

using nd::Shape;
using nd::Tape;
using nd::Tensor;
using nd::Var;

namespace {

Tensor uniform(Shape shape, double bound, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (double& v : t.values()) v = u(rng);
  return t;
}

}  // namespace

ClassifierParams ClassifierParams::init(std::size_t features, std::size_t classes, std::uint64_t seed) {
  if (features < 1 || classes < 2) throw ConfigError("classifier: need at least one feature and two classes");
  std::mt19937_64 rng(seed);
  const auto bound = [](std::size_t fan_in) { return std::sqrt(1.0 / static_cast<double>(fan_in)); };
  ClassifierParams p;
  p.w1 = uniform({kHidden1, features}, bound(features), rng);
  p.b1 = uniform({kHidden1}, bound(features), rng);
  p.w2 = uniform({kHidden2, kHidden1}, bound(kHidden1), rng);
  p.b2 = uniform({kHidden2}, bound(kHidden1), rng);
  p.w3 = uniform({classes, kHidden2}, bound(kHidden2), rng);
  p.b3 = uniform({classes}, bound(kHidden2), rng);
  return p;
}

std::size_t ClassifierParams::parameter_count() const {
  return w1.size() + b1.size() + w2.size() + b2.size() + w3.size() + b3.size();
}

std::size_t classifier_parameter_count(std::size_t features, std::size_t classes) {
  return kHidden1 * (features + 1) + kHidden2 * (kHidden1 + 1) + classes * (kHidden2 + 1);
}

ClassifierVars bind(Tape& tape, const ClassifierParams& p, bool trainable) {
  const auto put = [&](const Tensor& t) { return trainable ? tape.parameter(t) : tape.constant(t); };
  return {put(p.w1), put(p.b1), put(p.w2), put(p.b2), put(p.w3), put(p.b3)};
}

Var logits(Var x, const ClassifierVars& p) {
  Var h1 = nd::relu(nd::linear(x, p.w1, p.b1));
  Var h2 = nd::relu(nd::linear(h1, p.w2, p.b2));
  return nd::linear(h2, p.w3, p.b3);
}

Prediction predict(const Tensor& x, const ClassifierParams& p) {
  if (x.rank() != 2 || x.extent(1) != p.inputs()) {
    throw DimensionError("predict: features " + nd::to_string(x.shape()) + " do not match " +
                         std::to_string(p.inputs()) + " classifier inputs");
  }
  Tape tape;
  const Tensor z = logits(tape.constant(x), bind(tape, p, false)).value();
  const std::size_t n = z.extent(0), c = z.extent(1);
  Prediction out{Tensor(z.shape()), std::vector<int>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = z.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) total += (out.probabilities.at(i, j) = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < c; ++j) out.probabilities.at(i, j) /= total;
    out.labels[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.size() != truth.size() || truth.empty()) throw DimensionError("accuracy: size mismatch or empty");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

void ClassifierConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("classifier: lr must be positive");
  if (wd_grid.empty()) throw ConfigError("classifier: weight-decay grid is empty");
  for (double wd : wd_grid) {
    if (!(wd >= 0.0)) throw ConfigError("classifier: weight decay must be >= 0");
  }
  if (epochs < 1 || patience < 1 || batch_size < 1) throw ConfigError("classifier: epochs, patience, batch_size >= 1");
  if (inner_folds < 2) throw ConfigError("classifier: inner_folds must be >= 2");
}

namespace {

std::vector<std::size_t> target_indices(const std::vector<int>& labels, std::size_t classes) {
  std::vector<std::size_t> t(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw ConfigError("classifier: label " + std::to_string(labels[i]) + " outside " + std::to_string(classes) +
                        " classes");
    }
    t[i] = static_cast<std::size_t>(labels[i]);
  }
  return t;
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  const std::size_t k = x.extent(1);
  Tensor out(Shape{rows.size(), k});
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy_n(x.row(rows[i]).begin(), k, out.row(i).begin());
  return out;
}

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

Evaluation evaluate(const SampleSet& s, const ClassifierParams& p, std::size_t classes) {
  const std::vector<std::size_t> targets = target_indices(s.labels, classes);
  Tape tape;
  Var z = logits(tape.constant(s.x), bind(tape, p, false));
  const double loss = nd::softmax_cross_entropy(z, targets).value().item();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto row = z.value().row(i);
    hits += static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()) == targets[i];
  }
  return {loss, static_cast<double>(hits) / static_cast<double>(targets.size())};
}

SampleSet subset(const SampleSet& s, const std::vector<std::size_t>& rows) {
  SampleSet out;
  out.x = gather_rows(s.x, rows);
  for (std::size_t r : rows) {
    out.labels.push_back(s.labels[r]);
    out.subjects.push_back(s.subjects[r]);
    out.series.push_back(s.series[r]);
  }
  return out;
}

void require_two_classes(const SampleSet& s) {
  if (s.size() == 0) throw ConfigError("classifier: empty training set");
  const std::set<int> seen(s.labels.begin(), s.labels.end());
  if (seen.size() < 2) throw ConfigError("classifier: training set holds a single class");
}

}  // namespace

FitResult fit(const SampleSet& train, const SampleSet* val, std::size_t classes, double weight_decay,
              std::size_t epochs, std::size_t patience, const ClassifierConfig& config, std::uint64_t seed) {
  require_two_classes(train);
  const std::vector<std::size_t> targets = target_indices(train.labels, classes);
  std::mt19937_64 rng(seed);
  ClassifierParams p = ClassifierParams::init(train.x.extent(1), classes, rng());
  nd::Adam adam({config.lr, 0.9, 0.999, 1e-8, weight_decay},
                std::vector<const Tensor*>{&p.w1, &p.b1, &p.w2, &p.b2, &p.w3, &p.b3});
  const std::vector<Tensor*> params{&p.w1, &p.b1, &p.w2, &p.b2, &p.w3, &p.b3};

  FitResult best{p, 0, std::numeric_limits<double>::infinity(), 0.0};
  if (val != nullptr) {
    const Evaluation e = evaluate(*val, p, classes);
    best.best_val_loss = e.loss;
    best.best_val_accuracy = e.accuracy;
  }
  std::size_t since_best = 0;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double train_total = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const std::span<const std::size_t> rows(order.data() + begin, end - begin);
      std::vector<std::size_t> batch_targets;
      for (std::size_t r : rows) batch_targets.push_back(targets[r]);
      Tape tape;
      const ClassifierVars v = bind(tape, p, true);
      Var loss = nd::softmax_cross_entropy(logits(tape.constant(gather_rows(train.x, rows)), v), batch_targets);
      tape.backward(loss);
      if (!std::isfinite(loss.value().item())) throw NumericError("classifier: non-finite training loss");
      train_total += loss.value().item() * static_cast<double>(rows.size());
      const std::vector<Tensor> grads{tape.grad(v.w1), tape.grad(v.b1), tape.grad(v.w2),
                                      tape.grad(v.b2), tape.grad(v.w3), tape.grad(v.b3)};
      adam.step(params, grads);
    }
    double score = train_total / static_cast<double>(order.size());
    double acc = 0.0;
    if (val != nullptr) {
      const Evaluation e = evaluate(*val, p, classes);
      score = e.loss;
      acc = e.accuracy;
    }
    if (score < best.best_val_loss) {
      best = {p, epoch, score, acc};
      since_best = 0;
    } else if (++since_best >= patience) {
      break;
    }
  }
  return best;
}

TrainedClassifier train_classifier(const SampleSet& train, std::size_t classes, const ClassifierConfig& config) {
  config.validate();
  require_two_classes(train);
  std::vector<std::size_t> subjects(train.subjects.begin(), train.subjects.end());
  std::sort(subjects.begin(), subjects.end());
  subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
  const std::size_t folds = std::min(config.inner_folds, subjects.size());

  TrainedClassifier out;
  if (config.wd_grid.size() == 1 || folds < 2) {
    const double wd = config.wd_grid.front();
    FitResult r = fit(train, nullptr, classes, wd, config.epochs, config.patience, config, config.seed);
    out.params = std::move(r.params);
    out.report = {wd, r.best_epoch, {}};
    return out;
  }

  std::mt19937_64 rng(config.seed);
  std::shuffle(subjects.begin(), subjects.end(), rng);
  std::map<std::size_t, std::size_t> fold_of;
  for (std::size_t i = 0; i < subjects.size(); ++i) fold_of[subjects[i]] = i % folds;
  std::vector<SampleSet> fold_train(folds), fold_val(folds);
  for (std::size_t f = 0; f < folds; ++f) {
    std::vector<std::size_t> tr, va;
    for (std::size_t i = 0; i < train.size(); ++i) (fold_of[train.subjects[i]] == f ? va : tr).push_back(i);
    fold_train[f] = subset(train, tr);
    fold_val[f] = subset(train, va);
  }

  const std::size_t grid = config.wd_grid.size();
  std::vector<FitResult> results(grid * folds);
  nd::parallel_for(grid * folds, [&](std::size_t job) {
    const std::size_t w = job / folds, f = job % folds;
    results[job] = fit(fold_train[f], &fold_val[f], classes, config.wd_grid[w], config.epochs, config.patience,
                       config, config.seed + 1 + f);
  }, config.threads);

  std::size_t chosen = 0;
  for (std::size_t w = 0; w < grid; ++w) {
    WeightDecayScore s{config.wd_grid[w], 0.0, 0.0, 0.0};
    for (std::size_t f = 0; f < folds; ++f) {
      const FitResult& r = results[w * folds + f];
      s.val_accuracy += r.best_val_accuracy / static_cast<double>(folds);
      s.val_loss += r.best_val_loss / static_cast<double>(folds);
      s.best_epoch += static_cast<double>(r.best_epoch) / static_cast<double>(folds);
    }
    out.report.grid.push_back(s);
    const WeightDecayScore& c = out.report.grid[chosen];
    if (s.val_accuracy > c.val_accuracy || (s.val_accuracy == c.val_accuracy && s.val_loss < c.val_loss)) chosen = w;
  }
  const WeightDecayScore& pick = out.report.grid[chosen];
  const std::size_t epochs = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(pick.best_epoch)));
  FitResult final_fit = fit(train, nullptr, classes, pick.weight_decay, epochs, epochs + 1, config, config.seed);
  // Final fit on every training subject for the selected epoch budget.
  out.params = std::move(final_fit.params);
  out.report.weight_decay = pick.weight_decay;
  out.report.epochs = epochs;
  return out;
}

}  // namespace daest::classify
