#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "daest/classify/features.hpp"
#include "daest/ndcore/tape.hpp"
#include "daest/ndcore/tensor.hpp"

namespace daest::classify {

inline constexpr std::size_t kHidden1 = 128;
inline constexpr std::size_t kHidden2 = 64;

struct ClassifierParams {
  nd::Tensor w1, b1;  // 128 x K, 128
  nd::Tensor w2, b2;  // 64 x 128, 64
  nd::Tensor w3, b3;  // C x 64, C

  static ClassifierParams init(std::size_t features, std::size_t classes, std::uint64_t seed);
  std::size_t inputs() const { return w1.extent(1); }
  std::size_t classes() const { return w3.extent(0); }
  std::size_t parameter_count() const;
  bool operator==(const ClassifierParams&) const = default;
};

std::size_t classifier_parameter_count(std::size_t features, std::size_t classes);

struct ClassifierVars {
  nd::Var w1, b1, w2, b2, w3, b3;
};
ClassifierVars bind(nd::Tape& tape, const ClassifierParams& p, bool trainable);

/// N x K -> N x C logits.
nd::Var logits(nd::Var x, const ClassifierVars& p);

struct Prediction {
  nd::Tensor probabilities;  // N x C
  std::vector<int> labels;
};
Prediction predict(const nd::Tensor& x, const ClassifierParams& p);

struct ClassifierConfig {
  double lr = 5e-4;
  std::vector<double> wd_grid{0.001, 0.0022, 0.005, 0.011, 0.025};
  std::size_t epochs = 100;
  std::size_t patience = 30;
  std::size_t batch_size = 256;
  std::size_t inner_folds = 4;
  std::uint64_t seed = 1;
  std::size_t threads = 0;

  void validate() const;
};

struct WeightDecayScore {
  double weight_decay = 0.0;
  double val_accuracy = 0.0;
  double val_loss = 0.0;
  double best_epoch = 0.0;
};

struct TrainReport {
  double weight_decay = 0.0;
  std::size_t epochs = 0;
  std::vector<WeightDecayScore> grid;
};

struct TrainedClassifier {
  ClassifierParams params;
  TrainReport report;
};

/// Cross-entropy training. With more than one weight decay the value and the
/// epoch count are chosen by subject-wise inner cross-validation.
TrainedClassifier train_classifier(const SampleSet& train, std::size_t classes, const ClassifierConfig& config);

/// One Adam run with fixed weight decay; early stopping on `val` when given,
/// otherwise on the training loss. Returns the best parameters and epoch.
struct FitResult {
  ClassifierParams params;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  double best_val_accuracy = 0.0;
};
FitResult fit(const SampleSet& train, const SampleSet* val, std::size_t classes, double weight_decay,
              std::size_t epochs, std::size_t patience, const ClassifierConfig& config, std::uint64_t seed);

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth);

}  // namespace daest::classify
