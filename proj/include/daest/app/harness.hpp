#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "daest/app/config.hpp"
#include "daest/bundle/bundle.hpp"
#include "daest/dataio/dataset.hpp"

namespace daest::app {

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Subject-wise folds: one per subject for LOSO, otherwise `cv.folds` near-equal
/// groups of a seeded shuffle.
std::vector<Fold> make_folds(std::size_t subjects, const CvSpec& cv, std::uint64_t seed);

/// Throws when a subject is in both halves of a fold or missing from every test set.
void check_no_leakage(const std::vector<Fold>& folds, std::size_t subjects);

/// Applies label_map (dropping -1 trials), class_map and the label shuffle control.
io::Dataset prepare_dataset(const io::Dataset& d, const RunConfig& c);

struct SubjectScore {
  std::string id;
  std::size_t fold = 0;
  double accuracy = 0.0;        // per second
  double trial_accuracy = 0.0;  // per-trial majority vote
  std::size_t seconds = 0;
  std::size_t trials = 0;
};

struct FoldResult {
  std::size_t fold = 0;
  std::vector<std::string> train, test;
  std::vector<SubjectScore> subjects;
  double accuracy = 0.0;
  double trial_accuracy = 0.0;
  double weight_decay = 0.0;
  std::size_t classifier_epochs = 0;
  std::size_t pretrain_best_epoch = 0;
  std::vector<pretrain::EpochLog> pretrain_log;
  nd::Tensor confusion;  // C x C counts, rows = truth
  bundle::ModelBundle model;
};

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for one value
};

Summary summarize(const std::vector<double>& v);

struct EvalReport {
  std::string config_hash;
  std::vector<std::string> class_map;
  std::vector<FoldResult> folds;
  Summary subject_accuracy, fold_accuracy;
  Summary subject_trial_accuracy, fold_trial_accuracy;
  nd::Tensor confusion;  // row-normalized
  std::vector<bool> empty_rows;
  double seconds = 0.0;

  std::vector<SubjectScore> subjects() const;
  std::string to_json() const;
};

/// Pretrains on the training subjects (unless disabled), trains the classifier on
/// their features and scores the held-out subjects. A non-null `pretrained` fold
/// supplies the encoder instead; pretraining never sees labels, so a label-shuffled
/// run may reuse the encoders of an unshuffled one.
FoldResult run_fold(const io::Dataset& d, const RunConfig& c, const Fold& fold, std::size_t index,
                    const FoldResult* pretrained = nullptr);

/// `d` must already be prepared. Folds run `c.parallel_folds` at a time.
/// `pretrained`, when given, holds one earlier result per fold of the same split.
EvalReport train_eval(const io::Dataset& d, const RunConfig& c,
                      const std::function<void(const FoldResult&)>& on_fold = {},
                      const std::vector<FoldResult>* pretrained = nullptr);

struct PairedTest {
  std::size_t n = 0;
  double mean_diff = 0.0;  // mean of b - a
  double t = 0.0;
  double p = 1.0;  // two-sided
};

PairedTest paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

struct SweepRow {
  std::string value;
  std::vector<double> accuracies;  // one per seed
  Summary summary;
  PairedTest versus_first;
};

struct SweepResult {
  std::string parameter;
  std::vector<std::uint64_t> seeds;
  std::vector<SweepRow> rows;

  std::string to_csv() const;
  std::string per_seed_csv() const;
};

/// Dataset for one sweep seed (fixed data or freshly generated per seed).
using DataSource = std::function<io::Dataset(std::uint64_t seed)>;

/// "L2", "L3" and "activation" name geometry fields; any other name is a config key path.
std::string sweep_key(const std::string& parameter);

SweepResult sweep(const DataSource& data, const std::string& config_json, const std::string& parameter,
                  const std::vector<std::string>& values, const std::vector<std::uint64_t>& seeds);

}  // namespace daest::app
