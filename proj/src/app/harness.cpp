#include "daest/app/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "json.hpp"

#include "daest/classify/features.hpp"
#include "daest/error.hpp"
#include "daest/ndcore/parallel.hpp"

namespace daest::app {
namespace {

using json = nlohmann::json;

std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(fold), 0xf01du};
  std::mt19937_64 rng(seq);
  return rng();
}

std::string log_text(const std::vector<pretrain::EpochLog>& log) {
  std::string out;
  char buf[128];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", e.epoch, e.train_loss, e.val_loss, e.lr);
    out += buf;
  }
  return out;
}

json summary_json(const Summary& s) { return {{"mean", s.mean}, {"std", s.std}}; }

json tensor_rows(const nd::Tensor& t) {
  json rows = json::array();
  for (std::size_t i = 0; i < t.extent(0); ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < t.extent(1); ++j) {
      const double v = t.at(i, j);
      row.push_back(std::isfinite(v) ? json(v) : json(nullptr));
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

std::vector<Fold> make_folds(std::size_t subjects, const CvSpec& cv, std::uint64_t seed) {
  if (subjects < 2) throw ConfigError("cross-validation needs at least two subjects");
  const bool loso = cv.mode == "loso" || (cv.mode == "auto" && subjects <= 20);
  std::vector<std::size_t> order(subjects);
  std::iota(order.begin(), order.end(), 0);
  std::size_t k = subjects;
  if (!loso) {
    if (cv.folds < 2 || cv.folds > subjects) throw ConfigError("cv.folds must be in [2, subjects]");
    k = cv.folds;
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<Fold> folds(k);
  for (std::size_t i = 0; i < subjects; ++i) folds[i % k].test.push_back(order[i]);
  for (auto& f : folds) {
    std::sort(f.test.begin(), f.test.end());
    for (std::size_t s = 0; s < subjects; ++s) {
      if (!std::binary_search(f.test.begin(), f.test.end(), s)) f.train.push_back(s);
    }
  }
  check_no_leakage(folds, subjects);
  return folds;
}

void check_no_leakage(const std::vector<Fold>& folds, std::size_t subjects) {
  std::vector<int> tested(subjects, 0);
  for (const auto& f : folds) {
    const std::set<std::size_t> train(f.train.begin(), f.train.end());
    for (std::size_t s : f.test) {
      if (train.contains(s)) throw Error("fold leaks subject " + std::to_string(s) + " into training");
      if (s >= subjects) throw Error("fold names a subject out of range");
      ++tested[s];
    }
  }
  for (std::size_t s = 0; s < subjects; ++s) {
    if (tested[s] != 1) throw Error("subject " + std::to_string(s) + " is not tested exactly once");
  }
}

io::Dataset prepare_dataset(const io::Dataset& d, const RunConfig& c) {
  io::Dataset out = d;
  if (!c.class_map.empty()) out.class_map = c.class_map;
  if (!c.label_map.empty()) {
    for (auto& s : out.subjects) {
      std::vector<io::Trial> kept;
      for (auto& t : s.trials) {
        if (t.label < 0 || static_cast<std::size_t>(t.label) >= c.label_map.size()) {
          throw ConfigError("label_map has no entry for label " + std::to_string(t.label));
        }
        const int mapped = c.label_map[static_cast<std::size_t>(t.label)];
        if (mapped < 0) continue;
        t.label = mapped;
        kept.push_back(std::move(t));
      }
      s.trials = std::move(kept);
    }
  }
  if (c.shuffle_labels) {
    for (std::size_t i = 0; i < out.subjects.size(); ++i) {
      auto& trials = out.subjects[i].trials;
      std::vector<int> labels;
      for (const auto& t : trials) labels.push_back(t.label);
      std::mt19937_64 rng(fold_seed(c.seed ^ 0x5bu, i));
      std::shuffle(labels.begin(), labels.end(), rng);
      for (std::size_t t = 0; t < trials.size(); ++t) trials[t].label = labels[t];
    }
  }
  return out;
}

Summary summarize(const std::vector<double>& v) {
  Summary s;
  if (v.empty()) return s;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

FoldResult run_fold(const io::Dataset& d, const RunConfig& c, const Fold& fold, std::size_t index,
                    const FoldResult* pretrained) {
  const encoder::Geometry& g = c.geometry;
  if (g.M != d.channel_count()) {
    throw ConfigError("geometry.M = " + std::to_string(g.M) + " but the dataset has " +
                      std::to_string(d.channel_count()) + " channels");
  }
  if (g.fs != d.fs) throw ConfigError("geometry.fs differs from the dataset sampling rate");
  const std::size_t C = d.class_count();
  const std::uint64_t seed = fold_seed(c.seed, index);

  FoldResult r;
  r.fold = index;
  for (std::size_t s : fold.train) r.train.push_back(d.subjects.at(s).id);
  for (std::size_t s : fold.test) r.test.push_back(d.subjects.at(s).id);

  bundle::ModelBundle& m = r.model;
  m.geometry = g;
  m.class_map = d.class_map;
  m.norm_strategy = c.features.norm;
  m.smooth = c.features.smooth;
  m.lds = c.features.lds;
  m.config_hash = config_hash(c);
  if (pretrained) {
    if (bundle::geometry_to_json(pretrained->model.geometry) != bundle::geometry_to_json(g) || pretrained->train != r.train) {
      throw ConfigError("reused encoder was trained for a different geometry or split");
    }
    m.encoder = pretrained->model.encoder;
    m.projector = pretrained->model.projector;
    m.projector_geometry = pretrained->model.projector_geometry;
    r.pretrain_log = pretrained->pretrain_log;
    r.pretrain_best_epoch = pretrained->pretrain_best_epoch;
  } else if (c.skip_pretrain) {
    m.encoder = encoder::EncoderParams::init(g, seed);
  } else {
    std::vector<const io::Subject*> train;
    for (std::size_t s : fold.train) train.push_back(&d.subjects[s]);
    pretrain::PretrainConfig pc = c.pretrain;
    pc.seed = seed;
    pc.threads = c.threads;
    const pretrain::PretrainResult pr = pretrain::pretrain(train, g, pc);
    m.encoder = pr.encoder;
    m.projector = pr.projector;
    m.projector_geometry = pc.projector(g);
    r.pretrain_log = pr.log;
    r.pretrain_best_epoch = pr.best_epoch;
  }
  m.log_digest = bundle::digest(log_text(r.pretrain_log));

  classify::FeatureOptions fo = c.features;
  fo.threads = c.threads;
  const auto train_series = classify::extract_features(d, fold.train, m.encoder, g, fo);
  const auto test_series = classify::extract_features(d, fold.test, m.encoder, g, fo);
  const classify::SampleSet train = classify::to_samples(train_series);
  const classify::SampleSet test = classify::to_samples(test_series);

  classify::ClassifierConfig cc = c.classifier;
  cc.seed = seed;
  cc.threads = c.threads;
  const classify::TrainedClassifier tc = classify::train_classifier(train, C, cc);
  m.classifier = tc.params;
  r.weight_decay = tc.report.weight_decay;
  r.classifier_epochs = tc.report.epochs;

  const classify::Prediction pred = classify::predict(test.x, tc.params);
  r.confusion = nd::Tensor(nd::Shape{C, C});
  for (std::size_t i = 0; i < test.size(); ++i) {
    r.confusion.at(static_cast<std::size_t>(test.labels[i]), static_cast<std::size_t>(pred.labels[i])) += 1.0;
  }

  // Per subject: seconds correct, and per trial a majority vote (ties by summed probability).
  std::vector<std::size_t> correct(fold.test.size(), 0), total(fold.test.size(), 0);
  std::vector<std::size_t> trial_correct(fold.test.size(), 0), trial_total(fold.test.size(), 0);
  std::vector<std::size_t> row_of_subject(d.subjects.size(), 0);
  for (std::size_t i = 0; i < fold.test.size(); ++i) row_of_subject[fold.test[i]] = i;
  std::size_t row = 0;
  for (const auto& series : test_series) {
    const std::size_t S = series.values.extent(1);
    std::vector<std::size_t> votes(C, 0);
    std::vector<double> mass(C, 0.0);
    const std::size_t slot = row_of_subject[series.subject];
    for (std::size_t s = 0; s < S; ++s, ++row) {
      const auto p = static_cast<std::size_t>(pred.labels[row]);
      ++votes[p];
      for (std::size_t k = 0; k < C; ++k) mass[k] += pred.probabilities.at(row, k);
      correct[slot] += pred.labels[row] == series.label;
      ++total[slot];
    }
    if (S == 0) continue;
    std::size_t best = 0;
    for (std::size_t k = 1; k < C; ++k) {
      if (votes[k] > votes[best] || (votes[k] == votes[best] && mass[k] > mass[best])) best = k;
    }
    trial_correct[slot] += static_cast<int>(best) == series.label;
    ++trial_total[slot];
  }
  std::vector<double> acc, tacc;
  for (std::size_t i = 0; i < fold.test.size(); ++i) {
    SubjectScore s;
    s.id = d.subjects[fold.test[i]].id;
    s.fold = index;
    s.seconds = total[i];
    s.trials = trial_total[i];
    s.accuracy = total[i] ? static_cast<double>(correct[i]) / static_cast<double>(total[i]) : 0.0;
    s.trial_accuracy =
        trial_total[i] ? static_cast<double>(trial_correct[i]) / static_cast<double>(trial_total[i]) : 0.0;
    acc.push_back(s.accuracy);
    tacc.push_back(s.trial_accuracy);
    r.subjects.push_back(s);
  }
  r.accuracy = summarize(acc).mean;
  r.trial_accuracy = summarize(tacc).mean;
  return r;
}

EvalReport train_eval(const io::Dataset& d, const RunConfig& c, const std::function<void(const FoldResult&)>& on_fold,
                      const std::vector<FoldResult>* pretrained) {
  c.validate();
  const auto start = std::chrono::steady_clock::now();
  const std::vector<Fold> folds = make_folds(d.subjects.size(), c.cv, c.seed);
  if (pretrained && pretrained->size() != folds.size()) throw ConfigError("reused encoders: fold count differs");
  EvalReport report;
  report.config_hash = config_hash(c);
  report.class_map = d.class_map;
  report.folds.resize(folds.size());
  nd::parallel_for(
      folds.size(),
      [&](std::size_t i) {
        report.folds[i] = run_fold(d, c, folds[i], i, pretrained ? &(*pretrained)[i] : nullptr);
        if (on_fold) on_fold(report.folds[i]);
      },
      c.parallel_folds);

  const std::size_t C = d.class_count();
  nd::Tensor counts(nd::Shape{C, C});
  std::vector<double> subj, subj_trial, fold_acc, fold_trial;
  for (const auto& f : report.folds) {
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += f.confusion[i];
    fold_acc.push_back(f.accuracy);
    fold_trial.push_back(f.trial_accuracy);
    for (const auto& s : f.subjects) {
      subj.push_back(s.accuracy);
      subj_trial.push_back(s.trial_accuracy);
    }
  }
  report.subject_accuracy = summarize(subj);
  report.subject_trial_accuracy = summarize(subj_trial);
  report.fold_accuracy = summarize(fold_acc);
  report.fold_trial_accuracy = summarize(fold_trial);
  report.confusion = nd::Tensor(nd::Shape{C, C});
  report.empty_rows.assign(C, false);
  for (std::size_t i = 0; i < C; ++i) {
    double n = 0.0;
    for (std::size_t j = 0; j < C; ++j) n += counts.at(i, j);
    report.empty_rows[i] = n == 0.0;
    for (std::size_t j = 0; j < C; ++j) report.confusion.at(i, j) = n > 0.0 ? counts.at(i, j) / n : 0.0;
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::vector<SubjectScore> EvalReport::subjects() const {
  std::vector<SubjectScore> out;
  for (const auto& f : folds) out.insert(out.end(), f.subjects.begin(), f.subjects.end());
  return out;
}

std::string EvalReport::to_json() const {
  json fj = json::array();
  for (const auto& f : folds) {
    json subjects = json::array();
    for (const auto& s : f.subjects) {
      subjects.push_back({{"id", s.id},
                          {"accuracy", s.accuracy},
                          {"trial_accuracy", s.trial_accuracy},
                          {"seconds", s.seconds},
                          {"trials", s.trials}});
    }
    fj.push_back({{"fold", f.fold},
                  {"train", f.train},
                  {"test", f.test},
                  {"accuracy", f.accuracy},
                  {"trial_accuracy", f.trial_accuracy},
                  {"weight_decay", f.weight_decay},
                  {"classifier_epochs", f.classifier_epochs},
                  {"pretrain_best_epoch", f.pretrain_best_epoch},
                  {"subjects", subjects}});
  }
  const json j = {{"config_hash", config_hash},
                  {"class_map", class_map},
                  {"folds", fj},
                  {"per_second",
                   {{"across_subjects", summary_json(subject_accuracy)},
                    {"across_folds", summary_json(fold_accuracy)}}},
                  {"per_trial",
                   {{"across_subjects", summary_json(subject_trial_accuracy)},
                    {"across_folds", summary_json(fold_trial_accuracy)}}},
                  {"confusion", tensor_rows(confusion)},
                  {"empty_rows", empty_rows},
                  {"seconds", seconds}};
  return j.dump(2);
}

PairedTest paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw DimensionError("paired_t_test: samples differ in length");
  if (a.size() < 2) throw ConfigError("paired_t_test: need at least two pairs");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = b[i] - a[i];
  const Summary s = summarize(d);
  PairedTest r;
  r.n = d.size();
  r.mean_diff = s.mean;
  if (s.std == 0.0) {
    r.t = s.mean == 0.0 ? 0.0 : std::copysign(INFINITY, s.mean);
    r.p = s.mean == 0.0 ? 1.0 : 0.0;
    return r;
  }
  r.t = s.mean / (s.std / std::sqrt(static_cast<double>(r.n)));
  const boost::math::students_t dist(static_cast<double>(r.n - 1));
  r.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
  return r;
}

std::string sweep_key(const std::string& parameter) {
  if (parameter == "L2" || parameter == "L3" || parameter == "activation") return "geometry." + parameter;
  return parameter;
}

SweepResult sweep(const DataSource& data, const std::string& config_json, const std::string& parameter,
                  const std::vector<std::string>& values, const std::vector<std::uint64_t>& seeds) {
  if (values.empty() || seeds.empty()) throw ConfigError("sweep: need values and seeds");
  SweepResult out;
  out.parameter = parameter;
  out.seeds = seeds;
  out.rows.resize(values.size());
  for (std::size_t v = 0; v < values.size(); ++v) out.rows[v].value = values[v];
  const std::string key = sweep_key(parameter);
  for (std::uint64_t seed : seeds) {
    const io::Dataset raw = data(seed);
    for (std::size_t v = 0; v < values.size(); ++v) {
      std::string text = apply_override(config_json, key + "=" + values[v]);
      text = apply_override(text, "seed=" + std::to_string(seed));
      const RunConfig c = config_from_json(text);
      const EvalReport r = train_eval(prepare_dataset(raw, c), c);
      out.rows[v].accuracies.push_back(r.subject_accuracy.mean);
    }
  }
  for (auto& row : out.rows) {
    row.summary = summarize(row.accuracies);
    if (seeds.size() >= 2) row.versus_first = paired_t_test(out.rows.front().accuracies, row.accuracies);
  }
  return out;
}

std::string SweepResult::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "parameter,value,n,mean_accuracy,std_accuracy,mean_diff_vs_first,t_vs_first,p_vs_first\n";
  for (const auto& r : rows) {
    os << parameter << ',' << r.value << ',' << r.accuracies.size() << ',' << r.summary.mean << ','
       << r.summary.std << ',' << r.versus_first.mean_diff << ',' << r.versus_first.t << ',' << r.versus_first.p
       << '\n';
  }
  return os.str();
}

std::string SweepResult::per_seed_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "seed,value,accuracy\n";
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    for (const auto& r : rows) os << seeds[s] << ',' << r.value << ',' << r.accuracies[s] << '\n';
  }
  return os.str();
}

}  // namespace daest::app
