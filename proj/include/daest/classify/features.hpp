#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "daest/dataio/dataset.hpp"
#include "daest/encoder/encoder.hpp"
#include "daest/ndcore/tensor.hpp"

namespace daest::classify {

/// Non-overlapping one-second means of a K x T latent; trailing partial second dropped.
nd::Tensor per_second_features(const nd::Tensor& latent, double fs);

enum class NormStrategy { cumulative_zscore, none };

/// Running per-feature statistics of one subject.
struct NormState {
  std::vector<double> mean;
  std::vector<double> m2;
  std::size_t count = 0;
  double epsilon = 1e-6;

  void reset() {
    mean.clear();
    m2.clear();
    count = 0;
  }
};

/// Causal z-score of a K x S block, continuing from `state`. Each column is
/// folded into the running mean/variance before it is scaled, so the first
/// column of a subject maps to zero.
nd::Tensor adaptive_normalize(const nd::Tensor& features, NormState& state,
                              NormStrategy strategy = NormStrategy::cumulative_zscore);

struct LdsParams {
  double q = 0.1;  // random-walk state noise variance
  double r = 1.0;  // observation noise variance
};

/// Per-row scalar random-walk Kalman filter with diffuse start plus RTS smoothing.
nd::Tensor lds_smooth(const nd::Tensor& series, const LdsParams& params);

struct FeatureSeries {
  std::size_t subject = 0;
  std::size_t trial = 0;
  int label = 0;
  nd::Tensor values;  // K x S
};

struct FeatureOptions {
  NormStrategy norm = NormStrategy::cumulative_zscore;
  bool smooth = true;
  LdsParams lds;
  encoder::ForwardOptions forward;
  std::size_t threads = 0;
};

/// Encodes each trial in consecutive window-length chunks (a final shorter
/// chunk is kept when it spans at least one second), averages per second,
/// normalizes per subject in trial order and smooths per trial.
std::vector<FeatureSeries> extract_features(const io::Dataset& data, const std::vector<std::size_t>& subjects,
                                            const encoder::EncoderParams& params, const encoder::Geometry& g,
                                            const FeatureOptions& options = {});

/// Stacks feature series into an N x K sample matrix with per-row labels and subjects.
struct SampleSet {
  nd::Tensor x;
  std::vector<int> labels;
  std::vector<std::size_t> subjects;
  std::vector<std::size_t> series;  // index into the source vector

  std::size_t size() const { return labels.size(); }
};
SampleSet to_samples(const std::vector<FeatureSeries>& series);

}  // namespace daest::classify
