#include "daest/classify/features.hpp"

#include <cmath>

#include "daest/dataio/windows.hpp"
#include "daest/error.hpp"
#include "daest/ndcore/parallel.hpp"

namespace daest::classify {

using nd::Shape;
using nd::Tensor;

namespace {

std::size_t samples_per_second(double fs) {
  if (!(fs >= 1.0)) throw ConfigError("features: fs must be at least 1 Hz");
  return static_cast<std::size_t>(std::llround(fs));
}

}  // namespace

Tensor per_second_features(const Tensor& latent, double fs) {
  if (latent.rank() != 2) throw DimensionError("per_second_features: expected K x T");
  const std::size_t sps = samples_per_second(fs);
  const std::size_t rows = latent.extent(0), length = latent.extent(1);
  if (length < sps) {
    throw DimensionError("per_second_features: " + std::to_string(length) + " samples is less than one second");
  }
  const std::size_t seconds = length / sps;
  Tensor out(Shape{rows, seconds});
  for (std::size_t k = 0; k < rows; ++k) {
    const auto row = latent.row(k);
    for (std::size_t s = 0; s < seconds; ++s) {
      double acc = 0.0;
      for (std::size_t t = s * sps; t < (s + 1) * sps; ++t) acc += row[t];
      out.at(k, s) = acc / static_cast<double>(sps);
    }
  }
  return out;
}

Tensor adaptive_normalize(const Tensor& features, NormState& state, NormStrategy strategy) {
  if (features.rank() != 2) throw DimensionError("adaptive_normalize: expected K x S");
  if (strategy == NormStrategy::none) return features;
  const std::size_t rows = features.extent(0), cols = features.extent(1);
  if (state.count == 0) {
    state.mean.assign(rows, 0.0);
    state.m2.assign(rows, 0.0);
  } else if (state.mean.size() != rows) {
    throw DimensionError("adaptive_normalize: feature count changed within a subject");
  }
  Tensor out(features.shape());
  for (std::size_t s = 0; s < cols; ++s) {
    ++state.count;
    const double n = static_cast<double>(state.count);
    for (std::size_t k = 0; k < rows; ++k) {
      const double x = features.at(k, s);
      const double delta = x - state.mean[k];
      state.mean[k] += delta / n;
      state.m2[k] += delta * (x - state.mean[k]);
      const double sd = std::sqrt(std::max(0.0, state.m2[k] / n));
      out.at(k, s) = (x - state.mean[k]) / (sd + state.epsilon);
    }
  }
  return out;
}

Tensor lds_smooth(const Tensor& series, const LdsParams& params) {
  if (series.rank() != 2) throw DimensionError("lds_smooth: expected K x S");
  if (!(params.q >= 0.0) || !(params.r > 0.0)) throw ConfigError("lds_smooth: need q >= 0 and r > 0");
  const std::size_t rows = series.extent(0), len = series.extent(1);
  if (len == 0) throw DimensionError("lds_smooth: empty series");
  Tensor out(series.shape());
  std::vector<double> m(len), P(len);
  for (std::size_t k = 0; k < rows; ++k) {
    const auto y = series.row(k);
    // Diffuse start: the first observation alone fixes the state.
    m[0] = y[0];
    P[0] = params.r;
    for (std::size_t t = 1; t < len; ++t) {
      const double p_pred = P[t - 1] + params.q;
      const double gain = p_pred / (p_pred + params.r);
      m[t] = m[t - 1] + gain * (y[t] - m[t - 1]);
      P[t] = (1.0 - gain) * p_pred;
    }
    auto o = out.row(k);
    o[len - 1] = m[len - 1];
    for (std::size_t t = len - 1; t-- > 0;) {
      const double p_pred = P[t] + params.q;
      const double g = P[t] / p_pred;
      o[t] = m[t] + g * (o[t + 1] - m[t]);
    }
  }
  return out;
}

std::vector<FeatureSeries> extract_features(const io::Dataset& data, const std::vector<std::size_t>& subjects,
                                            const encoder::EncoderParams& params, const encoder::Geometry& g,
                                            const FeatureOptions& options) {
  const std::size_t sps = samples_per_second(g.fs);
  std::vector<FeatureSeries> out;
  for (std::size_t s : subjects) {
    if (s >= data.subjects.size()) throw ConfigError("extract_features: subject index out of range");
    for (std::size_t t = 0; t < data.subjects[s].trials.size(); ++t) {
      out.push_back({s, t, data.subjects[s].trials[t].label, {}});
    }
  }
  nd::parallel_for(out.size(), [&](std::size_t i) {
    const io::Trial& trial = data.subjects[out[i].subject].trials[out[i].trial];
    const std::size_t len = trial.signal.extent(1);
    if (len < sps) {
      throw DimensionError("extract_features: trial " + std::to_string(out[i].trial) + " of subject " +
                           data.subjects[out[i].subject].id + " is shorter than one second");
    }
    std::vector<Tensor> blocks;
    std::size_t total = 0;
    for (std::size_t begin = 0; begin < len; begin += g.T) {
      const std::size_t end = std::min(len, begin + g.T);
      if (end - begin < sps) break;
      encoder::Geometry chunk = g;
      chunk.T = end - begin;
      const Tensor latent = encoder::encode(io::slice_columns(trial.signal, begin, end), params, chunk, options.forward);
      blocks.push_back(per_second_features(latent, g.fs));
      total += blocks.back().extent(1);
    }
    const std::size_t K = g.K();
    Tensor f(Shape{K, total});
    std::size_t col = 0;
    for (const Tensor& b : blocks) {
      for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t c = 0; c < b.extent(1); ++c) f.at(k, col + c) = b.at(k, c);
      }
      col += b.extent(1);
    }
    out[i].values = std::move(f);
  }, options.threads);

  NormState state;
  std::size_t current = static_cast<std::size_t>(-1);
  for (FeatureSeries& fs : out) {
    if (fs.subject != current) {
      state.reset();
      current = fs.subject;
    }
    fs.values = adaptive_normalize(fs.values, state, options.norm);
  }
  if (options.smooth) {
    nd::parallel_for(out.size(), [&](std::size_t i) { out[i].values = lds_smooth(out[i].values, options.lds); },
                     options.threads);
  }
  return out;
}

SampleSet to_samples(const std::vector<FeatureSeries>& series) {
  SampleSet s;
  std::size_t rows = 0, K = 0;
  for (const FeatureSeries& f : series) {
    rows += f.values.extent(1);
    K = f.values.extent(0);
  }
  s.x = Tensor(Shape{rows, K});
  std::size_t r = 0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const FeatureSeries& f = series[i];
    if (f.values.extent(0) != K) throw DimensionError("to_samples: feature series disagree in K");
    for (std::size_t c = 0; c < f.values.extent(1); ++c, ++r) {
      for (std::size_t k = 0; k < K; ++k) s.x.at(r, k) = f.values.at(k, c);
      s.labels.push_back(f.label);
      s.subjects.push_back(f.subject);
      s.series.push_back(i);
    }
  }
  return s;
}

}  // namespace daest::classify
