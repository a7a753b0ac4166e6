#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "daest/classify/features.hpp"
#include "daest/classify/mlp.hpp"
#include "daest/dataio/dataset.hpp"
#include "daest/encoder/encoder.hpp"
#include "daest/ndcore/tensor.hpp"

namespace daest::interpret {

/// Scalar function of a K-vector that also writes its gradient.
using Differentiable = std::function<double(const std::vector<double>& x, std::vector<double>& grad)>;

/// Straight-line path from baseline to x, Riemann midpoint rule.
std::vector<double> integrated_gradients(const Differentiable& f, const std::vector<double>& x,
                                         const std::vector<double>& baseline, std::size_t steps);

/// Softmax probability of `target` and its input gradient.
double class_probability(const classify::ClassifierParams& p, const std::vector<double>& x, int target,
                         std::vector<double>* grad = nullptr);

/// uniform: plain midpoint rule. relu_aligned: the path is first cut where any
/// hidden ReLU changes state, and each linear region gets ceil(length * steps)
/// midpoint nodes.
enum class IgGrid { uniform, relu_aligned };

/// Path positions in [0, 1] where a hidden pre-activation crosses zero, with both ends.
std::vector<double> relu_breakpoints(const classify::ClassifierParams& p, const std::vector<double>& x,
                                     const std::vector<double>& baseline);

std::vector<double> integrated_gradients(const classify::ClassifierParams& p, const std::vector<double>& x,
                                         const std::vector<double>& baseline, int target, std::size_t steps,
                                         IgGrid grid = IgGrid::relu_aligned);

/// Row c: mean attribution towards class c over the samples labelled c (zero baseline).
struct AttributionMatrix {
  nd::Tensor values;  // C x K
  std::vector<std::size_t> counts;
  /// Largest |sum attributions - (F(x) - F(baseline))| seen.
  double completeness_error = 0.0;
};

AttributionMatrix attribution_matrix(const classify::ClassifierParams& p, const nd::Tensor& x,
                                     const std::vector<int>& labels, std::size_t steps = 256,
                                     IgGrid grid = IgGrid::relu_aligned, std::size_t threads = 0);

/// Haufe transform A = sigma * W for an M x L2 spatial kernel.
nd::Tensor spatial_activation(const nd::Tensor& w_spat, const nd::Tensor& sigma);

/// Channel covariance of the signals after one temporal filter, estimated from
/// at most `max_points` uniformly drawn time points.
nd::Tensor filtered_covariance(const std::vector<const nd::Tensor*>& signals, const std::vector<double>& taps,
                               std::size_t max_points = 100000, std::uint64_t seed = 1);

struct Spectrum {
  std::vector<double> hz;
  std::vector<double> magnitude;
};

/// |DFT| of zero-padded taps on the 0..fs/2 grid.
Spectrum frequency_response(const std::vector<double>& taps, double fs, std::size_t nfft = 512);

/// Pearson correlation between attribution rows; undefined entries are NaN and flagged.
struct Correlation {
  nd::Tensor values;  // C x C
  std::vector<bool> flagged;  // per row: zero variance
};

Correlation contribution_correlation(const AttributionMatrix& a);

struct DimensionReport {
  int emotion = 0;
  std::string emotion_name;
  std::size_t dimension = 0;
  double attribution = 0.0;
  char sign = '+';
  std::size_t temporal_kernel = 0;
  std::vector<double> temporal_filter;
  Spectrum response;
  std::size_t dilation = 1;
  nd::Tensor spatial_filter;      // M x L2
  nd::Tensor spatial_activation;  // M x L2
  std::vector<double> attention;
};

/// Dimension with the largest |mean attribution| for the emotion.
std::size_t top_dimension(const AttributionMatrix& a, int emotion);

/// `sigma` holds one channel covariance per temporal filter; `attention` is a K x T
/// excerpt (may be empty).
DimensionReport dimension_report(const encoder::Geometry& g, const encoder::EncoderParams& p,
                                 const AttributionMatrix& a, int emotion, const std::vector<nd::Tensor>& sigma,
                                 const nd::Tensor& attention);

std::string report_to_json(const DimensionReport& r);
DimensionReport report_from_json(const std::string& text);

struct AnalysisOptions {
  std::size_t steps = 256;
  IgGrid grid = IgGrid::relu_aligned;
  std::size_t max_points = 100000;
  classify::FeatureOptions features;
  /// Segment whose attention trace goes into every report.
  std::size_t excerpt_subject = 0;
  std::size_t excerpt_trial = 0;
  std::size_t excerpt_offset = 0;
  std::uint64_t seed = 1;
  std::size_t threads = 0;
};

struct Analysis {
  AttributionMatrix attributions;
  Correlation correlation;
  std::vector<nd::Tensor> sigma;
  std::vector<DimensionReport> reports;
};

/// Full pipeline over the chosen subjects of `data`.
Analysis analyze(const io::Dataset& data, const std::vector<std::size_t>& subjects, const encoder::Geometry& g,
                 const encoder::EncoderParams& p, const classify::ClassifierParams& classifier,
                 const AnalysisOptions& options = {});

}  // namespace daest::interpret
