#include "daest/interpret/interpret.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "json.hpp"

#include "daest/dataio/windows.hpp"
#include "daest/error.hpp"
#include "daest/ndcore/kernels.hpp"
#include "daest/ndcore/ops.hpp"
#include "daest/ndcore/parallel.hpp"

namespace daest::interpret {
namespace {

using json = nlohmann::json;

json tensor_json(const nd::Tensor& t) {
  return {{"shape", t.shape()}, {"values", t.storage()}};
}

nd::Tensor tensor_from(const json& j) {
  return nd::Tensor(j.at("shape").get<nd::Shape>(), j.at("values").get<std::vector<double>>());
}

}  // namespace

std::vector<double> integrated_gradients(const Differentiable& f, const std::vector<double>& x,
                                         const std::vector<double>& baseline, std::size_t steps) {
  if (steps < 1) throw ConfigError("integrated_gradients: steps must be >= 1");
  if (x.size() != baseline.size()) throw DimensionError("integrated_gradients: baseline size mismatch");
  const std::size_t K = x.size();
  std::vector<double> sum(K, 0.0), point(K), grad(K);
  for (std::size_t s = 0; s < steps; ++s) {
    const double alpha = (static_cast<double>(s) + 0.5) / static_cast<double>(steps);
    for (std::size_t i = 0; i < K; ++i) point[i] = baseline[i] + alpha * (x[i] - baseline[i]);
    std::fill(grad.begin(), grad.end(), 0.0);
    f(point, grad);
    for (std::size_t i = 0; i < K; ++i) sum[i] += grad[i];
  }
  std::vector<double> out(K);
  for (std::size_t i = 0; i < K; ++i) out[i] = (x[i] - baseline[i]) * sum[i] / static_cast<double>(steps);
  return out;
}

double class_probability(const classify::ClassifierParams& p, const std::vector<double>& x, int target,
                         std::vector<double>* grad) {
  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Vec = Eigen::VectorXd;
  const auto K = static_cast<Eigen::Index>(p.inputs());
  const auto C = static_cast<Eigen::Index>(p.classes());
  if (static_cast<Eigen::Index>(x.size()) != K) throw DimensionError("class_probability: feature size mismatch");
  if (target < 0 || target >= C) throw ConfigError("class_probability: target out of range");
  const auto H1 = static_cast<Eigen::Index>(classify::kHidden1), H2 = static_cast<Eigen::Index>(classify::kHidden2);
  const Eigen::Map<const Mat> w1(p.w1.data(), H1, K), w2(p.w2.data(), H2, H1), w3(p.w3.data(), C, H2);
  const Eigen::Map<const Vec> b1(p.b1.data(), H1), b2(p.b2.data(), H2), b3(p.b3.data(), C);
  const Eigen::Map<const Vec> xv(x.data(), K);

  const Vec a1 = w1 * xv + b1;
  const Vec h1 = a1.cwiseMax(0.0);
  const Vec a2 = w2 * h1 + b2;
  const Vec h2 = a2.cwiseMax(0.0);
  const Vec z = w3 * h2 + b3;
  const Vec e = (z.array() - z.maxCoeff()).exp();
  const Vec prob = e / e.sum();
  const double pc = prob(target);
  if (grad != nullptr) {
    Vec dz = -pc * prob;
    dz(target) += pc;
    Vec d2 = w3.transpose() * dz;
    d2 = (a2.array() > 0.0).select(d2, 0.0);
    Vec d1 = w2.transpose() * d2;
    d1 = (a1.array() > 0.0).select(d1, 0.0);
    const Vec dx = w1.transpose() * d1;
    grad->assign(dx.data(), dx.data() + K);
  }
  return pc;
}

std::vector<double> relu_breakpoints(const classify::ClassifierParams& p, const std::vector<double>& x,
                                     const std::vector<double>& baseline) {
  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Vec = Eigen::VectorXd;
  const auto K = static_cast<Eigen::Index>(p.inputs());
  if (static_cast<Eigen::Index>(x.size()) != K || baseline.size() != x.size()) {
    throw DimensionError("relu_breakpoints: feature size mismatch");
  }
  const auto H1 = static_cast<Eigen::Index>(classify::kHidden1), H2 = static_cast<Eigen::Index>(classify::kHidden2);
  const Eigen::Map<const Mat> w1(p.w1.data(), H1, K), w2(p.w2.data(), H2, H1);
  const Eigen::Map<const Vec> b1(p.b1.data(), H1), b2(p.b2.data(), H2);
  const Eigen::Map<const Vec> xv(x.data(), K), bv(baseline.data(), K);
  const Vec a1_0 = w1 * bv + b1;
  const Vec a1_d = w1 * (xv - bv);

  auto crossings = [](const Vec& start, const Vec& end, double u, double v, std::vector<double>& out) {
    for (Eigen::Index i = 0; i < start.size(); ++i) {
      if ((start(i) < 0.0) == (end(i) < 0.0) || start(i) == end(i)) continue;
      const double a = u + (v - u) * start(i) / (start(i) - end(i));
      if (a > u && a < v) out.push_back(a);
    }
  };
  std::vector<double> first{0.0, 1.0};
  crossings(a1_0, a1_0 + a1_d, 0.0, 1.0, first);
  std::sort(first.begin(), first.end());
  first.erase(std::unique(first.begin(), first.end()), first.end());

  // Inside a layer-1 region the second pre-activation is linear in alpha.
  std::vector<double> all = first;
  for (std::size_t s = 0; s + 1 < first.size(); ++s) {
    const double u = first[s], v = first[s + 1];
    const Vec mask = ((a1_0 + 0.5 * (u + v) * a1_d).array() > 0.0).cast<double>();
    const Vec a2_u = w2 * (mask.cwiseProduct(a1_0 + u * a1_d)) + b2;
    const Vec a2_v = w2 * (mask.cwiseProduct(a1_0 + v * a1_d)) + b2;
    crossings(a2_u, a2_v, u, v, all);
  }
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  return all;
}

std::vector<double> integrated_gradients(const classify::ClassifierParams& p, const std::vector<double>& x,
                                         const std::vector<double>& baseline, int target, std::size_t steps,
                                         IgGrid grid) {
  if (grid == IgGrid::uniform) {
    const Differentiable f = [&](const std::vector<double>& v, std::vector<double>& g) {
      return class_probability(p, v, target, &g);
    };
    return integrated_gradients(f, x, baseline, steps);
  }
  if (steps < 1) throw ConfigError("integrated_gradients: steps must be >= 1");
  const std::vector<double> cuts = relu_breakpoints(p, x, baseline);
  const std::size_t K = x.size();
  std::vector<double> sum(K, 0.0), point(K), grad(K);
  for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
    const double u = cuts[s], len = cuts[s + 1] - cuts[s];
    const auto n = static_cast<std::size_t>(std::max(1.0, std::ceil(len * static_cast<double>(steps))));
    const double h = len / static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j) {
      const double alpha = u + (static_cast<double>(j) + 0.5) * h;
      for (std::size_t i = 0; i < K; ++i) point[i] = baseline[i] + alpha * (x[i] - baseline[i]);
      class_probability(p, point, target, &grad);
      for (std::size_t i = 0; i < K; ++i) sum[i] += h * grad[i];
    }
  }
  std::vector<double> out(K);
  for (std::size_t i = 0; i < K; ++i) out[i] = (x[i] - baseline[i]) * sum[i];
  return out;
}

AttributionMatrix attribution_matrix(const classify::ClassifierParams& p, const nd::Tensor& x,
                                     const std::vector<int>& labels, std::size_t steps, IgGrid grid,
                                     std::size_t threads) {
  const std::size_t N = labels.size(), K = p.inputs(), C = p.classes();
  if (x.rank() != 2 || x.extent(0) != N || x.extent(1) != K) {
    throw DimensionError("attribution_matrix: features must be N x K with one label per row");
  }
  std::vector<std::vector<double>> per(N);
  std::vector<double> gap(N);
  const std::vector<double> zero(K, 0.0);
  nd::parallel_for(
      N,
      [&](std::size_t i) {
        const auto row = x.row(i);
        const std::vector<double> xi(row.begin(), row.end());
        per[i] = integrated_gradients(p, xi, zero, labels[i], steps, grid);
        double total = 0.0;
        for (double v : per[i]) total += v;
        gap[i] = std::abs(total - (class_probability(p, xi, labels[i]) - class_probability(p, zero, labels[i])));
      },
      threads);
  AttributionMatrix a;
  a.values = nd::Tensor(nd::Shape{C, K});
  a.counts.assign(C, 0);
  for (std::size_t i = 0; i < N; ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    for (std::size_t k = 0; k < K; ++k) a.values.at(c, k) += per[i][k];
    ++a.counts[c];
    a.completeness_error = std::max(a.completeness_error, gap[i]);
  }
  for (std::size_t c = 0; c < C; ++c) {
    if (a.counts[c] == 0) continue;
    for (std::size_t k = 0; k < K; ++k) a.values.at(c, k) /= static_cast<double>(a.counts[c]);
  }
  return a;
}

nd::Tensor spatial_activation(const nd::Tensor& w_spat, const nd::Tensor& sigma) {
  if (sigma.rank() != 2 || sigma.extent(0) != sigma.extent(1)) {
    throw DimensionError("spatial_activation: covariance must be square");
  }
  if (w_spat.rank() != 2 || w_spat.extent(0) != sigma.extent(0)) {
    throw DimensionError("spatial_activation: kernel must be M x L2");
  }
  const std::size_t M = sigma.extent(0), L = w_spat.extent(1);
  nd::Tensor out(nd::Shape{M, L});
  for (std::size_t i = 0; i < M; ++i) {
    for (std::size_t j = 0; j < M; ++j) {
      const double s = sigma.at(i, j);
      for (std::size_t l = 0; l < L; ++l) out.at(i, l) += s * w_spat.at(j, l);
    }
  }
  return out;
}

nd::Tensor filtered_covariance(const std::vector<const nd::Tensor*>& signals, const std::vector<double>& taps,
                               std::size_t max_points, std::uint64_t seed) {
  if (signals.empty()) throw DimensionError("filtered_covariance: no signals");
  if (taps.empty()) throw DimensionError("filtered_covariance: empty filter");
  const std::size_t M = signals.front()->extent(0);
  std::vector<std::size_t> starts{0};
  for (const auto* s : signals) {
    if (s->rank() != 2 || s->extent(0) != M) throw DimensionError("filtered_covariance: channel count mismatch");
    starts.push_back(starts.back() + s->extent(1));
  }
  const std::size_t total = starts.back();
  std::vector<std::size_t> picks;
  if (total <= max_points) {
    picks.resize(total);
    for (std::size_t i = 0; i < total; ++i) picks[i] = i;
  } else {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> u(0, total - 1);
    picks.resize(max_points);
    for (auto& v : picks) v = u(rng);
    std::sort(picks.begin(), picks.end());
  }
  const std::size_t pad_head = nd::ConvSpec{taps.size(), 1, 1, nd::Padding::same_zero}.pad_head();
  Eigen::MatrixXd pts(static_cast<Eigen::Index>(picks.size()), static_cast<Eigen::Index>(M));
  std::size_t next = 0;
  std::vector<double> filtered;
  for (std::size_t s = 0; s < signals.size() && next < picks.size(); ++s) {
    if (picks[next] >= starts[s + 1]) continue;
    const std::size_t T = signals[s]->extent(1);
    filtered.assign(M * T, 0.0);
    nd::kernels::filterbank_forward(signals[s]->data(), M, T, taps.data(), 1, taps.size(), pad_head,
                                    filtered.data());
    for (; next < picks.size() && picks[next] < starts[s + 1]; ++next) {
      const std::size_t t = picks[next] - starts[s];
      for (std::size_t m = 0; m < M; ++m) {
        pts(static_cast<Eigen::Index>(next), static_cast<Eigen::Index>(m)) = filtered[m * T + t];
      }
    }
  }
  const Eigen::RowVectorXd mean = pts.colwise().mean();
  const Eigen::MatrixXd centered = pts.rowwise() - mean;
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(pts.rows());
  nd::Tensor out(nd::Shape{M, M});
  for (std::size_t i = 0; i < M; ++i) {
    for (std::size_t j = 0; j < M; ++j) out.at(i, j) = cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  return out;
}

Spectrum frequency_response(const std::vector<double>& taps, double fs, std::size_t nfft) {
  if (nfft < taps.size() || nfft == 0) throw ConfigError("frequency_response: nfft must be >= filter length");
  Spectrum s;
  for (std::size_t k = 0; k <= nfft / 2; ++k) {
    double re = 0.0, im = 0.0;
    for (std::size_t l = 0; l < taps.size(); ++l) {
      const double w = 2.0 * std::numbers::pi * static_cast<double>(k * l % nfft) / static_cast<double>(nfft);
      re += taps[l] * std::cos(w);
      im -= taps[l] * std::sin(w);
    }
    s.hz.push_back(static_cast<double>(k) * fs / static_cast<double>(nfft));
    s.magnitude.push_back(std::hypot(re, im));
  }
  return s;
}

Correlation contribution_correlation(const AttributionMatrix& a) {
  const std::size_t C = a.values.extent(0), K = a.values.extent(1);
  if (C < 2) throw ConfigError("contribution_correlation: need at least two classes");
  std::vector<std::vector<double>> centered(C, std::vector<double>(K));
  std::vector<double> norm(C);
  Correlation out;
  out.values = nd::Tensor(nd::Shape{C, C});
  out.flagged.assign(C, false);
  for (std::size_t c = 0; c < C; ++c) {
    double mean = 0.0;
    for (std::size_t k = 0; k < K; ++k) mean += a.values.at(c, k);
    mean /= static_cast<double>(K);
    double ss = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      centered[c][k] = a.values.at(c, k) - mean;
      ss += centered[c][k] * centered[c][k];
    }
    norm[c] = std::sqrt(ss);
    out.flagged[c] = !(norm[c] > 0.0);
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 0; i < C; ++i) {
    out.values.at(i, i) = out.flagged[i] ? nan : 1.0;
    for (std::size_t j = i + 1; j < C; ++j) {
      double r = nan;
      if (!out.flagged[i] && !out.flagged[j]) {
        double dot = 0.0;
        for (std::size_t k = 0; k < K; ++k) dot += centered[i][k] * centered[j][k];
        r = std::clamp(dot / (norm[i] * norm[j]), -1.0, 1.0);
      }
      out.values.at(i, j) = r;
      out.values.at(j, i) = r;
    }
  }
  return out;
}

std::size_t top_dimension(const AttributionMatrix& a, int emotion) {
  if (emotion < 0 || static_cast<std::size_t>(emotion) >= a.values.extent(0)) {
    throw ConfigError("top_dimension: emotion out of range");
  }
  const auto c = static_cast<std::size_t>(emotion);
  if (a.counts.at(c) == 0) throw DimensionError("top_dimension: no evaluation samples for this emotion");
  std::size_t best = 0;
  for (std::size_t k = 1; k < a.values.extent(1); ++k) {
    if (std::abs(a.values.at(c, k)) > std::abs(a.values.at(c, best))) best = k;
  }
  return best;
}

DimensionReport dimension_report(const encoder::Geometry& g, const encoder::EncoderParams& p,
                                 const AttributionMatrix& a, int emotion, const std::vector<nd::Tensor>& sigma,
                                 const nd::Tensor& attention) {
  DimensionReport r;
  r.emotion = emotion;
  r.dimension = top_dimension(a, emotion);
  r.attribution = a.values.at(static_cast<std::size_t>(emotion), r.dimension);
  r.sign = r.attribution < 0.0 ? '-' : '+';
  const encoder::KernelInfo info = encoder::kernel_info(g, r.dimension);
  r.temporal_kernel = info.temporal_kernel;
  r.dilation = info.dilation;
  for (std::size_t l = 0; l < g.L1; ++l) r.temporal_filter.push_back(p.w_temp1[info.temporal_kernel * g.L1 + l]);
  r.response = frequency_response(r.temporal_filter, g.fs);
  r.spatial_filter = nd::Tensor(nd::Shape{g.M, g.L2});
  for (std::size_t m = 0; m < g.M; ++m) {
    for (std::size_t l = 0; l < g.L2; ++l) r.spatial_filter.at(m, l) = p.w_spat.at(r.dimension, m, l);
  }
  if (info.temporal_kernel >= sigma.size()) throw DimensionError("dimension_report: missing covariance");
  r.spatial_activation = spatial_activation(r.spatial_filter, sigma[info.temporal_kernel]);
  if (!attention.empty()) {
    const auto row = attention.row(r.dimension);
    r.attention.assign(row.begin(), row.end());
  }
  return r;
}

std::string report_to_json(const DimensionReport& r) {
  const json j = {{"emotion", r.emotion},
                  {"emotion_name", r.emotion_name},
                  {"dimension", r.dimension},
                  {"attribution", r.attribution},
                  {"sign", std::string(1, r.sign)},
                  {"temporal_kernel", r.temporal_kernel},
                  {"temporal_filter", r.temporal_filter},
                  {"frequency_hz", r.response.hz},
                  {"magnitude", r.response.magnitude},
                  {"dilation", r.dilation},
                  {"spatial_filter", tensor_json(r.spatial_filter)},
                  {"spatial_activation", tensor_json(r.spatial_activation)},
                  {"attention", r.attention}};
  return j.dump(2);
}

DimensionReport report_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    DimensionReport r;
    r.emotion = j.at("emotion");
    r.emotion_name = j.at("emotion_name");
    r.dimension = j.at("dimension");
    r.attribution = j.at("attribution");
    const std::string sign = j.at("sign");
    if (sign != "+" && sign != "-") throw FormatError("report: sign must be + or -");
    r.sign = sign[0];
    r.temporal_kernel = j.at("temporal_kernel");
    r.temporal_filter = j.at("temporal_filter").get<std::vector<double>>();
    r.response.hz = j.at("frequency_hz").get<std::vector<double>>();
    r.response.magnitude = j.at("magnitude").get<std::vector<double>>();
    r.dilation = j.at("dilation");
    r.spatial_filter = tensor_from(j.at("spatial_filter"));
    r.spatial_activation = tensor_from(j.at("spatial_activation"));
    r.attention = j.at("attention").get<std::vector<double>>();
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("report: ") + e.what());
  }
}

Analysis analyze(const io::Dataset& data, const std::vector<std::size_t>& subjects, const encoder::Geometry& g,
                 const encoder::EncoderParams& p, const classify::ClassifierParams& classifier,
                 const AnalysisOptions& options) {
  if (subjects.empty()) throw DimensionError("analyze: empty evaluation set");
  classify::FeatureOptions fo = options.features;
  fo.threads = options.threads;
  const classify::SampleSet samples = classify::to_samples(classify::extract_features(data, subjects, p, g, fo));
  if (samples.size() == 0) throw DimensionError("analyze: evaluation set has no whole seconds");

  Analysis out;
  out.attributions =
      attribution_matrix(classifier, samples.x, samples.labels, options.steps, options.grid, options.threads);
  out.correlation = contribution_correlation(out.attributions);

  std::vector<const nd::Tensor*> signals;
  for (std::size_t s : subjects) {
    for (const auto& t : data.subjects.at(s).trials) signals.push_back(&t.signal);
  }
  out.sigma.resize(g.K1);
  nd::parallel_for(
      g.K1,
      [&](std::size_t j) {
        const std::vector<double> taps(p.w_temp1.data() + j * g.L1, p.w_temp1.data() + (j + 1) * g.L1);
        out.sigma[j] = filtered_covariance(signals, taps, options.max_points, options.seed + j);
      },
      options.threads);

  nd::Tensor attention;
  const auto& trial = data.subjects.at(options.excerpt_subject).trials.at(options.excerpt_trial).signal;
  if (options.excerpt_offset + g.T <= trial.extent(1)) {
    const nd::Tensor window = io::slice_columns(trial, options.excerpt_offset, options.excerpt_offset + g.T);
    const auto inf = encoder::infer<double>(window, p, g, fo.forward);
    if (inf.attention.size() == g.K() * g.T) attention = nd::Tensor(nd::Shape{g.K(), g.T}, inf.attention);
  }
  for (std::size_t c = 0; c < out.attributions.counts.size(); ++c) {
    if (out.attributions.counts[c] == 0) continue;
    DimensionReport r = dimension_report(g, p, out.attributions, static_cast<int>(c), out.sigma, attention);
    if (c < data.class_map.size()) r.emotion_name = data.class_map[c];
    out.reports.push_back(std::move(r));
  }
  return out;
}

}  // namespace daest::interpret
