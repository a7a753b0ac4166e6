#include "daest/encoder/encoder.hpp"

#include <cmath>
#include <random>

#include "daest/error.hpp"
#include "daest/ndcore/kernels.hpp"
#include "daest/ndcore/ops.hpp"

namespace daest::encoder {

using nd::Shape;
using nd::Tensor;
using nd::Var;

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::sigmoid: return "sigmoid";
    case Activation::softmax: return "softmax";
    case Activation::relu: return "relu";
    case Activation::none: return "none";
    case Activation::global: return "global";
  }
  return "?";
}

Activation activation_from_string(std::string_view name) {
  for (Activation a : {Activation::sigmoid, Activation::softmax, Activation::relu, Activation::none,
                       Activation::global}) {
    if (to_string(a) == name) return a;
  }
  throw ConfigError("unknown activation '" + std::string(name) +
                    "' (expected sigmoid, softmax, relu, none or global)");
}

void Geometry::validate() const {
  if (M < 1 || T < 1 || K1 < 1 || L1 < 1 || K2 < 1 || L2 < 1 || L3 < 1) {
    throw ConfigError("geometry: all extents must be >= 1");
  }
  if (!(fs > 0.0)) throw ConfigError("geometry: fs must be positive");
  if (dilations.empty()) throw ConfigError("geometry: at least one dilation set is required");
  std::size_t total = 0;
  for (const DilationSet& s : dilations) {
    if (s.dilation < 1 || s.count < 1) throw ConfigError("geometry: dilation sets need dilation and count >= 1");
    if (s.count % K1 != 0) {
      throw ConfigError("geometry: dilation set of " + std::to_string(s.count) +
                        " kernels is not divisible by K1 = " + std::to_string(K1));
    }
    total += s.count;
  }
  if (total != K()) {
    throw ConfigError("geometry: dilation sets hold " + std::to_string(total) + " kernels, K1*K2 = " +
                      std::to_string(K()));
  }
  if (L3 > T) throw ConfigError("geometry: L3 longer than the window");
}

std::vector<DilationSet> Geometry::even_sets(std::size_t K, const std::vector<std::size_t>& dilations) {
  if (dilations.empty() || K % dilations.size() != 0) {
    throw ConfigError("geometry: " + std::to_string(K) + " kernels cannot be split evenly over " +
                      std::to_string(dilations.size()) + " dilations");
  }
  std::vector<DilationSet> sets;
  for (std::size_t d : dilations) sets.push_back({d, K / dilations.size()});
  return sets;
}

Geometry Geometry::faced() { return Geometry{}; }

KernelInfo kernel_info(const Geometry& g, std::size_t k) {
  std::size_t begin = 0;
  for (std::size_t s = 0; s < g.dilations.size(); ++s) {
    const std::size_t n = g.dilations[s].count;
    if (k < begin + n) {
      const std::size_t per_group = n / g.K1;
      return {s, g.dilations[s].dilation, (k - begin) / per_group};
    }
    begin += n;
  }
  throw DimensionError("kernel_info: dimension " + std::to_string(k) + " out of range");
}

namespace {

Tensor uniform(Shape shape, double bound, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (double& v : t.values()) v = u(rng);
  return t;
}

void expect_shape(const Tensor& t, const Shape& s, const char* name) {
  if (t.shape() != s) {
    throw DimensionError(std::string("encoder params: ") + name + " has shape " + nd::to_string(t.shape()) +
                         ", expected " + nd::to_string(s));
  }
}

nd::ConvSpec temporal_spec(const Geometry& g) { return nd::ConvSpec{g.L1, 1, 1, nd::Padding::same_zero}; }

}  // namespace

EncoderParams EncoderParams::init(const Geometry& g, std::uint64_t seed) {
  g.validate();
  std::mt19937_64 rng(seed);
  EncoderParams p;
  const auto d = [](std::size_t fan_in) { return std::sqrt(1.0 / static_cast<double>(fan_in)); };
  p.w_temp1 = uniform({g.K1, 1, g.L1}, d(g.L1), rng);
  p.w_spat = uniform({g.K(), g.M, g.L2}, d(g.M * g.L2), rng);
  p.w_temp2 = uniform({g.K(), g.L3}, d(g.L3), rng);
  p.beta = uniform({g.K(), g.K()}, d(g.K()), rng);
  return p;
}

void EncoderParams::check(const Geometry& g) const {
  expect_shape(w_temp1, {g.K1, 1, g.L1}, "w_temp1");
  expect_shape(w_spat, {g.K(), g.M, g.L2}, "w_spat");
  expect_shape(w_temp2, {g.K(), g.L3}, "w_temp2");
  expect_shape(beta, {g.K(), g.K()}, "beta");
}

std::size_t EncoderParams::parameter_count() const {
  return w_temp1.size() + w_spat.size() + w_temp2.size() + beta.size();
}

std::size_t encoder_parameter_count(const Geometry& g) {
  return g.K1 * g.L1 + g.K() * g.M * g.L2 + g.K() * g.L3 + g.K() * g.K();
}

EncoderVars bind(nd::Tape& tape, const EncoderParams& p, bool trainable) {
  const auto put = [&](const Tensor& t) { return trainable ? tape.parameter(t) : tape.constant(t); };
  return {put(p.w_temp1), put(p.w_spat), put(p.w_temp2), put(p.beta)};
}

Var tstc_forward(Var x, const EncoderVars& p, const Geometry& g) {
  if (x.shape() != Shape{g.M, g.T}) {
    throw DimensionError("tstc_forward: input " + nd::to_string(x.shape()) + " does not match geometry " +
                         std::to_string(g.M) + "x" + std::to_string(g.T));
  }
  Var h1 = nd::filterbank(x, p.w_temp1, temporal_spec(g));
  Var stacked = nd::reshape(h1, Shape{g.K1 * g.M, g.T});
  std::vector<Var> parts;
  std::size_t begin = 0;
  for (const DilationSet& s : g.dilations) {
    Var w = nd::slice_rows(p.w_spat, begin, begin + s.count);
    parts.push_back(nd::conv_time(stacked, w, nd::ConvSpec{g.L2, s.dilation, g.K1, nd::Padding::same_zero}));
    begin += s.count;
  }
  return parts.size() == 1 ? parts.front() : nd::concat_rows(parts);
}

Var dya_weights(Var latent, const EncoderVars& p, const Geometry& g) {
  nd::Tape& tape = *latent.tape();
  if (g.activation == Activation::none) return tape.constant(Tensor(latent.shape(), 1.0));
  Var w = nd::reshape(p.w_temp2, Shape{g.K(), 1, g.L3});
  Var a = nd::conv_time(latent, w, nd::ConvSpec{g.L3, 1, g.K(), nd::Padding::same_zero});
  Var a_bar = g.activation == Activation::global ? nd::global_average(a) : nd::moving_average(a, g.L3, 1);
  Var s = nd::pointwise_mix(a_bar, p.beta);
  switch (g.activation) {
    case Activation::softmax: return nd::softmax_channels(s);
    case Activation::relu: return nd::relu(s);
    default: return nd::sigmoid(s);
  }
}

Var dya_apply(Var latent, Var attention) { return nd::mul(latent, attention); }

EncoderOutput encoder_forward(Var x, const EncoderVars& p, const Geometry& g, const ForwardOptions& options) {
  Var latent = tstc_forward(x, p, g);
  if (g.activation == Activation::none) {
    return {latent, latent.tape()->constant(Tensor(latent.shape(), 1.0)), latent};
  }
  Var attention = options.force_unit_attention ? latent.tape()->constant(Tensor(latent.shape(), 1.0))
                                               : dya_weights(latent, p, g);
  return {latent, attention, dya_apply(latent, attention)};
}

template <class T>
Inference<T> infer(const Tensor& x, const EncoderParams& p, const Geometry& g, const ForwardOptions& options) {
  namespace k = nd::kernels;
  if (x.shape() != Shape{g.M, g.T}) {
    throw DimensionError("encoder: input " + nd::to_string(x.shape()) + " does not match geometry");
  }
  p.check(g);
  const auto cast = [](const Tensor& t) { return std::vector<T>(t.values().begin(), t.values().end()); };
  const std::vector<T> xv = cast(x), w1 = cast(p.w_temp1), ws = cast(p.w_spat), w2 = cast(p.w_temp2),
                       beta = cast(p.beta);
  const std::size_t K = g.K(), len = g.T;

  std::vector<T> h1(g.K1 * g.M * len);
  k::filterbank_forward(xv.data(), g.M, len, w1.data(), g.K1, g.L1, temporal_spec(g).pad_head(), h1.data());

  Inference<T> out;
  out.latent.resize(K * len);
  std::size_t begin = 0;
  for (const DilationSet& s : g.dilations) {
    const nd::ConvSpec spec{g.L2, s.dilation, g.K1, nd::Padding::same_zero};
    k::ConvPlan plan{g.K1 * g.M, s.count, g.K1, len, len, g.L2, s.dilation, spec.pad_head()};
    k::conv_forward(h1.data(), ws.data() + begin * g.M * g.L2, out.latent.data() + begin * len, plan);
    begin += s.count;
  }

  if (g.activation == Activation::none || options.force_unit_attention) {
    out.attention.assign(K * len, T(1));
    out.output = out.latent;
    if (g.activation != Activation::none) {
      for (std::size_t i = 0; i < out.output.size(); ++i) out.output[i] = out.latent[i] * out.attention[i];
    }
    return out;
  }

  const nd::ConvSpec dspec{g.L3, 1, K, nd::Padding::same_zero};
  k::ConvPlan dplan{K, K, K, len, len, g.L3, 1, dspec.pad_head()};
  std::vector<T> a(K * len), a_bar(K * len), s(K * len);
  k::conv_forward(out.latent.data(), w2.data(), a.data(), dplan);
  if (g.activation == Activation::global) {
    k::row_mean_broadcast(a.data(), K, len, a_bar.data());
  } else {
    k::moving_average_same(a.data(), K, len, g.L3, a_bar.data());
  }
  k::gemm(beta.data(), K, K, false, a_bar.data(), K, len, false, s.data(), false);
  out.attention.resize(K * len);
  switch (g.activation) {
    case Activation::softmax:
      k::softmax_columns(s.data(), K, len, out.attention.data());
      break;
    case Activation::relu:
      for (std::size_t i = 0; i < s.size(); ++i) out.attention[i] = s[i] > T(0) ? s[i] : T(0);
      break;
    default:
      for (std::size_t i = 0; i < s.size(); ++i) out.attention[i] = k::sigmoid(s[i]);
      break;
  }
  out.output.resize(K * len);
  for (std::size_t i = 0; i < out.output.size(); ++i) out.output[i] = out.latent[i] * out.attention[i];
  return out;
}

template Inference<float> infer<float>(const Tensor&, const EncoderParams&, const Geometry&, const ForwardOptions&);
template Inference<double> infer<double>(const Tensor&, const EncoderParams&, const Geometry&,
                                         const ForwardOptions&);

Tensor encode(const Tensor& x, const EncoderParams& p, const Geometry& g, const ForwardOptions& options) {
  Inference<double> r = infer<double>(x, p, g, options);
  return Tensor(Shape{g.K(), g.T}, std::move(r.output));
}

}  // namespace daest::encoder
