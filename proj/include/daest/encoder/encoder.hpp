#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "daest/ndcore/tape.hpp"
#include "daest/ndcore/tensor.hpp"

namespace daest::encoder {

enum class Activation { sigmoid, softmax, relu, none, global };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view name);

struct DilationSet {
  std::size_t dilation = 1;
  /// Number of spatial transition kernels using this dilation.
  std::size_t count = 0;
};

struct Geometry {
  std::size_t M = 32;
  std::size_t T = 625;
  std::size_t K1 = 16;
  std::size_t L1 = 30;
  std::size_t K2 = 16;
  std::size_t L2 = 3;
  std::vector<DilationSet> dilations{{1, 64}, {3, 64}, {6, 64}, {12, 64}};
  std::size_t L3 = 7;
  Activation activation = Activation::sigmoid;
  double fs = 125.0;

  std::size_t K() const { return K1 * K2; }
  /// Throws ConfigError on any inconsistency.
  void validate() const;

  /// Equal-size dilation sets over the given dilations, K / n kernels each.
  static std::vector<DilationSet> even_sets(std::size_t K, const std::vector<std::size_t>& dilations);
  /// 32 channels, 5 s windows at 125 Hz, 16x16 kernels, dilations 1/3/6/12, L3 = 7.
  static Geometry faced();
};

/// Where latent dimension k comes from.
struct KernelInfo {
  std::size_t dilation_set = 0;
  std::size_t dilation = 1;
  /// Temporal filter feeding this dimension.
  std::size_t temporal_kernel = 0;
};

/// Latent dimensions are ordered dilation-set-major, then temporal kernel, then
/// spatial kernel within the group.
KernelInfo kernel_info(const Geometry& g, std::size_t k);

struct EncoderParams {
  nd::Tensor w_temp1;  // K1 x 1 x L1
  nd::Tensor w_spat;   // K x M x L2
  nd::Tensor w_temp2;  // K x L3
  nd::Tensor beta;     // K x K

  /// Uniform in +-sqrt(1 / fan_in) per tensor.
  static EncoderParams init(const Geometry& g, std::uint64_t seed);
  void check(const Geometry& g) const;
  std::size_t parameter_count() const;
  bool operator==(const EncoderParams&) const = default;
};

/// Parameter count implied by a geometry.
std::size_t encoder_parameter_count(const Geometry& g);

struct ForwardOptions {
  /// Replace the attention weights by ones (ablation equivalence checks).
  bool force_unit_attention = false;
};

struct EncoderVars {
  nd::Var w_temp1, w_spat, w_temp2, beta;
};

/// Places the parameters on `tape` (as trainable leaves or constants).
EncoderVars bind(nd::Tape& tape, const EncoderParams& p, bool trainable);

struct EncoderOutput {
  nd::Var latent;     // X^latent, K x T
  nd::Var attention;  // phi(S), K x T
  nd::Var output;     // attention-weighted latent, K x T
};

nd::Var tstc_forward(nd::Var x, const EncoderVars& p, const Geometry& g);
nd::Var dya_weights(nd::Var latent, const EncoderVars& p, const Geometry& g);
nd::Var dya_apply(nd::Var latent, nd::Var attention);
EncoderOutput encoder_forward(nd::Var x, const EncoderVars& p, const Geometry& g,
                              const ForwardOptions& options = {});

/// Tape-free forward pass in scalar type T. Arrays are K x T row-major.
template <class T>
struct Inference {
  std::vector<T> latent;
  std::vector<T> attention;
  std::vector<T> output;
};

template <class T>
Inference<T> infer(const nd::Tensor& x, const EncoderParams& p, const Geometry& g,
                   const ForwardOptions& options = {});

extern template Inference<float> infer<float>(const nd::Tensor&, const EncoderParams&,
                                              const Geometry&, const ForwardOptions&);
extern template Inference<double> infer<double>(const nd::Tensor&, const EncoderParams&,
                                                const Geometry&, const ForwardOptions&);

/// fp64 tape-free encoder output as a K x T tensor.
nd::Tensor encode(const nd::Tensor& x, const EncoderParams& p, const Geometry& g,
                  const ForwardOptions& options = {});

}  // namespace daest::encoder
