#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "daest/ndcore/tensor.hpp"

namespace daest::nd {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Additive L2 term: the gradient seen by Adam is g + weight_decay * theta.
  double weight_decay = 0.0;
};

/// Adam with additive L2 weight decay. Moment buffers follow the parameter order
/// given at construction.
class Adam {
 public:
  Adam(AdamConfig config, std::span<const Tensor* const> params);
  Adam(AdamConfig config, std::vector<Tensor> first_moments, std::vector<Tensor> second_moments,
       std::size_t steps);

  void step(std::span<Tensor* const> params, std::span<const Tensor> grads);

  const AdamConfig& config() const { return config_; }
  std::size_t steps() const { return steps_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }

 private:
  AdamConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::size_t steps_ = 0;
};

}  // namespace daest::nd
