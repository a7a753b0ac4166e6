#include "daest/ndcore/optim.hpp"

#include <cmath>

#include "daest/error.hpp"

namespace daest::nd {

Adam::Adam(AdamConfig config, std::span<const Tensor* const> params) : config_(config) {
  for (const Tensor* p : params) {
    m_.emplace_back(p->shape(), 0.0);
    v_.emplace_back(p->shape(), 0.0);
  }
}

Adam::Adam(AdamConfig config, std::vector<Tensor> first_moments,
           std::vector<Tensor> second_moments, std::size_t steps)
    : config_(config), m_(std::move(first_moments)), v_(std::move(second_moments)), steps_(steps) {
  if (m_.size() != v_.size()) throw DimensionError("adam: moment buffers disagree in count");
}

void Adam::step(std::span<Tensor* const> params, std::span<const Tensor> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw DimensionError("adam: expected " + std::to_string(m_.size()) + " parameters");
  }
  ++steps_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    const Tensor& g = grads[k];
    if (p.shape() != g.shape() || p.shape() != m_[k].shape()) {
      throw DimensionError("adam: parameter " + std::to_string(k) + " shape " +
                           to_string(p.shape()) + " vs gradient " + to_string(g.shape()));
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i] + config_.weight_decay * p[i];
      m_[k][i] = config_.beta1 * m_[k][i] + (1.0 - config_.beta1) * gi;
      v_[k][i] = config_.beta2 * v_[k][i] + (1.0 - config_.beta2) * gi * gi;
      const double mhat = m_[k][i] / bc1;
      const double vhat = v_[k][i] / bc2;
      p[i] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

}  // namespace daest::nd
