#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include "daest/ndcore/tensor.hpp"

namespace daest::testing {

inline nd::Tensor random_tensor(nd::Shape shape, std::mt19937_64& rng, double lo = -1.0,
                                double hi = 1.0) {
  nd::Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.values()) v = u(rng);
  return t;
}

inline double max_abs_diff(const nd::Tensor& a, const nd::Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace daest::testing
