#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "daest/ndcore/tape.hpp"

namespace daest::nd {

/// Central differences at eps = 1e-5 carry roughly 1e-11 * |f| of rounding
/// noise, so gradients below this magnitude are compared absolutely.
inline constexpr double kGradFloor = 1e-6;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  /// Coordinates skipped because a piecewise op switched branch within +-eps.
  std::size_t skipped = 0;
};

/// Builds a scalar on `tape` from variables bound to the inputs.
using MultiScalarFn = std::function<Var(Tape&, std::span<const Var>)>;
using ScalarFn = std::function<Var(Tape&, Var)>;

/// Compares reverse-mode gradients with central differences at step `eps`.
/// Relative error per coordinate is |a - d| / max(|a|, |d|, kGradFloor).
GradCheckResult grad_check(const MultiScalarFn& f, std::span<const Tensor> inputs,
                           double eps = 1e-5);
GradCheckResult grad_check(const ScalarFn& f, const Tensor& x, double eps = 1e-5);

}  // namespace daest::nd
