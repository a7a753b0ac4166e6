#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "daest/ndcore/tensor.hpp"

namespace daest::io {

/// Sliding windows of `window` samples, advancing by window / 2.
struct WindowingPlan {
  std::size_t window = 0;
  std::size_t step = 0;

  static WindowingPlan half_overlap(std::size_t window);

  /// floor((length - window) / step) + 1; zero when the trial is shorter than a window.
  std::size_t count(std::size_t length) const;
  std::size_t offset(std::size_t index) const { return index * step; }
};

/// Column slices [offset, offset + window) of an M x T trial.
std::vector<nd::Tensor> extract_windows(const nd::Tensor& trial, const WindowingPlan& plan,
                                        std::string_view trial_name = "trial");

/// Columns [begin, end) of an M x T array.
nd::Tensor slice_columns(const nd::Tensor& x, std::size_t begin, std::size_t end);

}  // namespace daest::io
