#include "daest/dataio/windows.hpp"

#include <algorithm>
#include <string>

#include "daest/error.hpp"

namespace daest::io {

WindowingPlan WindowingPlan::half_overlap(std::size_t window) {
  if (window < 2) throw ConfigError("windowing: window must span at least 2 samples");
  return WindowingPlan{window, window / 2};
}

std::size_t WindowingPlan::count(std::size_t length) const {
  if (length < window) return 0;
  return (length - window) / step + 1;
}

nd::Tensor slice_columns(const nd::Tensor& x, std::size_t begin, std::size_t end) {
  if (x.rank() != 2 || begin > end || end > x.extent(1)) {
    throw DimensionError("slice_columns: [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for " + nd::to_string(x.shape()));
  }
  const std::size_t rows = x.extent(0), width = end - begin;
  nd::Tensor out(nd::Shape{rows, width});
  for (std::size_t r = 0; r < rows; ++r) {
    const auto src = x.row(r);
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(begin), width, out.row(r).begin());
  }
  return out;
}

std::vector<nd::Tensor> extract_windows(const nd::Tensor& trial, const WindowingPlan& plan,
                                        std::string_view trial_name) {
  if (trial.rank() != 2) throw DimensionError("extract_windows: trial must be M x T");
  if (plan.window == 0 || plan.step == 0) throw ConfigError("extract_windows: empty plan");
  const std::size_t length = trial.extent(1);
  if (length < plan.window) {
    throw DimensionError("extract_windows: " + std::string(trial_name) + " has " +
                         std::to_string(length) + " samples, shorter than one window of " +
                         std::to_string(plan.window));
  }
  const std::size_t n = plan.count(length);
  std::vector<nd::Tensor> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(slice_columns(trial, plan.offset(i), plan.offset(i) + plan.window));
  }
  return out;
}

}  // namespace daest::io
