#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "daest/ndcore/tensor.hpp"

namespace daest::plot {

/// Line plot of several series over a shared x axis, auto-scaled, white background.
void lines(const std::filesystem::path& path, const std::vector<double>& x,
           const std::vector<std::vector<double>>& ys, int width = 640, int height = 360);

/// Heat map of a matrix, one block per cell, blue (negative) to red (positive).
void heatmap(const std::filesystem::path& path, const nd::Tensor& m, int cell = 24);

}  // namespace daest::plot
