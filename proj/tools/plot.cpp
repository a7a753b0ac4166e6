#include "plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdint>

#include <png.h>

#include "daest/error.hpp"

namespace daest::plot {
namespace {

using Rgb = std::array<std::uint8_t, 3>;

struct Image {
  int w, h;
  std::vector<std::uint8_t> px;
  Image(int w_, int h_) : w(w_), h(h_), px(static_cast<std::size_t>(w_ * h_ * 3), 255) {}
  void set(int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= w || y >= h) return;
    auto* p = &px[static_cast<std::size_t>((y * w + x) * 3)];
    p[0] = c[0];
    p[1] = c[1];
    p[2] = c[2];
  }
};

void write_png(const std::filesystem::path& path, const Image& img) {
  FILE* f = std::fopen(path.string().c_str(), "wb");
  if (!f) throw IoError("cannot open " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(f);
    throw IoError("png encoding failed for " + path.string());
  }
  png_init_io(png, f);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.h; ++y) {
    png_write_row(png, const_cast<png_bytep>(&img.px[static_cast<std::size_t>(y * img.w * 3)]));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(f);
}

void segment(Image& img, int x0, int y0, int x1, int y1, Rgb c) {
  const int n = std::max(std::abs(x1 - x0), std::abs(y1 - y0)) + 1;
  for (int i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) / n;
    img.set(static_cast<int>(std::lround(x0 + t * (x1 - x0))), static_cast<int>(std::lround(y0 + t * (y1 - y0))), c);
  }
}

constexpr std::array<Rgb, 6> kPalette{{{31, 119, 180}, {255, 127, 14}, {44, 160, 44},
                                       {214, 39, 40}, {148, 103, 189}, {140, 86, 75}}};

}  // namespace

void lines(const std::filesystem::path& path, const std::vector<double>& x,
           const std::vector<std::vector<double>>& ys, int width, int height) {
  if (x.size() < 2) throw DimensionError("plot: need at least two x values");
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& y : ys) {
    if (y.size() != x.size()) throw DimensionError("plot: series length differs from x");
    for (double v : y) {
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
  }
  if (!(hi > lo)) {
    lo -= 1.0;
    hi += 1.0;
  }
  const int pad = 20;
  Image img(width, height);
  segment(img, pad, height - pad, width - pad, height - pad, {0, 0, 0});
  segment(img, pad, pad, pad, height - pad, {0, 0, 0});
  const double x0 = x.front(), x1 = x.back();
  auto px = [&](double v) { return pad + static_cast<int>((v - x0) / (x1 - x0) * (width - 2 * pad)); };
  auto py = [&](double v) { return height - pad - static_cast<int>((v - lo) / (hi - lo) * (height - 2 * pad)); };
  for (std::size_t s = 0; s < ys.size(); ++s) {
    const Rgb c = kPalette[s % kPalette.size()];
    for (std::size_t i = 1; i < x.size(); ++i) {
      segment(img, px(x[i - 1]), py(ys[s][i - 1]), px(x[i]), py(ys[s][i]), c);
    }
  }
  write_png(path, img);
}

void heatmap(const std::filesystem::path& path, const nd::Tensor& m, int cell) {
  if (m.rank() != 2) throw DimensionError("heatmap: expected a matrix");
  const int rows = static_cast<int>(m.extent(0)), cols = static_cast<int>(m.extent(1));
  double amax = 0.0;
  for (double v : m.values()) {
    if (std::isfinite(v)) amax = std::max(amax, std::abs(v));
  }
  if (amax == 0.0) amax = 1.0;
  Image img(cols * cell, rows * cell);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double v = m.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
      Rgb col{200, 200, 200};
      if (std::isfinite(v)) {
        const double t = std::clamp(v / amax, -1.0, 1.0);
        const auto fade = static_cast<std::uint8_t>(255.0 * (1.0 - std::abs(t)));
        col = t >= 0 ? Rgb{255, fade, fade} : Rgb{fade, fade, 255};
      }
      for (int y = 0; y < cell; ++y) {
        for (int x = 0; x < cell; ++x) img.set(c * cell + x, r * cell + y, col);
      }
    }
  }
  write_png(path, img);
}

}  // namespace daest::plot
