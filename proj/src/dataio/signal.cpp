#include "daest/dataio/signal.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include "daest/error.hpp"

namespace daest::io {

namespace {

struct Biquad {
  std::array<double, 3> b{};
  std::array<double, 3> a{};  // a[0] == 1
};

enum class Kind { lowpass, highpass };

// Bilinear-transformed second-order sections with frequency prewarping; the
// quality factors of the two sections realize a 4th-order Butterworth.
std::vector<Biquad> butterworth4(Kind kind, double cutoff, double fs) {
  const double w0 = 2.0 * std::numbers::pi * cutoff / fs;
  const double c = std::cos(w0), s = std::sin(w0);
  std::vector<Biquad> sections;
  for (double q : {1.0 / (2.0 * std::cos(std::numbers::pi / 8.0)),
                   1.0 / (2.0 * std::cos(3.0 * std::numbers::pi / 8.0))}) {
    const double alpha = s / (2.0 * q);
    const double a0 = 1.0 + alpha;
    Biquad bq;
    if (kind == Kind::lowpass) {
      bq.b = {(1.0 - c) / 2.0, 1.0 - c, (1.0 - c) / 2.0};
    } else {
      bq.b = {(1.0 + c) / 2.0, -(1.0 + c), (1.0 + c) / 2.0};
    }
    bq.a = {1.0, -2.0 * c, 1.0 - alpha};
    for (double& v : bq.b) v /= a0;
    bq.a[1] /= a0;
    bq.a[2] /= a0;
    sections.push_back(bq);
  }
  return sections;
}

// Transposed direct form II state reached after a long unit-step input.
std::array<double, 2> step_state(const Biquad& s) {
  const double gain = (s.b[0] + s.b[1] + s.b[2]) / (1.0 + s.a[1] + s.a[2]);
  const double z2 = s.b[2] - s.a[2] * gain;
  const double z1 = s.b[1] - s.a[1] * gain + z2;
  return {z1, z2};
}

double dc_gain(const Biquad& s) { return (s.b[0] + s.b[1] + s.b[2]) / (1.0 + s.a[1] + s.a[2]); }

void sos_filter(const std::vector<Biquad>& sos, std::vector<double>& x) {
  if (x.empty()) return;
  const double x0 = x.front();
  double scale = x0;
  for (const Biquad& s : sos) {
    auto [z1, z2] = step_state(s);
    z1 *= scale;
    z2 *= scale;
    for (double& v : x) {
      const double y = s.b[0] * v + z1;
      z1 = s.b[1] * v - s.a[1] * y + z2;
      z2 = s.b[2] * v - s.a[2] * y;
      v = y;
    }
    scale *= dc_gain(s);
  }
}

void filtfilt_row(const std::vector<Biquad>& sos, const double* in, std::size_t length, double* out) {
  if (length == 0) return;
  const std::size_t pad = std::min<std::size_t>(length - 1, 3 * (2 * sos.size() + 1));
  std::vector<double> ext(length + 2 * pad);
  for (std::size_t i = 0; i < pad; ++i) ext[i] = 2.0 * in[0] - in[pad - i];
  std::copy(in, in + length, ext.begin() + static_cast<std::ptrdiff_t>(pad));
  for (std::size_t i = 0; i < pad; ++i) {
    ext[pad + length + i] = 2.0 * in[length - 1] - in[length - 2 - i];
  }
  sos_filter(sos, ext);
  std::reverse(ext.begin(), ext.end());
  sos_filter(sos, ext);
  std::reverse(ext.begin(), ext.end());
  std::copy_n(ext.begin() + static_cast<std::ptrdiff_t>(pad), length, out);
}

void require_matrix(const nd::Tensor& x, const char* what) {
  if (x.rank() != 2) throw DimensionError(std::string(what) + ": expected M x T, got " + nd::to_string(x.shape()));
}

// fs values are treated as rationals with millihertz resolution.
std::pair<std::size_t, std::size_t> rational_ratio(double fs_in, double fs_out) {
  const auto in = static_cast<std::size_t>(std::llround(fs_in * 1000.0));
  const auto out = static_cast<std::size_t>(std::llround(fs_out * 1000.0));
  const std::size_t g = std::gcd(in, out);
  return {out / g, in / g};
}

}  // namespace

nd::Tensor resample(const nd::Tensor& x, double fs_in, double fs_out) {
  require_matrix(x, "resample");
  if (!(fs_out > 0.0) || !(fs_in > 0.0)) throw ConfigError("resample: sampling rates must be positive");
  if (fs_in < fs_out) throw ConfigError("resample: upsampling is not supported");
  const auto [up, down] = rational_ratio(fs_in, fs_out);
  if (up == down) return x;

  const std::size_t rows = x.extent(0), length = x.extent(1);
  const std::size_t out_length = length * up / down;
  // Windowed-sinc prototype at the upsampled rate (Kaiser, beta 5).
  const std::size_t half = 10 * std::max(up, down);
  const std::size_t taps = 2 * half + 1;
  const double cutoff = 0.45 * fs_out / (fs_in * static_cast<double>(up));  // cycles per upsampled sample
  constexpr double beta = 5.0;
  const double norm = std::cyl_bessel_i(0.0, beta);
  std::vector<double> h(taps);
  for (std::size_t i = 0; i < taps; ++i) {
    const double n = static_cast<double>(i) - static_cast<double>(half);
    const double arg = 2.0 * cutoff * n;
    const double sinc = n == 0.0 ? 1.0 : std::sin(std::numbers::pi * arg) / (std::numbers::pi * arg);
    const double r = n / static_cast<double>(half);
    const double win = std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / norm;
    h[i] = 2.0 * cutoff * sinc * win * static_cast<double>(up);
  }

  nd::Tensor y(nd::Shape{rows, out_length});
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * length;
    double* yr = y.data() + r * out_length;
    for (std::size_t n = 0; n < out_length; ++n) {
      // Upsampled index of output n, centred on the filter.
      const std::ptrdiff_t centre = static_cast<std::ptrdiff_t>(n * down);
      double acc = 0.0;
      // Input sample j sits at upsampled index j * up; tap index = centre - j*up + half.
      const std::ptrdiff_t lo_idx = centre - static_cast<std::ptrdiff_t>(half);
      const std::ptrdiff_t hi_idx = centre + static_cast<std::ptrdiff_t>(half);
      const auto u = static_cast<std::ptrdiff_t>(up);
      std::ptrdiff_t j_lo = lo_idx <= 0 ? 0 : (lo_idx + u - 1) / u;
      std::ptrdiff_t j_hi = std::min<std::ptrdiff_t>(hi_idx / u, static_cast<std::ptrdiff_t>(length) - 1);
      for (std::ptrdiff_t j = j_lo; j <= j_hi; ++j) {
        acc += xr[j] * h[static_cast<std::size_t>(centre - j * u + static_cast<std::ptrdiff_t>(half))];
      }
      yr[n] = acc;
    }
  }
  return y;
}

nd::Tensor bandpass(const nd::Tensor& x, double low, double high, double fs) {
  require_matrix(x, "bandpass");
  if (!(low > 0.0 && low < high && high < fs / 2.0)) {
    throw ConfigError("bandpass: need 0 < low < high < fs/2 (got " + std::to_string(low) + ", " +
                      std::to_string(high) + ", fs " + std::to_string(fs) + ")");
  }
  std::vector<Biquad> sos = butterworth4(Kind::highpass, low, fs);
  const std::vector<Biquad> lp = butterworth4(Kind::lowpass, high, fs);
  sos.insert(sos.end(), lp.begin(), lp.end());
  const std::size_t rows = x.extent(0), length = x.extent(1);
  nd::Tensor y(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    filtfilt_row(sos, x.data() + r * length, length, y.data() + r * length);
  }
  return y;
}

nd::Tensor rereference_common_average(const nd::Tensor& x) {
  require_matrix(x, "rereference_common_average");
  const std::size_t rows = x.extent(0), length = x.extent(1);
  if (rows < 2) throw DimensionError("rereference_common_average: need at least 2 channels");
  nd::Tensor y = x;
  for (std::size_t t = 0; t < length; ++t) {
    double mean = 0.0;
    for (std::size_t r = 0; r < rows; ++r) mean += x.at(r, t);
    mean /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) y.at(r, t) -= mean;
  }
  return y;
}

}  // namespace daest::io
