#pragma once

// Raw array kernels shared by the differentiable ops and the tape-free
// inference path. All loops are templated on the scalar type so the same
// arithmetic serves fp64 training and fp32 inference.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace daest::nd::kernels {

struct ConvPlan {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t groups = 1;
  std::size_t in_length = 0;
  std::size_t out_length = 0;
  std::size_t taps = 1;
  std::size_t dilation = 1;
  std::size_t pad_head = 0;

  std::size_t in_per_group() const { return in_channels / groups; }
  std::size_t out_per_group() const { return out_channels / groups; }
};

/// y[t] += w * x[t + shift] wherever 0 <= t + shift < nx.
template <class T>
inline void shifted_axpy(T w, const T* x, std::size_t nx, T* y, std::size_t ny,
                         std::ptrdiff_t shift) {
  const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -shift);
  const std::ptrdiff_t hi =
      std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(ny),
                               static_cast<std::ptrdiff_t>(nx) - shift);
  for (std::ptrdiff_t t = lo; t < hi; ++t) y[t] += w * x[t + shift];
}

/// sum_t a[t] * x[t + shift] over the same range as shifted_axpy.
template <class T>
inline T shifted_dot(const T* a, std::size_t na, const T* x, std::size_t nx,
                     std::ptrdiff_t shift) {
  const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -shift);
  const std::ptrdiff_t hi =
      std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(na),
                               static_cast<std::ptrdiff_t>(nx) - shift);
  T acc = 0;
  for (std::ptrdiff_t t = lo; t < hi; ++t) acc += a[t] * x[t + shift];
  return acc;
}

inline std::ptrdiff_t tap_shift(const ConvPlan& p, std::size_t l) {
  return static_cast<std::ptrdiff_t>(l * p.dilation) - static_cast<std::ptrdiff_t>(p.pad_head);
}

/// Grouped, dilated cross-correlation. x: C_in x T_in, w: C_out x (C_in/groups) x L,
/// y: C_out x T_out (overwritten).
template <class T>
void conv_forward(const T* x, const T* w, T* y, const ConvPlan& p) {
  std::fill(y, y + p.out_channels * p.out_length, T(0));
  const std::size_t cin = p.in_per_group();
  const std::size_t cout = p.out_per_group();
  for (std::size_t c = 0; c < p.out_channels; ++c) {
    const std::size_t g = c / cout;
    T* yc = y + c * p.out_length;
    for (std::size_t j = 0; j < cin; ++j) {
      const T* xr = x + (g * cin + j) * p.in_length;
      const T* wr = w + (c * cin + j) * p.taps;
      for (std::size_t l = 0; l < p.taps; ++l) {
        shifted_axpy(wr[l], xr, p.in_length, yc, p.out_length, tap_shift(p, l));
      }
    }
  }
}

/// gx += d(conv)/dx^T gy
template <class T>
void conv_backward_input(const T* gy, const T* w, T* gx, const ConvPlan& p) {
  const std::size_t cin = p.in_per_group();
  const std::size_t cout = p.out_per_group();
  for (std::size_t c = 0; c < p.out_channels; ++c) {
    const std::size_t g = c / cout;
    const T* gyc = gy + c * p.out_length;
    for (std::size_t j = 0; j < cin; ++j) {
      T* gxr = gx + (g * cin + j) * p.in_length;
      const T* wr = w + (c * cin + j) * p.taps;
      for (std::size_t l = 0; l < p.taps; ++l) {
        shifted_axpy(wr[l], gyc, p.out_length, gxr, p.in_length, -tap_shift(p, l));
      }
    }
  }
}

/// gw += d(conv)/dw^T gy
template <class T>
void conv_backward_weight(const T* gy, const T* x, T* gw, const ConvPlan& p) {
  const std::size_t cin = p.in_per_group();
  const std::size_t cout = p.out_per_group();
  for (std::size_t c = 0; c < p.out_channels; ++c) {
    const std::size_t g = c / cout;
    const T* gyc = gy + c * p.out_length;
    for (std::size_t j = 0; j < cin; ++j) {
      const T* xr = x + (g * cin + j) * p.in_length;
      T* gwr = gw + (c * cin + j) * p.taps;
      for (std::size_t l = 0; l < p.taps; ++l) {
        gwr[l] += shifted_dot(gyc, p.out_length, xr, p.in_length, tap_shift(p, l));
      }
    }
  }
}

/// Temporal filterbank: every kernel applied to every channel.
/// x: M x T, w: K x L, y: K x M x T (same-padded, overwritten).
template <class T>
void filterbank_forward(const T* x, std::size_t channels, std::size_t length, const T* w,
                        std::size_t kernels, std::size_t taps, std::size_t pad_head, T* y) {
  std::fill(y, y + kernels * channels * length, T(0));
  for (std::size_t k = 0; k < kernels; ++k) {
    for (std::size_t m = 0; m < channels; ++m) {
      T* yr = y + (k * channels + m) * length;
      const T* xr = x + m * length;
      for (std::size_t l = 0; l < taps; ++l) {
        const auto shift = static_cast<std::ptrdiff_t>(l) - static_cast<std::ptrdiff_t>(pad_head);
        shifted_axpy(w[k * taps + l], xr, length, yr, length, shift);
      }
    }
  }
}

/// Moving average with shrinking in-bounds edge windows (stride 1, same length).
/// The window covers [t - window/2, t + (window-1)/2].
template <class T>
void moving_average_same(const T* x, std::size_t rows, std::size_t length, std::size_t window,
                         T* y) {
  if (window == 1) {
    std::copy(x, x + rows * length, y);
    return;
  }
  const std::size_t head = window / 2;
  const std::size_t tail = (window - 1) / 2;
  std::vector<double> prefix(length + 1);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x + r * length;
    prefix[0] = 0.0;
    for (std::size_t t = 0; t < length; ++t) prefix[t + 1] = prefix[t] + static_cast<double>(xr[t]);
    T* yr = y + r * length;
    for (std::size_t t = 0; t < length; ++t) {
      const std::size_t lo = t >= head ? t - head : 0;
      const std::size_t hi = std::min(length, t + tail + 1);
      yr[t] = static_cast<T>((prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo));
    }
  }
}

template <class T>
void moving_average_same_backward(const T* gy, std::size_t rows, std::size_t length,
                                  std::size_t window, T* gx) {
  const std::size_t head = window / 2;
  const std::size_t tail = (window - 1) / 2;
  std::vector<double> diff(length + 1);
  for (std::size_t r = 0; r < rows; ++r) {
    std::fill(diff.begin(), diff.end(), 0.0);
    const T* gyr = gy + r * length;
    for (std::size_t t = 0; t < length; ++t) {
      const std::size_t lo = t >= head ? t - head : 0;
      const std::size_t hi = std::min(length, t + tail + 1);
      const double share = static_cast<double>(gyr[t]) / static_cast<double>(hi - lo);
      diff[lo] += share;
      diff[hi] -= share;
    }
    double run = 0.0;
    T* gxr = gx + r * length;
    for (std::size_t t = 0; t < length; ++t) {
      run += diff[t];
      gxr[t] += static_cast<T>(run);
    }
  }
}

/// Non-overlapping (valid) average pooling: out length (length - window) / stride + 1.
template <class T>
void pool_valid(const T* x, std::size_t rows, std::size_t length, std::size_t window,
                std::size_t stride, std::size_t out_length, T* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < out_length; ++i) {
      T acc = 0;
      const T* xs = x + r * length + i * stride;
      for (std::size_t j = 0; j < window; ++j) acc += xs[j];
      y[r * out_length + i] = acc / static_cast<T>(window);
    }
  }
}

template <class T>
void pool_valid_backward(const T* gy, std::size_t rows, std::size_t length, std::size_t window,
                         std::size_t stride, std::size_t out_length, T* gx) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < out_length; ++i) {
      const T share = gy[r * out_length + i] / static_cast<T>(window);
      T* gs = gx + r * length + i * stride;
      for (std::size_t j = 0; j < window; ++j) gs[j] += share;
    }
  }
}

/// Row means broadcast back over the row (global average pooling).
template <class T>
void row_mean_broadcast(const T* x, std::size_t rows, std::size_t length, T* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    T acc = 0;
    for (std::size_t t = 0; t < length; ++t) acc += x[r * length + t];
    const T mean = acc / static_cast<T>(length);
    std::fill(y + r * length, y + (r + 1) * length, mean);
  }
}

template <class T>
inline T sigmoid(T v) {
  if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
  const T e = std::exp(v);
  return e / (T(1) + e);
}

/// Column-wise softmax of a rows x cols array (normalizes across rows at each column).
template <class T>
void softmax_columns(const T* x, std::size_t rows, std::size_t cols, T* y) {
  for (std::size_t c = 0; c < cols; ++c) {
    T mx = x[c];
    for (std::size_t r = 1; r < rows; ++r) mx = std::max(mx, x[r * cols + c]);
    T total = 0;
    for (std::size_t r = 0; r < rows; ++r) {
      const T e = std::exp(x[r * cols + c] - mx);
      y[r * cols + c] = e;
      total += e;
    }
    for (std::size_t r = 0; r < rows; ++r) y[r * cols + c] /= total;
  }
}

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// c (m x n) = op(a) * op(b), optionally accumulating into c. Operands are row-major.
template <class T>
void gemm(const T* a, std::size_t a_rows, std::size_t a_cols, bool trans_a, const T* b,
          std::size_t b_rows, std::size_t b_cols, bool trans_b, T* c, bool accumulate) {
  using Map = Eigen::Map<const RowMatrix<T>>;
  const Map am(a, static_cast<Eigen::Index>(a_rows), static_cast<Eigen::Index>(a_cols));
  const Map bm(b, static_cast<Eigen::Index>(b_rows), static_cast<Eigen::Index>(b_cols));
  const std::size_t m = trans_a ? a_cols : a_rows;
  const std::size_t n = trans_b ? b_rows : b_cols;
  Eigen::Map<RowMatrix<T>> cm(c, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  if (!accumulate) cm.setZero();
  if (trans_a && trans_b) {
    cm.noalias() += am.transpose() * bm.transpose();
  } else if (trans_a) {
    cm.noalias() += am.transpose() * bm;
  } else if (trans_b) {
    cm.noalias() += am * bm.transpose();
  } else {
    cm.noalias() += am * bm;
  }
}

}  // namespace daest::nd::kernels
