#pragma once

#include "daest/ndcore/tensor.hpp"

namespace daest::io {

/// Rational polyphase downsampling of every row of an M x T array.
/// Anti-alias lowpass cutoff sits at 0.45 * fs_out; output length is
/// floor(T * fs_out / fs_in). Upsampling is rejected.
nd::Tensor resample(const nd::Tensor& x, double fs_in, double fs_out = 125.0);

/// Zero-phase Butterworth bandpass (order-4 highpass then order-4 lowpass,
/// run forward and backward) applied to every row.
nd::Tensor bandpass(const nd::Tensor& x, double low, double high, double fs);

/// Subtracts the per-sample channel mean.
nd::Tensor rereference_common_average(const nd::Tensor& x);

}  // namespace daest::io
