#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "daest/ndcore/tape.hpp"

namespace daest::nd {

enum class Padding { same_zero, none };

/// Temporal convolution settings. Convolution here is cross-correlation
/// (no kernel flip). Same padding splits (taps-1)*dilation zeros between the
/// two ends, the odd zero going to the head.
struct ConvSpec {
  std::size_t kernel_extent_time = 1;
  std::size_t dilation = 1;
  std::size_t groups = 1;
  Padding padding = Padding::same_zero;

  std::size_t effective_extent() const { return (kernel_extent_time - 1) * dilation + 1; }
  std::size_t pad_head() const;
  std::size_t output_length(std::size_t input_length) const;
};

// Elementwise and reductions.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var sum(Var a);
/// Mean over `axis` of a rank-2 tensor; the reduced axis is dropped.
Var mean(Var a, std::size_t axis);
Var reshape(Var a, Shape shape);

/// Rows [begin, end) of the leading axis.
Var slice_rows(Var a, std::size_t begin, std::size_t end);
/// Concatenate along the leading axis; trailing extents must agree.
Var concat_rows(std::span<const Var> parts);

// Linear algebra.
Var matmul(Var a, Var b);
/// x (N x in) -> x * w^T + b with w (out x in) and b (out).
Var linear(Var x, Var w, Var b);

// Convolution-family ops on C x T arrays.
/// x: C_in x T, w: C_out x (C_in/groups) x L.
Var conv_time(Var x, Var w, const ConvSpec& spec);
/// Applies each of the K kernels (w: K x 1 x L) to every channel of x (M x T): K x M x T.
Var filterbank(Var x, Var w, const ConvSpec& spec);
/// stride 1: same-length moving average with in-bounds edge windows;
/// stride > 1: valid pooling of length (T - window) / stride + 1.
Var moving_average(Var x, std::size_t window, std::size_t stride);
/// Row means broadcast over time (global average pooling).
Var global_average(Var x);
/// out[i, t] = sum_k beta[i, k] * x[k, t]
Var pointwise_mix(Var x, Var beta);

// Activations.
Var sigmoid(Var x);
Var relu(Var x);
/// Softmax across the leading (channel) axis independently at every column.
Var softmax_channels(Var x);

// Similarity and losses.
Var l2_normalize_rows(Var x);
Var cosine_similarity_matrix(Var embeddings);
/// Mean over rows of -log softmax(logits[i])[targets[i]]. With
/// exclude_diagonal the i-th logit of row i is left out of the normalizer.
Var softmax_cross_entropy(Var logits, std::span<const std::size_t> targets,
                          bool exclude_diagonal = false);

}  // namespace daest::nd
