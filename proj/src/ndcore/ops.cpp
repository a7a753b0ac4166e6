#include "daest/ndcore/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "daest/error.hpp"
#include "daest/ndcore/kernels.hpp"

namespace daest::nd {

namespace {

Tape& same_tape(Var a, Var b) {
  if (!a.valid() || a.tape() != b.tape()) throw Error("ops: operands live on different tapes");
  return *a.tape();
}

void require_same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

void require_rank(const char* op, Var a, std::size_t rank) {
  if (a.value().rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         to_string(a.shape()));
  }
}

template <class F>
Var unary(Var a, Tensor out, F&& backward) {
  return a.tape()->record(std::move(out), {a}, std::forward<F>(backward));
}

}  // namespace

std::size_t ConvSpec::pad_head() const {
  if (padding == Padding::none) return 0;
  const std::size_t total = effective_extent() - 1;
  return total - total / 2;
}

std::size_t ConvSpec::output_length(std::size_t input_length) const {
  if (padding == Padding::same_zero) return input_length;
  return input_length + 1 - effective_extent();
}

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  Tape& t = same_tape(a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return t.record(std::move(out), {a, b}, [ia = a.id(), ib = b.id()](Tape& tp, std::size_t self) {
    const Tensor& g = tp.adjoint(self);
    for (std::size_t id : {ia, ib}) {
      if (!tp.needs_grad(id)) continue;
      Tensor& acc = tp.accumulator(id);
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  Tape& t = same_tape(a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return t.record(std::move(out), {a, b}, [ia = a.id(), ib = b.id()](Tape& tp, std::size_t self) {
    const Tensor& g = tp.adjoint(self);
    if (tp.needs_grad(ia)) {
      Tensor& acc = tp.accumulator(ia);
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
    }
    if (tp.needs_grad(ib)) {
      Tensor& acc = tp.accumulator(ib);
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  Tape& t = same_tape(a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return t.record(std::move(out), {a, b}, [ia = a.id(), ib = b.id()](Tape& tp, std::size_t self) {
    const Tensor& g = tp.adjoint(self);
    if (tp.needs_grad(ia)) {
      const Tensor& bv = tp.value(ib);
      Tensor& acc = tp.accumulator(ia);
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * bv[i];
    }
    if (tp.needs_grad(ib)) {
      const Tensor& av = tp.value(ia);
      Tensor& acc = tp.accumulator(ib);
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= factor;
  return unary(a, std::move(out), [ia = a.id(), factor](Tape& tp, std::size_t self) {
    const Tensor& g = tp.adjoint(self);
    Tensor& acc = tp.accumulator(ia);
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += factor * g[i];
  });
}

Var sum(Var a) {
  double total = 0.0;
  for (double v : a.value().values()) total += v;
  return unary(a, Tensor::scalar(total), [ia = a.id()](Tape& tp, std::size_t self) {
    const double g = tp.adjoint(self)[0];
    for (double& v : tp.accumulator(ia).values()) v += g;
  });
}

Var mean(Var a, std::size_t axis) {
  require_rank("mean", a, 2);
  if (axis > 1) throw DimensionError("mean: axis must be 0 or 1");
  const std::size_t rows = a.shape()[0];
  const std::size_t cols = a.shape()[1];
  const Tensor& x = a.value();
  Tensor out(Shape{axis == 0 ? cols : rows}, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[axis == 0 ? c : r] += x.at(r, c);
  }
  const double n = static_cast<double>(axis == 0 ? rows : cols);
  for (double& v : out.values()) v /= n;
  return unary(a, std::move(out), [ia = a.id(), axis, rows, cols, n](Tape& tp, std::size_t self) {
    const Tensor& g = tp.adjoint(self);
    Tensor& acc = tp.accumulator(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) acc.at(r, c) += g[axis == 0 ? c : r] / n;
    }
  });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return unary(a, std::move(out), [ia = a.id()](Tape& tp, std::size_t self) {
    const Tensor& g = tp.adjoint(self);
    Tensor& acc = tp.accumulator(ia);
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  const Tensor& x = a.value();
  if (x.rank() == 0 || begin > end || end > x.shape()[0]) {
    throw DimensionError("slice_rows: range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") invalid for " + to_string(x.shape()));
  }
  const std::size_t stride = x.shape()[0] ? x.size() / x.shape()[0] : 0;
  Shape shape = x.shape();
  shape[0] = end - begin;
  std::vector<double> vals(x.values().begin() + static_cast<std::ptrdiff_t>(begin * stride),
                           x.values().begin() + static_cast<std::ptrdiff_t>(end * stride));
  return unary(a, Tensor(std::move(shape), std::move(vals)),
               [ia = a.id(), offset = begin * stride](Tape& tp, std::size_t self) {
                 const Tensor& g = tp.adjoint(self);
                 Tensor& acc = tp.accumulator(ia);
                 for (std::size_t i = 0; i < g.size(); ++i) acc[offset + i] += g[i];
               });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: nothing to concatenate");
  Tape* tape = parts[0].tape();
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t rows = 0;
  std::vector<double> vals;
  std::vector<Var> parents;
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    if (p.tape() != tape) throw Error("concat_rows: operands live on different tapes");
    const Shape& s = p.shape();
    if (s.empty() || !std::equal(s.begin() + 1, s.end(), tail.begin(), tail.end())) {
      throw DimensionError("concat_rows: incompatible part shape " + to_string(s));
    }
    offsets.push_back(vals.size());
    rows += s[0];
    vals.insert(vals.end(), p.value().values().begin(), p.value().values().end());
    parents.push_back(p);
  }
  Shape shape{rows};
  shape.insert(shape.end(), tail.begin(), tail.end());
  std::vector<std::size_t> ids;
  for (const Var& p : parts) ids.push_back(p.id());
  return tape->record(Tensor(std::move(shape), std::move(vals)), parents,
                      [ids, offsets](Tape& tp, std::size_t self) {
                        const Tensor& g = tp.adjoint(self);
                        for (std::size_t k = 0; k < ids.size(); ++k) {
                          if (!tp.needs_grad(ids[k])) continue;
                          Tensor& acc = tp.accumulator(ids[k]);
                          for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[offsets[k] + i];
                        }
                      });
}

Var matmul(Var a, Var b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul: inner extents differ " + to_string(a.shape()) + " * " +
                         to_string(b.shape()));
  }
  Tape& t = same_tape(a, b);
  Tensor out(Shape{m, n});
  kernels::gemm(a.value().data(), m, k, false, b.value().data(), k, n, false, out.data(), false);
  return t.record(std::move(out), {a, b},
                  [ia = a.id(), ib = b.id(), m, k, n](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.adjoint(self);
                    if (tp.needs_grad(ia)) {
                      kernels::gemm(g.data(), m, n, false, tp.value(ib).data(), k, n, true,
                                    tp.accumulator(ia).data(), true);
                    }
                    if (tp.needs_grad(ib)) {
                      kernels::gemm(tp.value(ia).data(), m, k, true, g.data(), m, n, false,
                                    tp.accumulator(ib).data(), true);
                    }
                  });
}

Var linear(Var x, Var w, Var b) {
  require_rank("linear", x, 2);
  require_rank("linear", w, 2);
  require_rank("linear", b, 1);
  const std::size_t rows = x.shape()[0], in = x.shape()[1], out_dim = w.shape()[0];
  if (w.shape()[1] != in || b.shape()[0] != out_dim) {
    throw DimensionError("linear: x " + to_string(x.shape()) + ", w " + to_string(w.shape()) +
                         ", b " + to_string(b.shape()));
  }
  Tape& t = same_tape(x, w);
  same_tape(w, b);
  Tensor out(Shape{rows, out_dim});
  kernels::gemm(x.value().data(), rows, in, false, w.value().data(), out_dim, in, true,
                out.data(), false);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < out_dim; ++c) out.at(r, c) += b.value()[c];
  }
  return t.record(
      std::move(out), {x, w, b},
      [ix = x.id(), iw = w.id(), ib = b.id(), rows, in, out_dim](Tape& tp, std::size_t self) {
        const Tensor& g = tp.adjoint(self);
        if (tp.needs_grad(ix)) {
          kernels::gemm(g.data(), rows, out_dim, false, tp.value(iw).data(), out_dim, in, false,
                        tp.accumulator(ix).data(), true);
        }
        if (tp.needs_grad(iw)) {
          kernels::gemm(g.data(), rows, out_dim, true, tp.value(ix).data(), rows, in, false,
                        tp.accumulator(iw).data(), true);
        }
        if (tp.needs_grad(ib)) {
          Tensor& gb = tp.accumulator(ib);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < out_dim; ++c) gb[c] += g.at(r, c);
          }
        }
      });
}

Var conv_time(Var x, Var w, const ConvSpec& spec) {
  require_rank("conv_time", x, 2);
  require_rank("conv_time", w, 3);
  if (spec.kernel_extent_time < 1 || spec.dilation < 1 || spec.groups < 1) {
    throw DimensionError("conv_time: kernel extent, dilation and groups must be >= 1");
  }
  kernels::ConvPlan plan;
  plan.in_channels = x.shape()[0];
  plan.in_length = x.shape()[1];
  plan.out_channels = w.shape()[0];
  plan.groups = spec.groups;
  plan.taps = spec.kernel_extent_time;
  plan.dilation = spec.dilation;
  if (plan.in_channels % plan.groups != 0 || plan.out_channels % plan.groups != 0) {
    throw DimensionError("conv_time: groups " + std::to_string(plan.groups) +
                         " must divide input channels " + std::to_string(plan.in_channels) +
                         " and output channels " + std::to_string(plan.out_channels));
  }
  if (w.shape()[1] != plan.in_per_group() || w.shape()[2] != plan.taps) {
    throw DimensionError("conv_time: weight shape " + to_string(w.shape()) + " expected [" +
                         std::to_string(plan.out_channels) + "x" +
                         std::to_string(plan.in_per_group()) + "x" + std::to_string(plan.taps) +
                         "]");
  }
  const std::size_t pad_total =
      spec.padding == Padding::same_zero ? spec.effective_extent() - 1 : 0;
  if (spec.effective_extent() > plan.in_length + pad_total) {
    throw DimensionError("conv_time: effective kernel extent " +
                         std::to_string(spec.effective_extent()) + " exceeds padded length " +
                         std::to_string(plan.in_length + pad_total));
  }
  plan.pad_head = spec.pad_head();
  plan.out_length = spec.output_length(plan.in_length);
  Tape& t = same_tape(x, w);
  Tensor out(Shape{plan.out_channels, plan.out_length});
  kernels::conv_forward(x.value().data(), w.value().data(), out.data(), plan);
  return t.record(std::move(out), {x, w}, [ix = x.id(), iw = w.id(), plan](Tape& tp, std::size_t self) {
    const Tensor& g = tp.adjoint(self);
    if (tp.needs_grad(ix)) {
      kernels::conv_backward_input(g.data(), tp.value(iw).data(), tp.accumulator(ix).data(), plan);
    }
    if (tp.needs_grad(iw)) {
      kernels::conv_backward_weight(g.data(), tp.value(ix).data(), tp.accumulator(iw).data(), plan);
    }
  });
}

Var filterbank(Var x, Var w, const ConvSpec& spec) {
  require_rank("filterbank", x, 2);
  require_rank("filterbank", w, 3);
  if (spec.padding != Padding::same_zero || spec.dilation != 1 || spec.groups != 1) {
    throw DimensionError("filterbank: only undilated same-padded kernels are supported");
  }
  const std::size_t channels = x.shape()[0], length = x.shape()[1];
  const std::size_t kernels_n = w.shape()[0], taps = w.shape()[2];
  if (w.shape()[1] != 1 || taps != spec.kernel_extent_time || taps < 1) {
    throw DimensionError("filterbank: weight shape " + to_string(w.shape()) +
                         " must be K x 1 x " + std::to_string(spec.kernel_extent_time));
  }
  if (length == 0) throw DimensionError("filterbank: empty input");
  const std::size_t pad = spec.pad_head();
  Tape& t = same_tape(x, w);
  Tensor out(Shape{kernels_n, channels, length});
  kernels::filterbank_forward(x.value().data(), channels, length, w.value().data(), kernels_n, taps,
                              pad, out.data());
  return t.record(std::move(out), {x, w},
                  [ix = x.id(), iw = w.id(), channels, length, kernels_n, taps, pad](
                      Tape& tp, std::size_t self) {
                    const Tensor& g = tp.adjoint(self);
                    const bool gx_needed = tp.needs_grad(ix);
                    const bool gw_needed = tp.needs_grad(iw);
                    const double* wv = tp.value(iw).data();
                    const double* xv = tp.value(ix).data();
                    double* gx = gx_needed ? tp.accumulator(ix).data() : nullptr;
                    double* gw = gw_needed ? tp.accumulator(iw).data() : nullptr;
                    for (std::size_t k = 0; k < kernels_n; ++k) {
                      for (std::size_t m = 0; m < channels; ++m) {
                        const double* gr = g.data() + (k * channels + m) * length;
                        for (std::size_t l = 0; l < taps; ++l) {
                          const auto shift = static_cast<std::ptrdiff_t>(l) -
                                             static_cast<std::ptrdiff_t>(pad);
                          if (gx_needed) {
                            kernels::shifted_axpy(wv[k * taps + l], gr, length, gx + m * length,
                                                  length, -shift);
                          }
                          if (gw_needed) {
                            gw[k * taps + l] +=
                                kernels::shifted_dot(gr, length, xv + m * length, length, shift);
                          }
                        }
                      }
                    }
                  });
}

Var moving_average(Var x, std::size_t window, std::size_t stride) {
  require_rank("moving_average", x, 2);
  const std::size_t rows = x.shape()[0], length = x.shape()[1];
  if (window < 1 || stride < 1) throw DimensionError("moving_average: window and stride must be >= 1");
  if (window > length) {
    throw DimensionError("moving_average: window " + std::to_string(window) +
                         " longer than series " + std::to_string(length));
  }
  if (stride == 1) {
    Tensor out(Shape{rows, length});
    kernels::moving_average_same(x.value().data(), rows, length, window, out.data());
    return unary(x, std::move(out), [ix = x.id(), rows, length, window](Tape& tp, std::size_t self) {
      kernels::moving_average_same_backward(tp.adjoint(self).data(), rows, length, window,
                                            tp.accumulator(ix).data());
    });
  }
  const std::size_t out_len = (length - window) / stride + 1;
  Tensor out(Shape{rows, out_len});
  kernels::pool_valid(x.value().data(), rows, length, window, stride, out_len, out.data());
  return unary(x, std::move(out),
               [ix = x.id(), rows, length, window, stride, out_len](Tape& tp, std::size_t self) {
                 kernels::pool_valid_backward(tp.adjoint(self).data(), rows, length, window,
                                              stride, out_len, tp.accumulator(ix).data());
               });
}

Var global_average(Var x) {
  require_rank("global_average", x, 2);
  const std::size_t rows = x.shape()[0], length = x.shape()[1];
  if (length == 0) throw DimensionError("global_average: empty series");
  Tensor out(Shape{rows, length});
  kernels::row_mean_broadcast(x.value().data(), rows, length, out.data());
  return unary(x, std::move(out), [ix = x.id(), rows, length](Tape& tp, std::size_t self) {
    const Tensor& g = tp.adjoint(self);
    Tensor& acc = tp.accumulator(ix);
    for (std::size_t r = 0; r < rows; ++r) {
      double total = 0.0;
      for (std::size_t t = 0; t < length; ++t) total += g.at(r, t);
      const double share = total / static_cast<double>(length);
      for (std::size_t t = 0; t < length; ++t) acc.at(r, t) += share;
    }
  });
}

Var pointwise_mix(Var x, Var beta) {
  require_rank("pointwise_mix", x, 2);
  require_rank("pointwise_mix", beta, 2);
  if (beta.shape()[1] != x.shape()[0]) {
    throw DimensionError("pointwise_mix: beta " + to_string(beta.shape()) +
                         " cannot mix channels of " + to_string(x.shape()));
  }
  return matmul(beta, x);
}

Var sigmoid(Var x) {
  Tensor out = x.value();
  for (double& v : out.values()) v = kernels::sigmoid(v);
  return unary(x, std::move(out), [ix = x.id()](Tape& tp, std::size_t self) {
    const Tensor& g = tp.adjoint(self);
    const Tensor& y = tp.value(self);
    Tensor& acc = tp.accumulator(ix);
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var relu(Var x) {
  Tensor out = x.value();
  std::uint64_t mask = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] > 0.0) {
      mask = (mask ^ (i + 1)) * 1099511628211ULL;
    } else {
      out[i] = 0.0;
    }
  }
  x.tape()->note_branch(mask);
  return unary(x, std::move(out), [ix = x.id()](Tape& tp, std::size_t self) {
    const Tensor& g = tp.adjoint(self);
    const Tensor& xv = tp.value(ix);
    Tensor& acc = tp.accumulator(ix);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i] > 0.0) acc[i] += g[i];
    }
  });
}

Var softmax_channels(Var x) {
  require_rank("softmax_channels", x, 2);
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  Tensor out(x.shape());
  kernels::softmax_columns(x.value().data(), rows, cols, out.data());
  return unary(x, std::move(out), [ix = x.id(), rows, cols](Tape& tp, std::size_t self) {
    const Tensor& g = tp.adjoint(self);
    const Tensor& y = tp.value(self);
    Tensor& acc = tp.accumulator(ix);
    for (std::size_t c = 0; c < cols; ++c) {
      double dot = 0.0;
      for (std::size_t r = 0; r < rows; ++r) dot += g.at(r, c) * y.at(r, c);
      for (std::size_t r = 0; r < rows; ++r) acc.at(r, c) += y.at(r, c) * (g.at(r, c) - dot);
    }
  });
}

Var l2_normalize_rows(Var x) {
  require_rank("l2_normalize_rows", x, 2);
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  Tensor out = x.value();
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double ss = 0.0;
    for (std::size_t c = 0; c < cols; ++c) ss += out.at(r, c) * out.at(r, c);
    norms[r] = std::max(std::sqrt(ss), 1e-12);
    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) /= norms[r];
  }
  return unary(x, std::move(out), [ix = x.id(), rows, cols, norms](Tape& tp, std::size_t self) {
    const Tensor& g = tp.adjoint(self);
    const Tensor& y = tp.value(self);
    Tensor& acc = tp.accumulator(ix);
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += g.at(r, c) * y.at(r, c);
      for (std::size_t c = 0; c < cols; ++c) {
        acc.at(r, c) += (g.at(r, c) - y.at(r, c) * dot) / norms[r];
      }
    }
  });
}

Var cosine_similarity_matrix(Var embeddings) {
  Var z = l2_normalize_rows(embeddings);
  const std::size_t rows = z.shape()[0], cols = z.shape()[1];
  Tensor out(Shape{rows, rows});
  kernels::gemm(z.value().data(), rows, cols, false, z.value().data(), rows, cols, true,
                out.data(), false);
  return unary(z, std::move(out), [iz = z.id(), rows, cols](Tape& tp, std::size_t self) {
    const Tensor& g = tp.adjoint(self);
    Tensor sym(Shape{rows, rows});
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < rows; ++j) sym.at(i, j) = g.at(i, j) + g.at(j, i);
    }
    kernels::gemm(sym.data(), rows, rows, false, tp.value(iz).data(), rows, cols, false,
                  tp.accumulator(iz).data(), true);
  });
}

Var softmax_cross_entropy(Var logits, std::span<const std::size_t> targets, bool exclude_diagonal) {
  require_rank("softmax_cross_entropy", logits, 2);
  const std::size_t rows = logits.shape()[0], cols = logits.shape()[1];
  if (targets.size() != rows) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(rows) + " rows");
  }
  if (exclude_diagonal && rows != cols) {
    throw DimensionError("softmax_cross_entropy: diagonal exclusion needs a square logit matrix");
  }
  const Tensor& l = logits.value();
  Tensor probs(Shape{rows, cols}, 0.0);
  double loss = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    if (targets[i] >= cols || (exclude_diagonal && targets[i] == i)) {
      throw DimensionError("softmax_cross_entropy: invalid target " + std::to_string(targets[i]) +
                           " for row " + std::to_string(i));
    }
    double mx = -INFINITY;
    for (std::size_t j = 0; j < cols; ++j) {
      if (exclude_diagonal && j == i) continue;
      mx = std::max(mx, l.at(i, j));
    }
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      if (exclude_diagonal && j == i) continue;
      probs.at(i, j) = std::exp(l.at(i, j) - mx);
      total += probs.at(i, j);
    }
    for (std::size_t j = 0; j < cols; ++j) probs.at(i, j) /= total;
    loss += mx + std::log(total) - l.at(i, targets[i]);
  }
  loss /= static_cast<double>(rows);
  std::vector<std::size_t> tg(targets.begin(), targets.end());
  return unary(logits, Tensor::scalar(loss),
               [il = logits.id(), probs = std::move(probs), tg, rows, cols](Tape& tp,
                                                                             std::size_t self) {
                 const double g = tp.adjoint(self)[0] / static_cast<double>(rows);
                 Tensor& acc = tp.accumulator(il);
                 for (std::size_t i = 0; i < rows; ++i) {
                   for (std::size_t j = 0; j < cols; ++j) acc.at(i, j) += g * probs.at(i, j);
                   acc.at(i, tg[i]) -= g;
                 }
               });
}

}  // namespace daest::nd
