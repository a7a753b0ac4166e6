#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "support.hpp"

#include "daest/error.hpp"
#include "daest/ndcore/ops.hpp"
#include "daest/ndcore/optim.hpp"
#include "daest/ndcore/snapshot.hpp"

using namespace daest;
using namespace daest::nd;
using daest::testing::max_abs_diff;
using daest::testing::random_tensor;

namespace {

Tensor run_conv(const Tensor& x, const Tensor& w, const ConvSpec& spec) {
  Tape tape;
  return conv_time(tape.constant(x), tape.constant(w), spec).value();
}

}  // namespace

TEST_CASE("conv_time hand-computed cross-correlation with zero padding") {
  const Tensor x(Shape{1, 5}, {1, 2, 3, 0, 0});
  const Tensor w(Shape{1, 1, 3}, {1, 0, -1});
  const Tensor y = run_conv(x, w, ConvSpec{3, 1, 1, Padding::same_zero});
  CHECK(y == Tensor(Shape{1, 5}, {-2, -2, 2, 3, 0}));
}

TEST_CASE("conv_time with centered identity kernel is the identity map") {
  std::mt19937_64 rng(7);
  const Tensor x = random_tensor({3, 40}, rng);
  Tensor w(Shape{3, 1, 3}, 0.0);
  for (std::size_t c = 0; c < 3; ++c) w.at(c, 0, 1) = 1.0;
  CHECK(run_conv(x, w, ConvSpec{3, 1, 3, Padding::same_zero}) == x);
}

TEST_CASE("conv_time even-length kernels put the extra padding zero at the head") {
  // taps 2: total pad 1 goes to the head, so y[t] = w0*x[t-1] + w1*x[t].
  const Tensor x(Shape{1, 4}, {1, 2, 3, 4});
  const Tensor w(Shape{1, 1, 2}, {10, 1});
  CHECK(run_conv(x, w, ConvSpec{2, 1, 1, Padding::same_zero}) ==
        Tensor(Shape{1, 4}, {1, 12, 23, 34}));
}

TEST_CASE("conv_time keeps the time length for every dilation used by the encoder") {
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor({2, 64}, rng);
  const Tensor w = random_tensor({4, 2, 3}, rng);
  for (std::size_t d : {1u, 3u, 6u, 12u}) {
    CHECK(run_conv(x, w, ConvSpec{3, d, 1, Padding::same_zero}).shape() == Shape{4, 64});
  }
}

TEST_CASE("conv_time is linear in both arguments") {
  std::mt19937_64 rng(11);
  const ConvSpec spec{5, 3, 2, Padding::same_zero};
  const Tensor x1 = random_tensor({4, 50}, rng), x2 = random_tensor({4, 50}, rng);
  const Tensor w1 = random_tensor({6, 2, 5}, rng), w2 = random_tensor({6, 2, 5}, rng);
  const double a = 0.7, b = -1.3;
  Tensor xm = x1, wm = w1;
  for (std::size_t i = 0; i < xm.size(); ++i) xm[i] = a * x1[i] + b * x2[i];
  for (std::size_t i = 0; i < wm.size(); ++i) wm[i] = a * w1[i] + b * w2[i];

  const Tensor lhs_x = run_conv(xm, w1, spec);
  const Tensor y1 = run_conv(x1, w1, spec), y2 = run_conv(x2, w1, spec);
  Tensor rhs_x = y1;
  for (std::size_t i = 0; i < rhs_x.size(); ++i) rhs_x[i] = a * y1[i] + b * y2[i];
  CHECK(max_abs_diff(lhs_x, rhs_x) < 1e-12);

  const Tensor lhs_w = run_conv(x1, wm, spec);
  const Tensor z2 = run_conv(x1, w2, spec);
  Tensor rhs_w = y1;
  for (std::size_t i = 0; i < rhs_w.size(); ++i) rhs_w[i] = a * y1[i] + b * z2[i];
  CHECK(max_abs_diff(lhs_w, rhs_w) < 1e-12);
}

TEST_CASE("conv_time rejects bad groups, weight shapes and oversize valid kernels") {
  Tape tape;
  Var x = tape.constant(Tensor(Shape{3, 10}));
  CHECK_THROWS_AS(conv_time(x, tape.constant(Tensor(Shape{4, 1, 3})), ConvSpec{3, 1, 2}),
                  DimensionError);
  CHECK_THROWS_AS(conv_time(x, tape.constant(Tensor(Shape{3, 2, 3})), ConvSpec{3, 1, 1}),
                  DimensionError);
  CHECK_THROWS_AS(
      conv_time(x, tape.constant(Tensor(Shape{1, 3, 4})), ConvSpec{4, 4, 1, Padding::none}),
      DimensionError);
}

TEST_CASE("valid conv shortens by the effective extent") {
  Tape tape;
  Var y = conv_time(tape.constant(Tensor(Shape{2, 41})), tape.constant(Tensor(Shape{4, 1, 3})),
                    ConvSpec{3, 1, 2, Padding::none});
  CHECK(y.shape() == Shape{4, 39});
}

TEST_CASE("filterbank applies every kernel to every channel") {
  Tape tape;
  Var y = filterbank(tape.constant(Tensor(Shape{32, 625})), tape.constant(Tensor(Shape{16, 1, 30})),
                     ConvSpec{30, 1, 1, Padding::same_zero});
  CHECK(y.shape() == Shape{16, 32, 625});

  std::mt19937_64 rng(5);
  const Tensor x = random_tensor({3, 20}, rng);
  const Tensor w = random_tensor({2, 1, 4}, rng);
  const Tensor fb = filterbank(tape.constant(x), tape.constant(w), ConvSpec{4}).value();
  for (std::size_t k = 0; k < 2; ++k) {
    for (std::size_t m = 0; m < 3; ++m) {
      const Tensor xm(Shape{1, 20}, std::vector<double>(x.row(m).begin(), x.row(m).end()));
      const Tensor wk(Shape{1, 1, 4}, std::vector<double>(w.row(k).begin(), w.row(k).end()));
      const Tensor single = run_conv(xm, wk, ConvSpec{4});
      for (std::size_t t = 0; t < 20; ++t) CHECK(fb.at(k, m, t) == single[t]);
    }
  }
}

TEST_CASE("moving_average edge windows average only in-bounds samples") {
  Tape tape;
  CHECK(moving_average(tape.constant(Tensor(Shape{1, 3}, {0, 6, 0})), 3, 1).value() ==
        Tensor(Shape{1, 3}, {3, 2, 3}));
  const Tensor c(Shape{2, 30}, 4.25);
  for (std::size_t w : {1u, 2u, 7u, 30u}) {
    CHECK(max_abs_diff(moving_average(tape.constant(c), w, 1).value(), c) < 1e-15);
  }
  CHECK(moving_average(tape.constant(Tensor(Shape{256, 625})), 7, 1).shape() == Shape{256, 625});
  std::mt19937_64 rng(2);
  const Tensor x = random_tensor({3, 17}, rng);
  CHECK(moving_average(tape.constant(x), 1, 1).value() == x);
  CHECK_THROWS_AS(moving_average(tape.constant(x), 18, 1), DimensionError);
}

TEST_CASE("moving_average with stride pools non-overlapping valid windows") {
  Tape tape;
  CHECK(moving_average(tape.constant(Tensor(Shape{256, 625})), 15, 15).shape() == Shape{256, 41});
  const Tensor x(Shape{1, 7}, {1, 2, 3, 4, 5, 6, 7});
  CHECK(moving_average(tape.constant(x), 3, 3).value() == Tensor(Shape{1, 2}, {2, 5}));
}

TEST_CASE("pointwise_mix") {
  std::mt19937_64 rng(9);
  Tape tape;
  const Tensor x = random_tensor({3, 4}, rng);
  Tensor eye(Shape{3, 3}, 0.0);
  for (std::size_t i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
  CHECK(pointwise_mix(tape.constant(x), tape.constant(eye)).value() == x);

  const Tensor avg(Shape{3, 3}, 1.0 / 3.0);
  const Tensor mixed = pointwise_mix(tape.constant(x), tape.constant(avg)).value();
  for (std::size_t t = 0; t < 4; ++t) {
    const double mean_t = (x.at(0, t) + x.at(1, t) + x.at(2, t)) / 3.0;
    for (std::size_t i = 0; i < 3; ++i) CHECK(mixed.at(i, t) == doctest::Approx(mean_t).epsilon(1e-14));
  }

  const Tensor beta = random_tensor({3, 3}, rng);
  const Tensor out = pointwise_mix(tape.constant(x), tape.constant(beta)).value();
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t t = 0; t < 4; ++t) {
      double expect = 0.0;
      for (std::size_t k = 0; k < 3; ++k) expect += beta.at(i, k) * x.at(k, t);
      CHECK(std::abs(out.at(i, t) - expect) < 1e-14);
    }
  }
  CHECK_THROWS_AS(pointwise_mix(tape.constant(x), tape.constant(Tensor(Shape{3, 2}))),
                  DimensionError);
}

TEST_CASE("activations") {
  Tape tape;
  CHECK(sigmoid(tape.constant(Tensor::scalar(0.0))).value().item() == 0.5);
  const Tensor sat = sigmoid(tape.constant(Tensor(Shape{2}, {30.0, -30.0}))).value();
  CHECK(std::isfinite(sat[0]));
  CHECK(sat[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(sat[1] > 0.0);
  CHECK(sat[1] < 1e-12);
  const Tensor sat_far = sigmoid(tape.constant(Tensor(Shape{2}, {800.0, -800.0}))).value();
  CHECK(sat_far[0] == 1.0);
  CHECK(sat_far[1] == 0.0);

  const Tensor equal_cols(Shape{5, 3}, 2.5);
  const Tensor sm = softmax_channels(tape.constant(equal_cols)).value();
  for (double v : sm.values()) CHECK(v == doctest::Approx(0.2).epsilon(1e-15));

  CHECK(relu(tape.constant(Tensor(Shape{3}, {-1, 0, 2}))).value() == Tensor(Shape{3}, {0, 0, 2}));
}

TEST_CASE("softmax_channels columns sum to one and ignore per-column shifts") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    Tape tape;
    const Tensor x = random_tensor({7, 11}, rng, -5, 5);
    Tensor shifted = x;
    std::uniform_real_distribution<double> u(-50, 50);
    for (std::size_t t = 0; t < 11; ++t) {
      const double c = u(rng);
      for (std::size_t k = 0; k < 7; ++k) shifted.at(k, t) += c;
    }
    const Tensor y = softmax_channels(tape.constant(x)).value();
    const Tensor ys = softmax_channels(tape.constant(shifted)).value();
    for (std::size_t t = 0; t < 11; ++t) {
      double s = 0.0;
      for (std::size_t k = 0; k < 7; ++k) s += y.at(k, t);
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
    CHECK(max_abs_diff(y, ys) < 1e-12);
  }
}

TEST_CASE("backward of a sum seeds all-ones adjoints") {
  std::mt19937_64 rng(1);
  Tape tape;
  Var x = tape.parameter(random_tensor({3, 4}, rng));
  tape.backward(sum(x));
  for (double g : tape.grad(x).values()) CHECK(g == 1.0);
}

TEST_CASE("backward through sigmoid matches the closed form") {
  Tape tape;
  const double w0 = 0.37, c = -2.5;
  Var w = tape.parameter(Tensor::scalar(w0));
  Var loss = scale(sigmoid(w), c);
  tape.backward(loss);
  const double s = 1.0 / (1.0 + std::exp(-w0));
  CHECK(tape.grad(w).item() == doctest::Approx(c * s * (1.0 - s)).epsilon(1e-14));
}

TEST_CASE("backward rejects non-scalar losses and seeds must match the output") {
  Tape tape;
  Var x = tape.parameter(Tensor(Shape{2, 2}, 1.0));
  CHECK_THROWS_AS(tape.backward(x), DimensionError);
  CHECK_THROWS_AS(tape.backward(x, Tensor(Shape{4}, 1.0)), DimensionError);
}

TEST_CASE("adjoints are all zeros right after a reset") {
  std::mt19937_64 rng(4);
  Tape tape;
  Var x = tape.parameter(random_tensor({2, 9}, rng));
  Var y = sum(sigmoid(moving_average(x, 3, 1)));
  tape.backward(y);
  CHECK(tape.grad(x).values()[0] != 0.0);
  tape.reset_adjoints();
  for (double g : tape.grad(x).values()) CHECK(g == 0.0);
  CHECK(tape.grad(x).shape() == x.shape());
}

TEST_CASE("ops refuse operands from different tapes") {
  Tape a, b;
  CHECK_THROWS(add(a.constant(Tensor(Shape{2})), b.constant(Tensor(Shape{2}))));
}

TEST_CASE("nt-xent style cross entropy excludes the diagonal") {
  Tape tape;
  // Four unit embeddings: (1,0),(1,0),(0,1),(0,1); partners 0<->1, 2<->3, tau 1.
  Var e = tape.parameter(Tensor(Shape{4, 2}, {1, 0, 1, 0, 0, 1, 0, 1}));
  const std::vector<std::size_t> partner{1, 0, 3, 2};
  Var loss = softmax_cross_entropy(cosine_similarity_matrix(e), partner, true);
  CHECK(loss.value().item() == doctest::Approx(-std::log(std::exp(1.0) / (std::exp(1.0) + 2.0))));
}

TEST_CASE("Adam with zero learning rate leaves parameters bit-identical") {
  std::mt19937_64 rng(8);
  Tensor p = random_tensor({5, 3}, rng);
  const Tensor before = p;
  std::vector<Tensor*> params{&p};
  Adam adam({0.0, 0.9, 0.999, 1e-8, 0.01}, std::vector<const Tensor*>{&p});
  for (int i = 0; i < 5; ++i) {
    std::vector<Tensor> grads{random_tensor({5, 3}, rng)};
    adam.step(params, grads);
  }
  CHECK(bit_equal(p, before));
}

TEST_CASE("Adam minimizes a quadratic and weight decay shrinks the optimum") {
  Tensor p(Shape{1}, {5.0});
  std::vector<Tensor*> params{&p};
  Adam adam({0.05}, std::vector<const Tensor*>{&p});
  for (int i = 0; i < 2000; ++i) {
    std::vector<Tensor> g{Tensor(Shape{1}, {2.0 * (p[0] - 1.0)})};
    adam.step(params, g);
  }
  CHECK(p[0] == doctest::Approx(1.0).epsilon(1e-3));

  Tensor q(Shape{1}, {5.0});
  std::vector<Tensor*> qs{&q};
  Adam decayed({0.05, 0.9, 0.999, 1e-8, 2.0}, std::vector<const Tensor*>{&q});
  for (int i = 0; i < 4000; ++i) {
    std::vector<Tensor> g{Tensor(Shape{1}, {2.0 * (q[0] - 1.0)})};
    decayed.step(qs, g);
  }
  // d/dq [(q-1)^2] + 2q = 0  ->  q = 0.5
  CHECK(q[0] == doctest::Approx(0.5).epsilon(1e-3));
}

TEST_CASE("snapshot round trip preserves bits; fp32 rounds") {
  std::mt19937_64 rng(12);
  const Tensor t = random_tensor({3, 2, 5}, rng);
  const Tensor back = decode_snapshot(encode_snapshot(t));
  CHECK(bit_equal(back, t));
  const std::string bytes = encode_snapshot(t);
  CHECK(bytes.substr(0, 4) == "NDC1");
  CHECK(bytes[4] == 2);
  const Tensor f = decode_snapshot(encode_snapshot(t, Dtype::f32));
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(f[i] == static_cast<double>(static_cast<float>(t[i])));
  CHECK_THROWS_AS(decode_snapshot(bytes.substr(0, bytes.size() - 1)), FormatError);
  CHECK_THROWS_AS(decode_snapshot("XXXX" + bytes.substr(4)), FormatError);
}

TEST_CASE("container detects corruption, truncation and version mismatch") {
  std::mt19937_64 rng(13);
  Container c{"{\"k\":1}", {{"a", random_tensor({4}, rng)}, {"b", random_tensor({2, 2}, rng)}}};
  const std::string bytes = encode_container(c);
  const Container back = decode_container(bytes);
  CHECK(back.header == c.header);
  CHECK(bit_equal(back.get("b"), c.sections[1].tensor));
  CHECK_THROWS_AS(back.get("missing"), FormatError);

  std::string corrupt = bytes;
  corrupt[corrupt.size() - 10] ^= 0x01;
  CHECK_THROWS_AS(decode_container(corrupt), FormatError);
  CHECK_THROWS_AS(decode_container(bytes.substr(0, bytes.size() - 3)), FormatError);
  std::string versioned = bytes;
  versioned[8] = 9;
  CHECK_THROWS_AS(decode_container(versioned), FormatError);
}
