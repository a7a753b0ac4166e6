#include <cmath>
#include <random>

#include "doctest.h"
#include "support.hpp"

#include "daest/encoder/encoder.hpp"
#include "daest/error.hpp"
#include "daest/ndcore/gradcheck.hpp"
#include "daest/ndcore/ops.hpp"

using namespace daest;
using namespace daest::encoder;
using nd::Shape;
using nd::Tape;
using nd::Tensor;
using nd::Var;
using testing::max_abs_diff;
using testing::random_tensor;

namespace {

Geometry toy_geometry(Activation a = Activation::sigmoid) {
  Geometry g;
  g.M = 4;
  g.T = 64;
  g.K1 = 2;
  g.L1 = 5;
  g.K2 = 2;
  g.L2 = 3;
  g.dilations = {{1, 2}, {3, 2}};
  g.L3 = 5;
  g.activation = a;
  return g;
}

EncoderOutput run(Tape& tape, const Tensor& x, const EncoderParams& p, const Geometry& g,
                  ForwardOptions o = {}) {
  return encoder_forward(tape.constant(x), bind(tape, p, false), g, o);
}

}  // namespace

TEST_CASE("FACED geometry shapes and parameter count") {
  const Geometry g = Geometry::faced();
  CHECK(g.K() == 256);
  CHECK_NOTHROW(g.validate());
  const EncoderParams p = EncoderParams::init(g, 1);
  CHECK(p.parameter_count() == 480 + 24576 + 1792 + 65536);
  CHECK(encoder_parameter_count(g) == p.parameter_count());
  std::mt19937_64 rng(2);
  const Tensor x = random_tensor({32, 625}, rng);
  Tape tape;
  const EncoderOutput out = run(tape, x, p, g);
  CHECK(out.latent.shape() == Shape{256, 625});
  CHECK(out.attention.shape() == Shape{256, 625});
  CHECK(out.output.shape() == Shape{256, 625});
}

TEST_CASE("SEED geometry keeps 30 s windows at full length") {
  Geometry g = Geometry::faced();
  g.M = 62;
  g.T = 30 * 125;
  std::mt19937_64 rng(3);
  const Tensor y = encode(random_tensor({62, 3750}, rng), EncoderParams::init(g, 4), g);
  CHECK(y.shape() == Shape{256, 3750});
}

TEST_CASE("geometry validation") {
  Geometry g = toy_geometry();
  g.dilations = {{1, 3}, {3, 1}};
  CHECK_THROWS_AS(g.validate(), ConfigError);
  g.dilations = {{1, 2}};
  CHECK_THROWS_AS(g.validate(), ConfigError);
  CHECK_THROWS_AS(activation_from_string("tanh"), ConfigError);
  CHECK(activation_from_string("global") == Activation::global);
  CHECK(Geometry::even_sets(256, {1, 3, 6, 12}).front().count == 64);
}

TEST_CASE("delta kernels pass one channel straight through") {
  Geometry g = toy_geometry(Activation::none);
  g.L1 = 4;
  g.L2 = 1;
  EncoderParams p = EncoderParams::init(g, 5);
  p.w_temp1.fill(0.0);
  p.w_temp1.at(0, 0, 2) = 1.0;  // pad head for 4 taps is 2
  p.w_temp1.at(1, 0, 2) = 1.0;
  p.w_spat.fill(0.0);
  const std::size_t c0 = 2;
  p.w_spat.at(0, c0, 0) = 1.0;
  std::mt19937_64 rng(6);
  const Tensor x = random_tensor({4, 64}, rng);
  Tape tape;
  const Tensor y = run(tape, x, p, g).output.value();
  for (std::size_t t = 0; t < 64; ++t) CHECK(y.at(0, t) == x.at(c0, t));
  for (std::size_t t = 0; t < 64; ++t) CHECK(y.at(1, t) == 0.0);
}

TEST_CASE("spatial transition kernel responds at a channel hop") {
  // Two channels; a pulse on channel 0 at t0 reappears on channel 1 at t0 + d.
  Geometry g;
  g.M = 2;
  g.T = 80;
  g.K1 = 1;
  g.L1 = 1;
  g.K2 = 1;
  g.L2 = 2;
  const std::size_t d = 6, t0 = 30;
  g.dilations = {{d, 1}};
  g.L3 = 3;
  g.activation = Activation::none;
  EncoderParams p = EncoderParams::init(g, 7);
  p.w_temp1.fill(1.0);
  p.w_spat.fill(0.0);
  p.w_spat.at(0, 0, 0) = 1.0;
  p.w_spat.at(0, 1, 1) = 1.0;
  std::mt19937_64 rng(8);
  Tensor x = random_tensor({2, 80}, rng, -0.1, 0.1);
  x.at(0, t0) += 1.0;
  x.at(1, t0 + d) += 1.0;
  Tape tape;
  const Tensor y = run(tape, x, p, g).output.value();

  // Brute-force correlation: (L2 - 1) * d = 6 padding zeros, the head taking ceil(6 / 2) = 3.
  const std::size_t head = 3;
  std::vector<double> oracle(80, 0.0);
  for (std::size_t t = 0; t < 80; ++t) {
    for (std::size_t c = 0; c < 2; ++c) {
      for (std::size_t l = 0; l < 2; ++l) {
        const long src = static_cast<long>(t + l * d) - static_cast<long>(head);
        if (src >= 0 && src < 80) oracle[t] += p.w_spat.at(0, c, l) * x.at(c, static_cast<std::size_t>(src));
      }
    }
  }
  std::size_t peak = 0, oracle_peak = 0;
  for (std::size_t t = 0; t < 80; ++t) {
    CHECK(std::abs(y.at(0, t) - oracle[t]) < 1e-14);
    if (y.at(0, t) > y.at(0, peak)) peak = t;
    if (oracle[t] > oracle[oracle_peak]) oracle_peak = t;
  }
  CHECK(peak == oracle_peak);
  CHECK(peak == t0 + head);
}

TEST_CASE("kernel_info orders dimensions by dilation set then temporal kernel") {
  const Geometry g = Geometry::faced();
  CHECK(kernel_info(g, 0).dilation == 1);
  CHECK(kernel_info(g, 3).temporal_kernel == 0);
  CHECK(kernel_info(g, 4).temporal_kernel == 1);
  CHECK(kernel_info(g, 63).temporal_kernel == 15);
  CHECK(kernel_info(g, 64).dilation == 3);
  CHECK(kernel_info(g, 64).temporal_kernel == 0);
  CHECK(kernel_info(g, 255).dilation == 12);
  CHECK_THROWS_AS(kernel_info(g, 256), DimensionError);
}

TEST_CASE("dynamic attention basics") {
  Geometry g = toy_geometry();
  EncoderParams p = EncoderParams::init(g, 9);
  Tape tape;
  const EncoderVars v = bind(tape, p, false);
  const Tensor zero_attn = dya_weights(tape.constant(Tensor(Shape{4, 64})), v, g).value();
  for (double a : zero_attn.values()) CHECK(a == 0.5);

  g.activation = Activation::softmax;
  EncoderParams q = p;
  q.beta.fill(0.0);
  const EncoderVars vq = bind(tape, q, false);
  std::mt19937_64 rng(10);
  const Tensor uniform_attn = dya_weights(tape.constant(random_tensor({4, 64}, rng)), vq, g).value();
  for (double a : uniform_attn.values()) CHECK(a == doctest::Approx(0.25).epsilon(1e-15));

  Geometry big = Geometry::faced();
  Tape t2;
  const EncoderVars vb = bind(t2, EncoderParams::init(big, 1), false);
  CHECK(dya_weights(t2.constant(Tensor(Shape{256, 625})), vb, big).shape() == Shape{256, 625});

  const Tensor lat = random_tensor({4, 64}, rng);
  Var lv = tape.constant(lat);
  CHECK(dya_apply(lv, tape.constant(Tensor(Shape{4, 64}, 1.0))).value() == lat);
  CHECK(dya_apply(lv, tape.constant(Tensor(Shape{4, 64}, 0.0))).value() == Tensor(Shape{4, 64}, 0.0));
  CHECK_THROWS_AS(dya_apply(lv, tape.constant(Tensor(Shape{4, 63}))), DimensionError);
}

TEST_CASE("attention invariants hold for every activation") {
  std::mt19937_64 rng(11);
  for (Activation a : {Activation::sigmoid, Activation::softmax, Activation::relu, Activation::global}) {
    const Geometry g = toy_geometry(a);
    const EncoderParams p = EncoderParams::init(g, 12);
    for (int trial = 0; trial < 10; ++trial) {
      Tape tape;
      const Tensor attn = run(tape, random_tensor({4, 64}, rng, -3, 3), p, g).attention.value();
      if (a == Activation::sigmoid || a == Activation::global) {
        for (double w : attn.values()) CHECK((w > 0.0 && w < 1.0));
      }
      if (a == Activation::relu) {
        for (double w : attn.values()) CHECK(w >= 0.0);
      }
      if (a == Activation::softmax) {
        for (std::size_t t = 0; t < 64; ++t) {
          double s = 0.0;
          for (std::size_t k = 0; k < 4; ++k) s += attn.at(k, t);
          CHECK(std::abs(s - 1.0) < 1e-9);
        }
      }
      if (a == Activation::global) {
        for (std::size_t k = 0; k < 4; ++k) {
          for (std::size_t t = 1; t < 64; ++t) CHECK(attn.at(k, t) == attn.at(k, 0));
        }
      }
    }
  }
}

TEST_CASE("forced unit attention equals the no-attention ablation bit for bit") {
  std::mt19937_64 rng(13);
  const Geometry gs = toy_geometry(Activation::sigmoid);
  const Geometry gn = toy_geometry(Activation::none);
  const EncoderParams p = EncoderParams::init(gs, 14);
  const Tensor x = random_tensor({4, 64}, rng);
  Tape tape;
  const Tensor forced = run(tape, x, p, gs, {true}).output.value();
  const Tensor none = run(tape, x, p, gn).output.value();
  CHECK(nd::bit_equal(forced, none));
  const auto fi = infer<double>(x, p, gs, {true});
  const auto ni = infer<double>(x, p, gn);
  CHECK(fi.output == ni.output);
}

TEST_CASE("TSTC is linear") {
  std::mt19937_64 rng(15);
  const Geometry g = toy_geometry(Activation::none);
  const EncoderParams p = EncoderParams::init(g, 16);
  const Tensor x1 = random_tensor({4, 64}, rng), x2 = random_tensor({4, 64}, rng);
  Tensor mix = x1;
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = 2.5 * x1[i] - 0.75 * x2[i];
  Tape tape;
  const Tensor y1 = run(tape, x1, p, g).output.value();
  const Tensor y2 = run(tape, x2, p, g).output.value();
  const Tensor ym = run(tape, mix, p, g).output.value();
  for (std::size_t i = 0; i < ym.size(); ++i) CHECK(std::abs(ym[i] - (2.5 * y1[i] - 0.75 * y2[i])) < 1e-10);
}

TEST_CASE("tape-free inference matches the tape forward pass") {
  std::mt19937_64 rng(17);
  for (Activation a : {Activation::sigmoid, Activation::softmax, Activation::relu, Activation::none,
                       Activation::global}) {
    const Geometry g = toy_geometry(a);
    const EncoderParams p = EncoderParams::init(g, 18);
    const Tensor x = random_tensor({4, 64}, rng, -2, 2);
    Tape tape;
    const EncoderOutput out = run(tape, x, p, g);
    const auto d = infer<double>(x, p, g);
    const auto f = infer<float>(x, p, g);
    for (std::size_t i = 0; i < d.output.size(); ++i) {
      CHECK(d.output[i] == out.output.value()[i]);
      CHECK(std::abs(static_cast<double>(f.output[i]) - d.output[i]) < 1e-4 * (1.0 + std::abs(d.output[i])));
    }
  }
}

TEST_CASE("encoder gradients agree with finite differences for every activation") {
  std::mt19937_64 rng(19);
  for (Activation a : {Activation::sigmoid, Activation::softmax, Activation::relu, Activation::none,
                       Activation::global}) {
    const Geometry g = toy_geometry(a);
    const EncoderParams p = EncoderParams::init(g, 20);
    const Tensor proj = random_tensor({4, 64}, rng);
    const std::vector<Tensor> inputs{random_tensor({4, 64}, rng), p.w_temp1, p.w_spat, p.w_temp2, p.beta};
    const nd::MultiScalarFn f = [&](Tape& tape, std::span<const Var> v) {
      const EncoderVars ev{v[1], v[2], v[3], v[4]};
      return nd::sum(nd::mul(encoder_forward(v[0], ev, g).output, tape.constant(proj)));
    };
    const nd::GradCheckResult r = nd::grad_check(f, inputs);
    INFO("activation " << to_string(a));
    CHECK(r.max_rel_error < 1e-4);
    CHECK(r.checked > 0);
  }
}
