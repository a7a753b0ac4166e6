#include <random>

#include "doctest.h"
#include "gradient_cases.hpp"
#include "support.hpp"

#include "daest/ndcore/gradcheck.hpp"
#include "daest/ndcore/ops.hpp"
#include "daest/ndcore/parallel.hpp"

using namespace daest::nd;
using daest::testing::random_tensor;

TEST_CASE("grad_check of a linear function is exact to rounding") {
  std::mt19937_64 rng(31);
  const Tensor c = random_tensor({4, 6}, rng);
  const auto f = [&](Tape& tape, Var x) { return sum(mul(x, tape.constant(c))); };
  const GradCheckResult r = grad_check(ScalarFn(f), random_tensor({4, 6}, rng), 1e-3);
  CHECK(r.checked == 24);
  CHECK(r.max_rel_error < 1e-10);
}

TEST_CASE("grad_check of conv -> sigmoid -> sum") {
  std::mt19937_64 rng(32);
  const Tensor x = random_tensor({2, 12}, rng);
  const Tensor w = random_tensor({4, 1, 3}, rng);
  const ConvSpec spec{3, 2, 2, Padding::same_zero};
  const MultiScalarFn f = [&](Tape&, std::span<const Var> v) {
    return sum(sigmoid(conv_time(v[0], v[1], spec)));
  };
  const std::vector<Tensor> inputs{x, w};
  const GradCheckResult r = grad_check(f, inputs);
  CHECK(r.checked == x.size() + w.size());
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("grad_check of softmax composite") {
  std::mt19937_64 rng(33);
  const Tensor weights = random_tensor({5, 7}, rng);
  const auto f = [&](Tape& tape, Var x) {
    return sum(mul(softmax_channels(x), tape.constant(weights)));
  };
  CHECK(grad_check(ScalarFn(f), random_tensor({5, 7}, rng)).max_rel_error < 1e-4);
}

TEST_CASE("grad_check skips relu kinks instead of reporting them") {
  const auto f = [](Tape&, Var x) { return sum(relu(x)); };
  const GradCheckResult r = grad_check(ScalarFn(f), Tensor(Shape{3}, {0.0, 1.0, -1.0}));
  CHECK(r.skipped == 1);
  CHECK(r.checked == 2);
  CHECK(r.max_rel_error < 1e-10);
}

TEST_CASE("randomized gradient agreement across ops and shapes") {
  int failures = 0;
  for (int seed = 0; seed < 100; ++seed) {
    const auto [inputs, f] = daest::testing::gradient_case(seed);
    const GradCheckResult r = grad_check(f, inputs);
    if (!(r.max_rel_error < 1e-4)) {
      ++failures;
      MESSAGE("seed " << seed << " rel err " << r.max_rel_error);
    }
  }
  CHECK(failures == 0);
}

TEST_CASE("repeated forward/backward is bit-identical") {
  std::mt19937_64 rng(40);
  const Tensor x = random_tensor({3, 30}, rng);
  const Tensor w = random_tensor({6, 1, 5}, rng);
  const auto run = [&] {
    Tape tape;
    Var xv = tape.parameter(x), wv = tape.parameter(w);
    Var y = sum(sigmoid(moving_average(conv_time(xv, wv, ConvSpec{5, 2, 3}), 4, 1)));
    tape.backward(y);
    return std::pair{tape.grad(xv), tape.grad(wv)};
  };
  const auto a = run();
  const auto b = run();
  CHECK(bit_equal(a.first, b.first));
  CHECK(bit_equal(a.second, b.second));
}

TEST_CASE("parallel_for visits every index once and rethrows failures") {
  std::vector<int> hits(257, 0);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i] += 1; }, 4);
  for (int h : hits) CHECK(h == 1);
  CHECK_THROWS(parallel_for(10, [](std::size_t i) {
    if (i == 3) throw std::runtime_error("boom");
  }, 3));
}
