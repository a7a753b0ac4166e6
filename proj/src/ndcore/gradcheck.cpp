#include "daest/ndcore/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace daest::nd {

namespace {

struct Eval {
  double value;
  std::uint64_t branches;
};

Eval evaluate(const MultiScalarFn& f, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const Tensor& t : inputs) vars.push_back(tape.constant(t));
  const double v = f(tape, vars).value().item();
  return {v, tape.branch_signature()};
}

}  // namespace

GradCheckResult grad_check(const MultiScalarFn& f, std::span<const Tensor> inputs, double eps) {
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : inputs) vars.push_back(tape.parameter(t));
    Var loss = f(tape, vars);
    tape.backward(loss);
    for (const Var& v : vars) analytic.push_back(tape.grad(v));
  }

  GradCheckResult result;
  std::vector<Tensor> probe(inputs.begin(), inputs.end());
  const Eval e0 = evaluate(f, probe);
  for (std::size_t k = 0; k < probe.size(); ++k) {
    for (std::size_t i = 0; i < probe[k].size(); ++i) {
      const double orig = probe[k][i];
      probe[k][i] = orig + eps;
      const Eval ep = evaluate(f, probe);
      probe[k][i] = orig - eps;
      const Eval em = evaluate(f, probe);
      probe[k][i] = orig;
      if (ep.branches != e0.branches || em.branches != e0.branches) {
        ++result.skipped;
        continue;
      }
      const double central = (ep.value - em.value) / (2.0 * eps);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(central), kGradFloor});
      result.max_rel_error = std::max(result.max_rel_error, std::abs(a - central) / denom);
      ++result.checked;
    }
  }
  return result;
}

GradCheckResult grad_check(const ScalarFn& f, const Tensor& x, double eps) {
  const MultiScalarFn wrapped = [&f](Tape& tape, std::span<const Var> vars) {
    return f(tape, vars[0]);
  };
  return grad_check(wrapped, std::span<const Tensor>(&x, 1), eps);
}

}  // namespace daest::nd
