#include "daest/ndcore/tape.hpp"

#include "daest/error.hpp"

namespace daest::nd {

const Tensor& Var::value() const {
  if (!tape_) throw Error("var: dereferencing an unbound variable");
  return tape_->value(id_);
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::check_owner(Var v) const {
  if (v.tape() != this || v.id() >= nodes_.size()) {
    throw Error("tape: variable does not belong to this tape");
  }
}

Var Tape::constant(Tensor value) { return push(Node{std::move(value), {}, false, {}}); }

Var Tape::parameter(Tensor value) { return push(Node{std::move(value), {}, true, {}}); }

Var Tape::record(Tensor value, std::initializer_list<Var> parents, BackwardFn backward) {
  bool grad = false;
  for (const Var& p : parents) {
    check_owner(p);
    grad = grad || nodes_[p.id()].needs_grad;
  }
  return push(Node{std::move(value), {}, grad, grad ? std::move(backward) : BackwardFn{}});
}

Var Tape::record(Tensor value, const std::vector<Var>& parents, BackwardFn backward) {
  bool grad = false;
  for (const Var& p : parents) {
    check_owner(p);
    grad = grad || nodes_[p.id()].needs_grad;
  }
  return push(Node{std::move(value), {}, grad, grad ? std::move(backward) : BackwardFn{}});
}

void Tape::backward(Var loss) {
  check_owner(loss);
  if (loss.value().size() != 1) {
    throw DimensionError("backward: loss must be a scalar, got shape " +
                         to_string(loss.value().shape()));
  }
  backward(loss, Tensor(loss.value().shape(), 1.0));
}

void Tape::backward(Var output, const Tensor& seed) {
  check_owner(output);
  if (seed.shape() != output.value().shape()) {
    throw DimensionError("backward: seed shape " + to_string(seed.shape()) +
                         " does not match output " + to_string(output.value().shape()));
  }
  Tensor& acc = accumulator(output.id());
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += seed[i];
  propagate(output.id());
}

void Tape::propagate(std::size_t from) {
  for (std::size_t i = from + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || !n.backward || n.adjoint.empty()) continue;
    n.backward(*this, i);
  }
}

const Tensor& Tape::grad(Var v) {
  check_owner(v);
  return accumulator(v.id());
}

Tensor& Tape::accumulator(std::size_t id) {
  Node& n = nodes_.at(id);
  if (n.adjoint.shape() != n.value.shape() || n.adjoint.size() != n.value.size()) {
    n.adjoint = Tensor(n.value.shape(), 0.0);
  }
  return n.adjoint;
}

void Tape::reset_adjoints() {
  for (Node& n : nodes_) {
    if (!n.adjoint.empty()) n.adjoint.fill(0.0);
  }
}

void Tape::clear() {
  nodes_.clear();
  branch_signature_ = Tape().branch_signature_;
}

}  // namespace daest::nd
