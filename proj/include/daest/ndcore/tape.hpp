#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>

#include "daest/ndcore/tensor.hpp"

namespace daest::nd {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape is alive
/// and has not been cleared.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode differentiation tape. Single owner, not thread-safe; run
/// independent batch items on independent tapes.
class Tape {
 public:
  /// Propagates the adjoint of node `self` into its parents.
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var parameter(Tensor value);
  Var record(Tensor value, std::initializer_list<Var> parents, BackwardFn backward);
  Var record(Tensor value, const std::vector<Var>& parents, BackwardFn backward);

  /// Reverse accumulation from a scalar loss.
  void backward(Var loss);
  /// Reverse accumulation from an arbitrary node with an explicit output adjoint.
  void backward(Var output, const Tensor& seed);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool needs_grad(std::size_t id) const { return nodes_.at(id).needs_grad; }

  /// Adjoint of `v`; all-zeros when nothing flowed into it.
  const Tensor& grad(Var v);
  /// Lazily allocated adjoint for accumulation inside backward functions.
  Tensor& accumulator(std::size_t id);
  /// Adjoint of the node currently being propagated.
  const Tensor& adjoint(std::size_t id) const { return nodes_.at(id).adjoint; }

  /// Zero every adjoint while keeping the recorded graph.
  void reset_adjoints();
  void clear();

  /// Folds a hash of a piecewise op's active branch into the tape signature.
  void note_branch(std::uint64_t h) noexcept { branch_signature_ = (branch_signature_ ^ h) * 1099511628211ULL; }
  /// Equal for two evaluations that took the same branches in every piecewise op.
  std::uint64_t branch_signature() const noexcept { return branch_signature_; }
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor adjoint;
    bool needs_grad = false;
    BackwardFn backward;
  };

  Var push(Node node);
  void check_owner(Var v) const;
  void propagate(std::size_t from);

  std::deque<Node> nodes_;
  std::uint64_t branch_signature_ = 14695981039346656037ULL;
};

}  // namespace daest::nd
