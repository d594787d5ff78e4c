#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "vib/core/errors.hpp"
#include "vib/core/tensor.hpp"

namespace vib {

template <class T>
class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
// owning tape is alive.
template <class T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor<T>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Computation record for reverse-mode differentiation.
//
// Nodes are appended in execution order, so every op's inputs precede it and
// a single reverse sweep is a valid adjoint pass. Leaves either reference an
// external tensor (parameters; gradients land in Tensor::grad) or own a copy
// (constants and inputs). A tape is confined to one thread.
template <class T>
class Tape {
 public:
  // Receives the node's output adjoint; adds into input adjoints.
  using BackwardFn = std::function<void(Tape&, const std::vector<T>&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // When disabled, nothing is retained for the adjoint pass.
  void set_grad_enabled(bool on) { grad_enabled_ = on; }
  bool grad_enabled() const { return grad_enabled_; }

  Var<T> leaf(Tensor<T>& external, std::string name = "leaf") {
    Node n;
    n.op = std::move(name);
    n.external = &external;
    n.needs_grad = grad_enabled_ && external.requires_grad();
    nodes_.push_back(std::move(n));
    return Var<T>(this, nodes_.size() - 1);
  }

  Var<T> constant(Tensor<T> value, std::string name = "const") {
    Node n;
    n.op = std::move(name);
    n.owned = std::move(value);
    n.needs_grad = grad_enabled_ && n.owned.requires_grad();
    nodes_.push_back(std::move(n));
    return Var<T>(this, nodes_.size() - 1);
  }

  // Appends an op output. `fn` is dropped when no input needs a gradient.
  Var<T> record(std::string op, Tensor<T> value,
                std::initializer_list<std::size_t> inputs, BackwardFn fn) {
    Node n;
    n.op = std::move(op);
    n.owned = std::move(value);
    n.inputs.assign(inputs.begin(), inputs.end());
    for (std::size_t in : n.inputs) {
      if (in >= nodes_.size()) {
        throw UsageError("op '" + n.op + "' references a node recorded later");
      }
      n.needs_grad = n.needs_grad || nodes_[in].needs_grad;
    }
    if (n.needs_grad) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var<T>(this, nodes_.size() - 1);
  }

  bool needs_grad(std::size_t id) const { return nodes_.at(id).needs_grad; }

  const Tensor<T>& value(std::size_t id) const {
    const Node& n = nodes_.at(id);
    return n.external ? *n.external : n.owned;
  }

  // Adjoint buffer of a node, zero-initialised on first touch.
  std::vector<T>& adjoint(std::size_t id) {
    Node& n = nodes_.at(id);
    if (n.adjoint.empty()) n.adjoint.assign(value(id).size(), T{0});
    return n.adjoint;
  }

  std::size_t size() const { return nodes_.size(); }
  const std::string& op_name(std::size_t id) const { return nodes_.at(id).op; }
  const std::vector<std::size_t>& inputs(std::size_t id) const {
    return nodes_.at(id).inputs;
  }

  // Non-smooth ops fold their branch decisions (relu sign pattern, pooling
  // argmax) into this signature. Two evaluations with equal signatures lie
  // in the same smooth piece of the function.
  void note_branch(std::uint64_t word) {
    branch_sig_ ^= word + 0x9e3779b97f4a7c15ULL + (branch_sig_ << 6) +
                   (branch_sig_ >> 2);
  }
  std::uint64_t branch_signature() const { return branch_sig_; }

  // Reverse sweep from a scalar loss. Leaf gradients accumulate into the
  // referenced tensors, so repeated passes add up.
  void backward(Var<T> loss) {
    if (loss.size() != 1) {
      throw UsageError("backward requires a scalar loss, got shape " +
                       shape_str(loss.shape()));
    }
    if (&loss.tape() != this) {
      throw UsageError("loss was recorded on a different tape");
    }
    if (!nodes_[loss.id()].needs_grad) return;
    adjoint(loss.id())[0] += T{1};
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.adjoint.empty()) continue;
      if (n.backward) n.backward(*this, n.adjoint);
      if (n.external && n.needs_grad) n.external->accumulate_grad(n.adjoint);
    }
  }

 private:
  struct Node {
    std::string op;
    Tensor<T> owned;
    Tensor<T>* external = nullptr;
    std::vector<std::size_t> inputs;
    std::vector<T> adjoint;
    BackwardFn backward;
    bool needs_grad = false;
  };

  std::vector<Node> nodes_;
  bool grad_enabled_ = true;
  std::uint64_t branch_sig_ = 0;
};

}  // namespace vib
