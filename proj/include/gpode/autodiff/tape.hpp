#pragma once

#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "gpode/autodiff/tensor.hpp"

namespace gpode::ad {

// Local vector-Jacobian product of a recorded node. `grad_in[k]` is empty when
// parent k does not require a gradient; otherwise contributions are added to it.
using BackwardFn =
    std::function<void(std::span<const double> grad_out, std::span<const std::span<double>> grad_in)>;

// Gradients of one backward sweep, keyed by leaf.
class Gradients {
 public:
  // Zero-filled for leaves the loss does not reach. Throws for non-leaves.
  std::span<const double> of(const Tensor& leaf) const;
  Tensor tensor(const Tensor& leaf) const;

 private:
  friend class Tape;
  std::vector<std::vector<double>> grads_;
};

// Upstream gradient seed for Tape::backward_from.
struct Seed {
  Tensor output;
  std::span<const double> grad;
};

// Append-only record of primitive operations in topological order.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Trainable input.
  Tensor leaf(Shape shape, std::vector<double> values);
  // Trainable input sharing the storage of `value`.
  Tensor leaf(const Tensor& value);

  // Appends a node whose parents are the tracked tensors in `parents`.
  Tensor record(Shape shape, std::vector<double> values, std::span<const Tensor> parents,
                BackwardFn backward);

  // Reverse sweep from a scalar loss.
  Gradients backward(const Tensor& loss) const;
  // Reverse sweep from arbitrary output seeds (vector-Jacobian product).
  Gradients backward_from(std::span<const Seed> seeds) const;

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }
  bool is_leaf(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)).is_leaf; }

 private:
  struct Node {
    std::vector<NodeId> parents;
    std::size_t size = 0;
    BackwardFn backward;
    bool is_leaf = false;
  };

  Gradients sweep(std::vector<std::vector<double>> grads, NodeId start) const;

  std::vector<Node> nodes_;
};

// Records on the tape shared by the tracked parents; returns an untracked
// tensor when no parent is tracked. Mixing tapes is a contract error.
Tensor record(Shape shape, std::vector<double> values, std::span<const Tensor> parents,
              BackwardFn backward);
inline Tensor record(Shape shape, std::vector<double> values, std::initializer_list<Tensor> parents,
                     BackwardFn backward) {
  return record(shape, std::move(values), std::span<const Tensor>(parents.begin(), parents.size()),
                std::move(backward));
}

}  // namespace gpode::ad
