#include "gpode/autodiff/tape.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "gpode/error.hpp"

namespace gpode::ad {

std::string Shape::str() const {
  std::ostringstream os;
  os << '[';
  for (std::uint8_t i = 0; i < rank; ++i) os << (i ? "," : "") << dims[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : data_(std::make_shared<const std::vector<double>>(std::move(values))), shape_(shape) {
  if (data_->size() != shape_.size())
    throw DimensionError("tensor of shape " + shape_.str() + " given " +
                         std::to_string(data_->size()) + " values");
}

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_.str());
  return (*data_)[0];
}

Tensor Tensor::detach() const { return Tensor(shape_, data_, nullptr, -1); }

std::span<const double> Gradients::of(const Tensor& leaf) const {
  const auto id = static_cast<std::size_t>(leaf.node());
  if (leaf.node() < 0 || id >= grads_.size() || grads_[id].size() != leaf.size())
    throw ContractError("gradient requested for a tensor that is not a leaf of this tape");
  return grads_[id];
}

Tensor Gradients::tensor(const Tensor& leaf) const {
  auto g = of(leaf);
  return Tensor(leaf.shape(), std::vector<double>(g.begin(), g.end()));
}

Tensor Tape::leaf(Shape shape, std::vector<double> values) {
  return leaf(Tensor(shape, std::move(values)));
}

Tensor Tape::leaf(const Tensor& value) {
  Node n;
  n.size = value.size();
  n.is_leaf = true;
  nodes_.push_back(std::move(n));
  return Tensor(value.shape(), value.storage(), this, static_cast<NodeId>(nodes_.size() - 1));
}

Tensor Tape::record(Shape shape, std::vector<double> values, std::span<const Tensor> parents,
                    BackwardFn backward) {
  if (values.size() != shape.size())
    throw DimensionError("recorded value count does not match shape " + shape.str());
  Node n;
  n.size = values.size();
  n.parents.reserve(parents.size());
  for (const auto& p : parents) {
    if (p.tracked() && p.tape() != this) throw ContractError("tensors from different tapes combined");
    n.parents.push_back(p.tracked() ? p.node() : -1);
  }
  n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Tensor(shape, std::make_shared<const std::vector<double>>(std::move(values)), this,
                static_cast<NodeId>(nodes_.size() - 1));
}

Gradients Tape::backward(const Tensor& loss) const {
  if (loss.shape().rank != 0) throw ContractError("backward requires a scalar loss, got shape " + loss.shape().str());
  const double one = 1.0;
  Seed seed{loss, {&one, 1}};
  return backward_from({&seed, 1});
}

Gradients Tape::backward_from(std::span<const Seed> seeds) const {
  std::vector<std::vector<double>> grads(nodes_.size());
  NodeId start = -1;
  for (const auto& s : seeds) {
    if (!s.output.tracked()) continue;
    if (s.output.tape() != this) throw ContractError("seed from a different tape");
    if (s.grad.size() != s.output.size()) throw DimensionError("seed gradient size mismatch");
    auto& g = grads[static_cast<std::size_t>(s.output.node())];
    if (g.empty()) g.assign(s.output.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s.grad[i];
    start = std::max(start, s.output.node());
  }
  return sweep(std::move(grads), start);
}

Gradients Tape::sweep(std::vector<std::vector<double>> grads, NodeId start) const {
  std::vector<std::span<double>> parent_grads;
  for (NodeId id = start; id >= 0; --id) {
    const auto& node = nodes_[static_cast<std::size_t>(id)];
    auto& g = grads[static_cast<std::size_t>(id)];
    if (node.is_leaf || g.empty() || !node.backward) continue;
    parent_grads.clear();
    for (NodeId p : node.parents) {
      if (p < 0) {
        parent_grads.emplace_back();
        continue;
      }
      auto& pg = grads[static_cast<std::size_t>(p)];
      if (pg.empty()) pg.assign(nodes_[static_cast<std::size_t>(p)].size, 0.0);
      parent_grads.emplace_back(pg);
    }
    node.backward(g, parent_grads);
    // Interior gradients are no longer needed once propagated.
    std::vector<double>().swap(g);
  }
  for (std::size_t id = 0; id < nodes_.size(); ++id)
    if (nodes_[id].is_leaf && grads[id].empty()) grads[id].assign(nodes_[id].size, 0.0);
  Gradients out;
  out.grads_ = std::move(grads);
  return out;
}

Tensor record(Shape shape, std::vector<double> values, std::span<const Tensor> parents,
              BackwardFn backward) {
  Tape* tape = nullptr;
  for (const auto& p : parents) {
    if (!p.tracked()) continue;
    if (tape && p.tape() != tape) throw ContractError("tensors from different tapes combined");
    tape = p.tape();
  }
  if (!tape) return Tensor(shape, std::move(values));
  return tape->record(shape, std::move(values), parents, std::move(backward));
}

}  // namespace gpode::ad
