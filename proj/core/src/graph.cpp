#include "rbo/graph.hpp"

#include <algorithm>
#include <string>

#include "rbo/error.hpp"

namespace rbo {

const Tensor& Var::value() const { return graph_->value_of(id_); }

bool Var::requires_grad() const { return graph_->needs_grad(id_); }

Var Graph::push_leaf(Tensor value, bool requires_grad, Tensor* external) {
  if (!value.all_finite()) throw NumericError("leaf holds non-finite values");
  Node node;
  node.op = "leaf";
  node.value = std::move(value);
  node.value.set_requires_grad(false);
  node.requires_grad = requires_grad;
  node.is_leaf = true;
  node.external = external;
  nodes_.push_back(std::move(node));
  adjoints_.emplace_back();
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Graph::leaf(Tensor value, bool requires_grad) {
  return push_leaf(std::move(value), requires_grad, nullptr);
}

Var Graph::param(Tensor& tensor) {
  Tensor copy(tensor.shape(), tensor.values());
  return push_leaf(std::move(copy), tensor.requires_grad(),
                   tensor.requires_grad() ? &tensor : nullptr);
}

Var Graph::constant(Tensor value) { return push_leaf(std::move(value), false, nullptr); }

Var Graph::constant(double value) { return constant(Tensor::scalar(value)); }

Var Graph::record(std::string_view op, Tensor value, std::vector<Var> inputs, BackwardFn fn) {
  if (!value.all_finite()) {
    throw NumericError(std::string(op) + " produced a non-finite value");
  }
  Node node;
  node.op = op;
  node.value = std::move(value);
  node.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    if (in.graph_ != this) throw Error(std::string(op) + ": input recorded on another graph");
    node.inputs.push_back(in.id_);
    node.requires_grad = node.requires_grad || nodes_[in.id_].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  adjoints_.emplace_back();
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

std::span<double> Graph::adjoint_mut(std::uint32_t id) {
  auto& buf = adjoints_[id];
  if (buf.empty()) buf.assign(nodes_[id].value.size(), 0.0);
  return buf;
}

void Graph::backward(Var loss) {
  if (loss.graph_ != this) throw Error("backward: loss belongs to another graph");
  const Node& root = nodes_[loss.id_];
  if (root.value.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + shape_str(root.value.shape()));
  }
  if (!root.requires_grad) throw Error("backward: loss is detached from every requires_grad leaf");

  for (auto& buf : adjoints_) buf.clear();
  adjoint_mut(loss.id_)[0] = 1.0;

  for (std::uint32_t id = loss.id_ + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.requires_grad || node.is_leaf || adjoints_[id].empty()) continue;
    node.backward(*this, id);
  }

  leaf_grads_.resize(nodes_.size());
  for (std::uint32_t id = 0; id <= loss.id_; ++id) {
    Node& node = nodes_[id];
    const auto& adj = adjoints_[id];
    if (!node.is_leaf || !node.requires_grad || adj.empty()) continue;
    auto& acc = leaf_grads_[id];
    if (acc.empty()) acc.assign(adj.size(), 0.0);
    for (std::size_t i = 0; i < adj.size(); ++i) acc[i] += adj[i];
    if (node.external != nullptr) {
      auto dst = node.external->grad();
      for (std::size_t i = 0; i < adj.size(); ++i) dst[i] += adj[i];
    }
  }
}

Tensor Graph::grad(Var v) const {
  const Node& node = nodes_[v.id_];
  const std::vector<double>* buf = &adjoints_[v.id_];
  if (node.is_leaf) {
    if (v.id_ >= leaf_grads_.size()) return Tensor(node.value.shape(), 0.0);
    buf = &leaf_grads_[v.id_];
  }
  if (buf->empty()) return Tensor(node.value.shape(), 0.0);
  return Tensor(node.value.shape(), *buf);
}

void Graph::zero_grad() {
  for (auto& buf : adjoints_) buf.clear();
  leaf_grads_.clear();
}

}  // namespace rbo
