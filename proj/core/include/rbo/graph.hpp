#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "rbo/tensor.hpp"

namespace rbo {

class Graph;

// Handle to a node recorded on a Graph. Cheap to copy; only valid while the
// owning Graph is alive.
class Var {
 public:
  Var() = default;

  Graph& graph() const { return *graph_; }
  std::uint32_t id() const noexcept { return id_; }
  bool valid() const noexcept { return graph_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  double item() const { return value().item(); }
  double operator[](std::size_t i) const { return value()[i]; }
  bool requires_grad() const;

 private:
  friend class Graph;
  Var(Graph* graph, std::uint32_t id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  std::uint32_t id_ = 0;
};

// Tape of executed primitive ops. Nodes are appended in execution order, so
// the tape is already topologically sorted; backward() walks it in reverse and
// visits every node once.
//
// A Graph is confined to the thread that records it.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::uint32_t self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaf whose gradient lives on the graph (see grad()).
  Var leaf(Tensor value, bool requires_grad = true);
  // Leaf bound to an external tensor: backward() accumulates into
  // tensor.grad() when tensor.requires_grad(). The tensor must outlive every
  // backward() call on this graph.
  Var param(Tensor& tensor);
  Var constant(Tensor value);
  Var constant(double value);

  // Reverse-mode sweep from a scalar loss. Leaf gradients accumulate across
  // calls; intermediate adjoints are recomputed each call.
  void backward(Var loss);

  // Accumulated gradient of a leaf, or the adjoint of an intermediate node
  // from the most recent backward(). Zero-filled if nothing flowed into it.
  Tensor grad(Var v) const;
  void zero_grad();

  std::size_t size() const noexcept { return nodes_.size(); }

  // --- op authoring interface -------------------------------------------
  // Records a node. Throws NumericError if `value` holds NaN/Inf.
  Var record(std::string_view op, Tensor value, std::vector<Var> inputs, BackwardFn fn);

  const Tensor& value_of(std::uint32_t id) const { return nodes_[id].value; }
  bool needs_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }
  std::uint32_t input(std::uint32_t self, std::size_t k) const { return nodes_[self].inputs[k]; }
  std::size_t num_inputs(std::uint32_t self) const { return nodes_[self].inputs.size(); }
  // Adjoint of node `id` during backward (read-only for the node itself).
  std::span<const double> adjoint(std::uint32_t id) const { return adjoints_[id]; }
  // Adjoint buffer to accumulate into, allocated on first use.
  std::span<double> adjoint_mut(std::uint32_t id);

 private:
  friend class Var;

  struct Node {
    std::string_view op;
    Tensor value;
    std::vector<std::uint32_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    bool is_leaf = false;
    Tensor* external = nullptr;
  };

  Var push_leaf(Tensor value, bool requires_grad, Tensor* external);

  // A deque keeps value references valid while new nodes are recorded.
  std::deque<Node> nodes_;
  std::vector<std::vector<double>> adjoints_;
  std::vector<std::vector<double>> leaf_grads_;
};

}  // namespace rbo
