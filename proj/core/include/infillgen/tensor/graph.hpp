// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "infillgen/tensor/tensor.hpp"

namespace infillgen::tensor {

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
struct Var {
  Graph* graph = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Reverse-mode tape. Nodes are appended in creation order, so the node list
/// is always topologically sorted and backward is a single reverse sweep.
///
/// Not thread-safe; one graph per training step.
class Graph {
 public:
  class BackwardContext {
   public:
    const Tensor& out_grad() const { return out_grad_; }
    const Tensor& out_value() const;
    const Tensor& input(std::size_t k) const;
    /// Gradient buffer of input k, zero-initialised on first use; nullptr when
    /// that input does not require a gradient.
    Tensor* grad(std::size_t k);

   private:
    friend class Graph;
    BackwardContext(Graph& g, std::uint32_t node, const Tensor& out_grad)
        : graph_(g), node_(node), out_grad_(out_grad) {}
    Graph& graph_;
    std::uint32_t node_;
    const Tensor& out_grad_;
  };
  using BackwardFn = std::function<void(BackwardContext&)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var leaf(Tensor value, bool requires_grad = false);
  /// Appends an op node. `backward` is dropped when no input requires grad.
  Var record(std::string_view op, Tensor value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  std::string_view op_name(Var v) const;
  std::span<const std::uint32_t> inputs(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Accumulated gradient of `v` after backward(); zeros if `v` did not
  /// contribute to the loss.
  Tensor grad(Var v) const;

  /// Reverse sweep from a scalar loss. May be called once per graph.
  void backward(Var loss);

  /// When enabled, every recorded value is checked for NaN/Inf and a
  /// NumericalError names the op that produced it.
  void set_check_finite(bool enabled) noexcept { check_finite_ = enabled; }

 private:
  struct Node {
    std::string_view op;
    Tensor value;
    std::vector<std::uint32_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    std::optional<Tensor> grad;
  };

  const Node& node(Var v) const;

  std::vector<Node> nodes_;
  bool check_finite_ = false;
  bool backward_done_ = false;
};

}  // namespace infillgen::tensor
