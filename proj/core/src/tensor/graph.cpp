// SPDX-License-Identifier: Apache-2.0
#include "infillgen/tensor/graph.hpp"

#include <string>

#include "infillgen/error.hpp"

namespace infillgen::tensor {

const Tensor& Var::value() const {
  if (graph == nullptr) throw UsageError("var: detached handle");
  return graph->value(*this);
}

const Tensor& Graph::BackwardContext::out_value() const {
  return graph_.nodes_[node_].value;
}

const Tensor& Graph::BackwardContext::input(std::size_t k) const {
  return graph_.nodes_[graph_.nodes_[node_].inputs.at(k)].value;
}

Tensor* Graph::BackwardContext::grad(std::size_t k) {
  Node& in = graph_.nodes_[graph_.nodes_[node_].inputs.at(k)];
  if (!in.requires_grad) return nullptr;
  if (!in.grad) in.grad.emplace(in.value.shape());
  return &*in.grad;
}

Var Graph::leaf(Tensor value, bool requires_grad) {
  if (check_finite_ && !value.all_finite()) throw NumericalError("graph: non-finite leaf value");
  Node n;
  n.op = "leaf";
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Graph::record(std::string_view op, Tensor value, std::vector<Var> inputs,
                  BackwardFn backward) {
  if (check_finite_ && !value.all_finite()) {
    throw NumericalError("graph: op '" + std::string(op) + "' produced a non-finite value");
  }
  Node n;
  n.op = op;
  n.value = std::move(value);
  n.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    if (v.graph != this) throw UsageError("graph: input belongs to a different graph");
    n.inputs.push_back(v.id);
    n.requires_grad = n.requires_grad || nodes_[v.id].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const Graph::Node& Graph::node(Var v) const {
  if (v.graph != this || v.id >= nodes_.size()) throw UsageError("graph: invalid var");
  return nodes_[v.id];
}

const Tensor& Graph::value(Var v) const { return node(v).value; }
bool Graph::requires_grad(Var v) const { return node(v).requires_grad; }
std::string_view Graph::op_name(Var v) const { return node(v).op; }
std::span<const std::uint32_t> Graph::inputs(Var v) const { return node(v).inputs; }

Tensor Graph::grad(Var v) const {
  const Node& n = node(v);
  return n.grad ? *n.grad : Tensor::zeros_like(n.value);
}

void Graph::backward(Var loss) {
  const Node& root = node(loss);
  if (root.value.numel() != 1) {
    throw UsageError("backward: loss must be a scalar, got shape " +
                     shape_to_string(root.value.shape()));
  }
  if (backward_done_) throw UsageError("backward: already run on this graph");
  backward_done_ = true;
  if (!root.requires_grad) return;
  nodes_[loss.id].grad.emplace(root.value.shape(), 1.0);
  for (std::uint32_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || !n.grad || !n.backward) continue;
    BackwardContext ctx(*this, id, *n.grad);
    n.backward(ctx);
  }
}

}  // namespace infillgen::tensor
