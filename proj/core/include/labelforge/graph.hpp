#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "labelforge/tensor.hpp"

namespace labelforge {

// Running statistics owned by the model, updated by batchnorm during training
// and read back at inference time.
struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
};

enum class OpKind {
  leaf,
  input,
  conv2d,
  channel_bias,
  dense,
  relu,
  maxpool2,
  avgpool_global,
  batchnorm,
  flatten,
  softmax,
  softmax_ce,
  add,
  scale,
  matmul_nt,
  l2norm_rows,
  masked_softmax_ce,
};

// Handle into a Graph. Only valid for the graph that produced it.
struct Var {
  int node = -1;
  bool valid() const { return node >= 0; }
};

// Dynamic computation tape. Ops append nodes in execution order, so the node
// list is already topologically sorted; backward() walks it in reverse.
// Parameters enter through leaf(), which snapshots the tensor value and
// accumulates gradients back into the caller's Tensor::grad on backward().
// A Graph is built per training step and discarded.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Registers a parameter. Calling twice with the same tensor returns the
  // same node.
  Var leaf(Tensor& t);
  // Non-parameter input (batch data). Never receives external gradients.
  Var input(Tensor value);

  Var conv2d(Var x, Var kernel, int stride, int padding);
  Var channel_bias(Var x, Var bias);
  Var dense(Var x, Var w, Var b);
  Var relu(Var x);
  Var maxpool2(Var x);
  Var avgpool_global(Var x);
  Var batchnorm(Var x, Var gamma, Var beta, BatchNormState* state,
                bool training);
  Var flatten(Var x);
  Var softmax(Var x);
  // Mean cross-entropy over rows with integer class targets. Scalar output.
  Var softmax_cross_entropy(Var logits, std::vector<int> targets);
  Var add(Var a, Var b);
  Var scale(Var x, float factor);
  // a[M,d] x b[K,d]^T -> [M,K]
  Var matmul_nt(Var a, Var b);
  Var l2_normalize_rows(Var x);
  // Row-wise cross-entropy over a square similarity matrix with the diagonal
  // excluded from each row's softmax. targets[r] must name another row.
  Var masked_softmax_ce(Var sim, std::vector<int> targets);

  const Tensor& value(Var v) const;
  Tensor& mutable_value(Var v);

  // Reverse pass from a scalar loss. Gradients of registered parameters are
  // accumulated into their external tensors; parameters not reachable from
  // the loss still get a zero-filled grad buffer.
  void backward(Var loss);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    OpKind kind = OpKind::input;
    std::vector<int> inputs;
    Tensor value;
    Tensor* external = nullptr;
    std::function<void(Graph&, int)> backprop;
  };

  Node& node(Var v);
  const Node& node(Var v) const;
  Var push(Node n);
  std::vector<float>& grad_of(int idx) { return nodes_[idx].value.grad; }

  std::vector<Node> nodes_;
  std::unordered_map<const Tensor*, int> leaf_index_;
};

// Parameter-free and parameterized layer kinds that appear in backbone
// definitions, dispatched by name when presets are parsed.
enum class LayerKind {
  dense,
  relu,
  maxpool2,
  avgpool_global,
  batchnorm,
  flatten,
  softmax,
};

LayerKind layer_kind_from_name(const std::string& name);

Var layer_forward(Graph& g, LayerKind kind, Var input,
                  const std::vector<Var>& params = {},
                  BatchNormState* bn_state = nullptr, bool training = true);

}  // namespace labelforge
