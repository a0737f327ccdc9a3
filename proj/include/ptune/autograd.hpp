#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "ptune/tensor.hpp"

namespace ptune {

class Graph;

/// Handle to a node in a Graph. Cheap to copy; valid while the graph lives.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
};

/// Attention probabilities for one sequence: layers x heads x seq x seq,
/// row i is query position i's distribution over key positions (causal).
struct AttentionCapture {
  std::size_t layers = 0;
  std::size_t heads = 0;
  std::size_t seq = 0;
  std::vector<double> weights;

  AttentionCapture() = default;
  AttentionCapture(std::size_t layers, std::size_t heads, std::size_t seq);

  double& at(std::size_t layer, std::size_t head, std::size_t query, std::size_t key) {
    return weights[((layer * heads + head) * seq + query) * seq + key];
  }
  double at(std::size_t layer, std::size_t head, std::size_t query,
            std::size_t key) const {
    return weights[((layer * heads + head) * seq + query) * seq + key];
  }
};

/// Append-only tape of primitive applications. Nodes are stored in
/// topological order by construction: every input precedes its consumer.
///
/// Leaves created with param() are bound to caller-owned tensors which must
/// outlive the graph; backward() adds into their gradient buffers, so two
/// backward passes without zero_grad() accumulate.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var param(Tensor& tensor);
  Var constant(Tensor tensor);

  Var push(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  std::span<double> adjoint(std::size_t id) { return nodes_[id].adjoint; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  const std::vector<std::size_t>& inputs(std::size_t id) const {
    return nodes_[id].inputs;
  }
  std::size_t size() const noexcept { return nodes_.size(); }

  void backward(Var loss);

 private:
  struct Node {
    Tensor value;
    std::vector<double> adjoint;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Tensor* param = nullptr;
    bool needs_grad = false;
  };
  std::vector<Node> nodes_;
};

/// Primitive set used by the model. All ops take and return graph handles.
namespace ops {

Var matmul(Var a, Var b);              // [n x k] * [k x m]
Var add(Var a, Var b);                 // same shape
Var add_row(Var a, Var bias);          // [n x m] + [m] broadcast over rows
Var mul(Var a, Var b);                 // elementwise
Var scale(Var a, double factor);
Var relu(Var a);                       // subgradient at 0 is 0
Var softmax_rows(Var a);
Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-5);
Var embedding(Var table, std::span<const std::size_t> ids);
Var sum(Var a);

/// Causal multi-head attention over `batch` sequences of length `seq` packed
/// row-wise in q, k, v ([batch*seq x d]). Writes probabilities into
/// `capture[b]` (layer slot `layer`) when capture is non-null.
Var causal_attention(Var q, Var k, Var v, std::size_t batch, std::size_t seq,
                     std::size_t heads, std::vector<AttentionCapture>* capture = nullptr,
                     std::size_t layer = 0);

/// Sum over rows r and classes c of target[r,c] * -log softmax(logits[r])[c],
/// divided by the total target mass (0 loss when the mass is 0).
Var soft_cross_entropy(Var logits, const Tensor& target);

/// Mean of -log softmax(logits[r])[targets[r]] over rows.
Var cross_entropy(Var logits, std::span<const std::size_t> targets);

}  // namespace ops
}  // namespace ptune
