#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "dpsw/common.hpp"

namespace dpsw::ad {

using Matrix = dpsw::Matrix;

class Graph;

// Handle to a node on a Graph tape.
struct Var {
  int id = -1;
};

// Parameter gradients keyed by layer name, plus the scalar loss value.
struct GradientTape {
  std::map<std::string, Matrix> grads;
  double loss = 0.0;
};

// Reverse-mode tape over dense matrices. Nodes are appended in evaluation
// order, so reverse tape order is a valid topological order for backward.
// A Graph is built per loss evaluation and discarded; it is not thread-safe,
// but independent graphs may live on different threads.
class Graph {
 public:
  Var constant(Matrix value);
  // Tracked leaf; gradients for all params are collected into the tape.
  Var param(const std::string& name, const Matrix& value);
  // Handle of an already-registered param (throws if absent).
  Var param_var(const std::string& name) const;

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  const Matrix& grad(Var v) const { return nodes_[v.id].grad; }
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }

  // Backpropagate from a 1x1 loss node and collect parameter gradients.
  GradientTape backward(Var loss);

  // Internal: used by the op constructors below.
  using BackwardFn = std::function<void(Graph&, int self)>;
  Var add_node(Matrix value, bool needs_grad, BackwardFn fn);
  void accumulate(int id, const Matrix& delta);
  const Matrix& node_grad(int id) const { return nodes_[id].grad; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;  // empty until touched by backward
    bool needs_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  std::vector<std::pair<std::string, int>> params_;
};

// Elementwise binary ops with broadcasting over equal shapes, 1x1 scalars,
// and 1xk row vectors against nxk matrices.
Var add(Graph& g, Var a, Var b);
Var sub(Graph& g, Var a, Var b);
Var mul(Graph& g, Var a, Var b);
Var div(Graph& g, Var a, Var b);

Var cadd(Graph& g, Var a, double c);
Var cmul(Graph& g, Var a, double c);

Var matmul(Graph& g, Var a, Var b);
// x * W^T + row-broadcast bias; x is [batch x in], W [out x in], b [1 x out].
Var affine(Graph& g, Var x, Var w, Var b);

Var elu(Graph& g, Var x);
Var sigmoid(Graph& g, Var x);
Var log_(Graph& g, Var x);
Var exp_(Graph& g, Var x);
Var square(Graph& g, Var x);
Var clamp(Graph& g, Var x, double lo, double hi);

Var sum(Graph& g, Var x);
Var mean(Graph& g, Var x);
Var concat_cols(Graph& g, Var a, Var b);
Var gather_rows(Graph& g, Var x, const std::vector<int>& rows);
// Single entry as a 1x1 node; gradient flows into that entry only.
Var select(Graph& g, Var x, int row, int col);

// Differentiable rank of a column vector (see dpsw::soft_rank); the custom
// vjp uses the isotonic block structure of the projection.
Var soft_rank(Graph& g, Var w_col, double epsilon);

// Biased V-statistic MMD^2 with Gaussian kernel of the given bandwidth.
Var mmd_rbf(Graph& g, Var s0, Var s1, double bandwidth);

}  // namespace dpsw::ad
