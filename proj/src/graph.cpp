#include "dpsw/graph.hpp"

#include <cmath>
#include <stdexcept>

#include "dpsw/softrank.hpp"

namespace dpsw::ad {

namespace {

bool broadcastable(Eigen::Index from_r, Eigen::Index from_c, Eigen::Index to_r,
                   Eigen::Index to_c) {
  const bool rows_ok = (from_r == to_r) || (from_r == 1);
  const bool cols_ok = (from_c == to_c) || (from_c == 1);
  return rows_ok && cols_ok;
}

Matrix broadcast_to(const Matrix& m, Eigen::Index rows, Eigen::Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  if (m.rows() == 1 && m.cols() == 1) return Matrix::Constant(rows, cols, m(0, 0));
  if (m.rows() == 1 && m.cols() == cols) return m.colwise().replicate(rows);
  if (m.cols() == 1 && m.rows() == rows) return m.rowwise().replicate(cols);
  throw std::invalid_argument("graph: incompatible broadcast");
}

// Sum a full-shape gradient down to the operand's shape.
Matrix reduce_to(const Matrix& g, Eigen::Index rows, Eigen::Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  if (rows == 1 && cols == 1) return Matrix::Constant(1, 1, g.sum());
  if (rows == 1 && cols == g.cols()) return g.colwise().sum();
  if (cols == 1 && rows == g.rows()) return g.rowwise().sum();
  throw std::invalid_argument("graph: incompatible gradient reduction");
}

std::pair<Eigen::Index, Eigen::Index> broadcast_shape(const Matrix& a, const Matrix& b) {
  const Eigen::Index rows = std::max(a.rows(), b.rows());
  const Eigen::Index cols = std::max(a.cols(), b.cols());
  if (!broadcastable(a.rows(), a.cols(), rows, cols) ||
      !broadcastable(b.rows(), b.cols(), rows, cols))
    throw std::invalid_argument("graph: shape mismatch in binary op");
  return {rows, cols};
}

}  // namespace

Var Graph::constant(Matrix value) { return add_node(std::move(value), false, nullptr); }

Var Graph::param(const std::string& name, const Matrix& value) {
  for (const auto& [existing, _] : params_)
    if (existing == name) throw std::invalid_argument("graph: duplicate param " + name);
  const Var v = add_node(value, true, nullptr);
  params_.emplace_back(name, v.id);
  return v;
}

Var Graph::param_var(const std::string& name) const {
  for (const auto& [existing, id] : params_)
    if (existing == name) return Var{id};
  throw std::invalid_argument("graph: unknown param " + name);
}

Var Graph::add_node(Matrix value, bool needs_grad, BackwardFn fn) {
  Node node;
  node.value = std::move(value);
  node.needs_grad = needs_grad;
  node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Graph::accumulate(int id, const Matrix& delta) {
  Node& node = nodes_[id];
  if (!node.needs_grad) return;
  if (node.grad.size() == 0)
    node.grad = Matrix::Zero(node.value.rows(), node.value.cols());
  node.grad += delta;
}

GradientTape Graph::backward(Var loss) {
  const Node& top = nodes_[loss.id];
  if (top.value.rows() != 1 || top.value.cols() != 1)
    throw std::invalid_argument("graph: backward needs a scalar loss");
  for (auto& node : nodes_) node.grad.resize(0, 0);
  nodes_[loss.id].grad = Matrix::Ones(1, 1);
  nodes_[loss.id].needs_grad = true;
  for (int id = loss.id; id >= 0; --id) {
    Node& node = nodes_[id];
    if (node.grad.size() == 0 || !node.backward) continue;
    node.backward(*this, id);
  }
  GradientTape tape;
  tape.loss = top.value(0, 0);
  for (const auto& [name, id] : params_) {
    const Node& p = nodes_[id];
    tape.grads[name] = p.grad.size() == 0
                           ? Matrix::Zero(p.value.rows(), p.value.cols())
                           : p.grad;
  }
  return tape;
}

namespace {

template <typename Fwd, typename Bwd>
Var binary_op(Graph& g, Var a, Var b, Fwd fwd, Bwd bwd) {
  const Matrix& av = g.value(a);
  const Matrix& bv = g.value(b);
  const auto [rows, cols] = broadcast_shape(av, bv);
  Matrix af = broadcast_to(av, rows, cols);
  Matrix bf = broadcast_to(bv, rows, cols);
  Matrix out = fwd(af, bf);
  const bool needs = g.needs_grad(a) || g.needs_grad(b);
  auto backward = [a, b, af = std::move(af), bf = std::move(bf), bwd](Graph& gg, int self) {
    const Matrix& gout = gg.node_grad(self);
    const auto [da, db] = bwd(gout, af, bf);
    if (gg.needs_grad(a)) gg.accumulate(a.id, reduce_to(da, gg.value(a).rows(), gg.value(a).cols()));
    if (gg.needs_grad(b)) gg.accumulate(b.id, reduce_to(db, gg.value(b).rows(), gg.value(b).cols()));
  };
  return g.add_node(std::move(out), needs, needs ? Graph::BackwardFn(backward) : nullptr);
}

template <typename Fwd, typename Bwd>
Var unary_op(Graph& g, Var a, Fwd fwd, Bwd bwd) {
  Matrix out = fwd(g.value(a));
  const bool needs = g.needs_grad(a);
  auto backward = [a, bwd](Graph& gg, int self) {
    gg.accumulate(a.id, bwd(gg.node_grad(self), gg.value(a), gg.value(Var{self})));
  };
  return g.add_node(std::move(out), needs, needs ? Graph::BackwardFn(backward) : nullptr);
}

}  // namespace

Var add(Graph& g, Var a, Var b) {
  return binary_op(
      g, a, b, [](const Matrix& x, const Matrix& y) -> Matrix { return x + y; },
      [](const Matrix& gout, const Matrix&, const Matrix&) {
        return std::pair<Matrix, Matrix>(gout, gout);
      });
}

Var sub(Graph& g, Var a, Var b) {
  return binary_op(
      g, a, b, [](const Matrix& x, const Matrix& y) -> Matrix { return x - y; },
      [](const Matrix& gout, const Matrix&, const Matrix&) {
        return std::pair<Matrix, Matrix>(gout, -gout);
      });
}

Var mul(Graph& g, Var a, Var b) {
  return binary_op(
      g, a, b,
      [](const Matrix& x, const Matrix& y) -> Matrix {
        return (x.array() * y.array()).matrix();
      },
      [](const Matrix& gout, const Matrix& x, const Matrix& y) {
        return std::pair<Matrix, Matrix>((gout.array() * y.array()).matrix(),
                                         (gout.array() * x.array()).matrix());
      });
}

Var div(Graph& g, Var a, Var b) {
  return binary_op(
      g, a, b,
      [](const Matrix& x, const Matrix& y) -> Matrix {
        return (x.array() / y.array()).matrix();
      },
      [](const Matrix& gout, const Matrix& x, const Matrix& y) {
        Matrix da = (gout.array() / y.array()).matrix();
        Matrix db = (-gout.array() * x.array() / (y.array() * y.array())).matrix();
        return std::pair<Matrix, Matrix>(std::move(da), std::move(db));
      });
}

Var cadd(Graph& g, Var a, double c) {
  return unary_op(
      g, a, [c](const Matrix& x) -> Matrix { return x.array() + c; },
      [](const Matrix& gout, const Matrix&, const Matrix&) -> Matrix { return gout; });
}

Var cmul(Graph& g, Var a, double c) {
  return unary_op(
      g, a, [c](const Matrix& x) -> Matrix { return x * c; },
      [c](const Matrix& gout, const Matrix&, const Matrix&) -> Matrix { return gout * c; });
}

Var matmul(Graph& g, Var a, Var b) {
  const Matrix& av = g.value(a);
  const Matrix& bv = g.value(b);
  if (av.cols() != bv.rows()) throw std::invalid_argument("matmul: inner dim mismatch");
  Matrix out = av * bv;
  const bool needs = g.needs_grad(a) || g.needs_grad(b);
  auto backward = [a, b](Graph& gg, int self) {
    const Matrix& gout = gg.node_grad(self);
    if (gg.needs_grad(a)) gg.accumulate(a.id, gout * gg.value(b).transpose());
    if (gg.needs_grad(b)) gg.accumulate(b.id, gg.value(a).transpose() * gout);
  };
  return g.add_node(std::move(out), needs, needs ? Graph::BackwardFn(backward) : nullptr);
}

Var affine(Graph& g, Var x, Var w, Var b) {
  const Matrix& xv = g.value(x);
  const Matrix& wv = g.value(w);
  const Matrix& bv = g.value(b);
  if (xv.cols() != wv.cols()) throw std::invalid_argument("affine: input dim mismatch");
  if (bv.rows() != 1 || bv.cols() != wv.rows())
    throw std::invalid_argument("affine: bias must be 1 x out");
  Matrix out = xv * wv.transpose();
  out.rowwise() += bv.row(0);
  const bool needs = g.needs_grad(x) || g.needs_grad(w) || g.needs_grad(b);
  auto backward = [x, w, b](Graph& gg, int self) {
    const Matrix& gout = gg.node_grad(self);
    if (gg.needs_grad(x)) gg.accumulate(x.id, gout * gg.value(w));
    if (gg.needs_grad(w)) gg.accumulate(w.id, gout.transpose() * gg.value(x));
    if (gg.needs_grad(b)) gg.accumulate(b.id, gout.colwise().sum());
  };
  return g.add_node(std::move(out), needs, needs ? Graph::BackwardFn(backward) : nullptr);
}

Var elu(Graph& g, Var x) {
  return unary_op(
      g, x,
      [](const Matrix& v) -> Matrix {
        return v.unaryExpr([](double t) { return t >= 0 ? t : std::expm1(t); });
      },
      [](const Matrix& gout, const Matrix& v, const Matrix&) -> Matrix {
        return (gout.array() *
                v.unaryExpr([](double t) { return t >= 0 ? 1.0 : std::exp(t); }).array())
            .matrix();
      });
}

Var sigmoid(Graph& g, Var x) {
  return unary_op(
      g, x,
      [](const Matrix& v) -> Matrix {
        return v.unaryExpr([](double t) {
          if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
          const double e = std::exp(t);
          return e / (1.0 + e);
        });
      },
      [](const Matrix& gout, const Matrix&, const Matrix& out) -> Matrix {
        return (gout.array() * out.array() * (1.0 - out.array())).matrix();
      });
}

Var log_(Graph& g, Var x) {
  return unary_op(
      g, x, [](const Matrix& v) -> Matrix { return v.array().log().matrix(); },
      [](const Matrix& gout, const Matrix& v, const Matrix&) -> Matrix {
        return (gout.array() / v.array()).matrix();
      });
}

Var exp_(Graph& g, Var x) {
  return unary_op(
      g, x, [](const Matrix& v) -> Matrix { return v.array().exp().matrix(); },
      [](const Matrix& gout, const Matrix&, const Matrix& out) -> Matrix {
        return (gout.array() * out.array()).matrix();
      });
}

Var square(Graph& g, Var x) {
  return unary_op(
      g, x, [](const Matrix& v) -> Matrix { return v.array().square().matrix(); },
      [](const Matrix& gout, const Matrix& v, const Matrix&) -> Matrix {
        return (2.0 * gout.array() * v.array()).matrix();
      });
}

Var clamp(Graph& g, Var x, double lo, double hi) {
  return unary_op(
      g, x,
      [lo, hi](const Matrix& v) -> Matrix {
        return v.array().max(lo).min(hi).matrix();
      },
      [lo, hi](const Matrix& gout, const Matrix& v, const Matrix&) -> Matrix {
        return (gout.array() * ((v.array() > lo) && (v.array() < hi)).cast<double>())
            .matrix();
      });
}

Var sum(Graph& g, Var x) {
  Matrix out = Matrix::Constant(1, 1, g.value(x).sum());
  const bool needs = g.needs_grad(x);
  auto backward = [x](Graph& gg, int self) {
    const double s = gg.node_grad(self)(0, 0);
    gg.accumulate(x.id, Matrix::Constant(gg.value(x).rows(), gg.value(x).cols(), s));
  };
  return g.add_node(std::move(out), needs, needs ? Graph::BackwardFn(backward) : nullptr);
}

Var mean(Graph& g, Var x) {
  const double n = static_cast<double>(g.value(x).size());
  Matrix out = Matrix::Constant(1, 1, g.value(x).sum() / n);
  const bool needs = g.needs_grad(x);
  auto backward = [x, n](Graph& gg, int self) {
    const double s = gg.node_grad(self)(0, 0) / n;
    gg.accumulate(x.id, Matrix::Constant(gg.value(x).rows(), gg.value(x).cols(), s));
  };
  return g.add_node(std::move(out), needs, needs ? Graph::BackwardFn(backward) : nullptr);
}

Var concat_cols(Graph& g, Var a, Var b) {
  const Matrix& av = g.value(a);
  const Matrix& bv = g.value(b);
  if (av.rows() != bv.rows()) throw std::invalid_argument("concat_cols: row mismatch");
  Matrix out(av.rows(), av.cols() + bv.cols());
  out << av, bv;
  const bool needs = g.needs_grad(a) || g.needs_grad(b);
  auto backward = [a, b](Graph& gg, int self) {
    const Matrix& gout = gg.node_grad(self);
    const auto ac = gg.value(a).cols();
    if (gg.needs_grad(a)) gg.accumulate(a.id, gout.leftCols(ac));
    if (gg.needs_grad(b)) gg.accumulate(b.id, gout.rightCols(gout.cols() - ac));
  };
  return g.add_node(std::move(out), needs, needs ? Graph::BackwardFn(backward) : nullptr);
}

Var gather_rows(Graph& g, Var x, const std::vector<int>& rows) {
  const Matrix& xv = g.value(x);
  Matrix out(static_cast<Eigen::Index>(rows.size()), xv.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(k) = xv.row(rows[k]);
  const bool needs = g.needs_grad(x);
  auto backward = [x, rows](Graph& gg, int self) {
    const Matrix& gout = gg.node_grad(self);
    Matrix dx = Matrix::Zero(gg.value(x).rows(), gg.value(x).cols());
    for (std::size_t k = 0; k < rows.size(); ++k) dx.row(rows[k]) += gout.row(k);
    gg.accumulate(x.id, dx);
  };
  return g.add_node(std::move(out), needs, needs ? Graph::BackwardFn(backward) : nullptr);
}

Var select(Graph& g, Var x, int row, int col) {
  Matrix out = Matrix::Constant(1, 1, g.value(x)(row, col));
  const bool needs = g.needs_grad(x);
  auto backward = [x, row, col](Graph& gg, int self) {
    Matrix dx = Matrix::Zero(gg.value(x).rows(), gg.value(x).cols());
    dx(row, col) = gg.node_grad(self)(0, 0);
    gg.accumulate(x.id, dx);
  };
  return g.add_node(std::move(out), needs, needs ? Graph::BackwardFn(backward) : nullptr);
}

Var soft_rank(Graph& g, Var w_col, double epsilon) {
  const Matrix& wv = g.value(w_col);
  if (wv.cols() != 1) throw std::invalid_argument("soft_rank: expected a column vector");
  auto plan = std::make_shared<dpsw::detail::SoftRankPlan>(
      dpsw::detail::soft_rank_plan(wv.col(0), epsilon));
  Matrix out = plan->ranks;
  const bool needs = g.needs_grad(w_col);
  auto backward = [w_col, plan, epsilon](Graph& gg, int self) {
    const Vector upstream = gg.node_grad(self).col(0);
    gg.accumulate(w_col.id,
                  dpsw::detail::soft_rank_vjp_from_plan(*plan, epsilon, upstream));
  };
  return g.add_node(std::move(out), needs, needs ? Graph::BackwardFn(backward) : nullptr);
}

Var mmd_rbf(Graph& g, Var s0, Var s1, double bandwidth) {
  const Matrix& a = g.value(s0);
  const Matrix& b = g.value(s1);
  if (a.rows() == 0 || b.rows() == 0) throw std::invalid_argument("mmd_rbf: empty group");
  if (a.cols() != b.cols()) throw std::invalid_argument("mmd_rbf: feature dim mismatch");
  if (!(bandwidth > 0)) throw std::invalid_argument("mmd_rbf: bandwidth must be > 0");
  const double inv2h2 = 1.0 / (2.0 * bandwidth * bandwidth);

  auto kernel = [inv2h2](const Matrix& x, const Matrix& y) -> Matrix {
    const Vector xn = x.rowwise().squaredNorm();
    const Vector yn = y.rowwise().squaredNorm();
    Matrix d2 = (-2.0 * x * y.transpose());
    d2.colwise() += xn;
    d2.rowwise() += yn.transpose();
    return (-d2.array().max(0.0) * inv2h2).exp().matrix();
  };
  auto kaa = std::make_shared<Matrix>(kernel(a, a));
  auto kbb = std::make_shared<Matrix>(kernel(b, b));
  auto kab = std::make_shared<Matrix>(kernel(a, b));
  const double n0 = static_cast<double>(a.rows());
  const double n1 = static_cast<double>(b.rows());
  const double value =
      kaa->sum() / (n0 * n0) + kbb->sum() / (n1 * n1) - 2.0 * kab->sum() / (n0 * n1);

  const bool needs = g.needs_grad(s0) || g.needs_grad(s1);
  const double invh2 = 4.0 * inv2h2;  // 2/h^2: symmetric pairs count twice
  auto backward = [s0, s1, kaa, kbb, kab, n0, n1, invh2](Graph& gg, int self) {
    const double gout = gg.node_grad(self)(0, 0);
    const Matrix& a = gg.value(s0);
    const Matrix& b = gg.value(s1);
    if (gg.needs_grad(s0)) {
      // d/da_p = (2/h^2) [ (1/n0^2) sum_j kaa(p,j)(a_j - a_p)
      //                  - (1/(n0 n1)) sum_j kab(p,j)(b_j - a_p) ]
      Matrix da = (kaa->operator*(a) - kaa->rowwise().sum().asDiagonal() * a) / (n0 * n0);
      da -= (kab->operator*(b) - kab->rowwise().sum().asDiagonal() * a) / (n0 * n1);
      gg.accumulate(s0.id, (gout * invh2) * da);
    }
    if (gg.needs_grad(s1)) {
      Matrix db = (kbb->operator*(b) - kbb->rowwise().sum().asDiagonal() * b) / (n1 * n1);
      db -= (kab->transpose() * a - kab->colwise().sum().transpose().asDiagonal() * b) /
            (n0 * n1);
      gg.accumulate(s1.id, (gout * invh2) * db);
    }
  };
  return g.add_node(Matrix::Constant(1, 1, value), needs,
                    needs ? Graph::BackwardFn(backward) : nullptr);
}

}  // namespace dpsw::ad
