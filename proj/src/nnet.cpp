#include "dpsw/nnet.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dpsw {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::elu: return "elu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::identity: return "identity";
  }
  return "unknown";
}

Activation activation_from_string(const std::string& s) {
  if (s == "elu") return Activation::elu;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "identity") return Activation::identity;
  throw ConfigError("unknown activation: " + s);
}

Matrix init_params(int rows, int cols, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix out(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out(r, c) = dist(rng);
  return out;
}

MLP make_mlp(const std::vector<int>& dims, const std::vector<Activation>& acts,
             std::mt19937_64& rng) {
  if (dims.size() < 2 || acts.size() != dims.size() - 1)
    throw std::invalid_argument("make_mlp: dims/activations mismatch");
  MLP m;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    DenseLayer layer;
    layer.W = init_params(dims[l + 1], dims[l], rng);
    layer.b = Matrix::Zero(1, dims[l + 1]);
    layer.act = acts[l];
    m.layers.push_back(std::move(layer));
  }
  return m;
}

namespace {

Matrix apply_activation(Matrix z, Activation act) {
  switch (act) {
    case Activation::identity:
      return z;
    case Activation::elu:
      return z.unaryExpr([](double t) { return t >= 0 ? t : std::expm1(t); });
    case Activation::sigmoid:
      return z.unaryExpr([](double t) {
        if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
        const double e = std::exp(t);
        return e / (1.0 + e);
      });
  }
  return z;
}

}  // namespace

Matrix mlp_forward(const MLP& m, const Matrix& x) {
  if (m.layers.empty()) throw std::invalid_argument("mlp_forward: empty model");
  if (x.cols() != m.in_dim()) throw std::invalid_argument("mlp_forward: input dim mismatch");
  Matrix h = x;
  for (const auto& layer : m.layers) {
    Matrix z = h * layer.W.transpose();
    z.rowwise() += layer.b.row(0);
    h = apply_activation(std::move(z), layer.act);
  }
  return h;
}

ad::Var mlp_forward(ad::Graph& g, const MLP& m, ad::Var x, const std::string& prefix) {
  ad::Var h = x;
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const auto& layer = m.layers[l];
    ad::Var w, b;
    if (prefix.empty()) {
      w = g.constant(layer.W);
      b = g.constant(layer.b);
    } else {
      w = g.param(prefix + ".W" + std::to_string(l + 1), layer.W);
      b = g.param(prefix + ".b" + std::to_string(l + 1), layer.b);
    }
    h = ad::affine(g, h, w, b);
    switch (layer.act) {
      case Activation::identity: break;
      case Activation::elu: h = ad::elu(g, h); break;
      case Activation::sigmoid: h = ad::sigmoid(g, h); break;
    }
  }
  return h;
}

double mmd_rbf(const Matrix& s0, const Matrix& s1, double bandwidth) {
  if (s0.rows() == 0 || s1.rows() == 0) throw std::invalid_argument("mmd_rbf: empty group");
  if (s0.cols() != s1.cols()) throw std::invalid_argument("mmd_rbf: feature dim mismatch");
  if (!(bandwidth > 0)) throw std::invalid_argument("mmd_rbf: bandwidth must be > 0");
  const double inv2h2 = 1.0 / (2.0 * bandwidth * bandwidth);
  auto mean_kernel = [inv2h2](const Matrix& x, const Matrix& y) {
    const Vector xn = x.rowwise().squaredNorm();
    const Vector yn = y.rowwise().squaredNorm();
    Matrix d2 = -2.0 * x * y.transpose();
    d2.colwise() += xn;
    d2.rowwise() += yn.transpose();
    return (-d2.array().max(0.0) * inv2h2).exp().mean();
  };
  return mean_kernel(s0, s0) + mean_kernel(s1, s1) - 2.0 * mean_kernel(s0, s1);
}

double median_pairwise_distance(const Matrix& x) {
  const int n = static_cast<int>(x.rows());
  if (n < 2) return 0.0;
  std::vector<double> dist;
  dist.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) dist.push_back((x.row(i) - x.row(j)).norm());
  std::nth_element(dist.begin(), dist.begin() + dist.size() / 2, dist.end());
  return dist[dist.size() / 2];
}

void adam_step(std::map<std::string, Matrix*>& params,
               const std::map<std::string, Matrix>& grads, AdamState& state,
               const AdamConfig& cfg) {
  ++state.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (auto& [name, param] : params) {
    const auto it = grads.find(name);
    if (it == grads.end()) continue;
    const Matrix& grad = it->second;
    Matrix& m = state.m.try_emplace(name, Matrix::Zero(param->rows(), param->cols()))
                    .first->second;
    Matrix& v = state.v.try_emplace(name, Matrix::Zero(param->rows(), param->cols()))
                    .first->second;
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
    param->array() -=
        cfg.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.eps);
  }
}

}  // namespace dpsw
