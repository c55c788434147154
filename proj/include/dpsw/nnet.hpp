#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "dpsw/common.hpp"
#include "dpsw/graph.hpp"

namespace dpsw {

enum class Activation { elu, sigmoid, identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct DenseLayer {
  Matrix W;  // [out x in]
  Matrix b;  // [1 x out]
  Activation act = Activation::elu;
};

// Three-layer feed-forward block; instances are rows of the input.
struct MLP {
  std::vector<DenseLayer> layers;
  int in_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.front().W.cols()); }
  int out_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.back().W.rows()); }
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) entries; fan_in = cols.
Matrix init_params(int rows, int cols, std::mt19937_64& rng);

// dims = {in, h1, ..., out}; acts has dims.size()-1 entries. Biases start at zero.
MLP make_mlp(const std::vector<int>& dims, const std::vector<Activation>& acts,
             std::mt19937_64& rng);

Matrix mlp_forward(const MLP& m, const Matrix& x);

// Graph twin of mlp_forward. When `prefix` is nonempty the layer matrices are
// registered as trainable params "<prefix>.W1", "<prefix>.b1", ...; otherwise
// they enter as constants (frozen).
ad::Var mlp_forward(ad::Graph& g, const MLP& m, ad::Var x, const std::string& prefix);

// Biased V-statistic MMD^2 with Gaussian kernel exp(-|x-y|^2 / (2 h^2)).
double mmd_rbf(const Matrix& s0, const Matrix& s1, double bandwidth);

// Median pairwise Euclidean distance, used to freeze the MMD bandwidth.
double median_pairwise_distance(const Matrix& x);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment estimates per parameter, shared step counter.
struct AdamState {
  std::map<std::string, Matrix> m;
  std::map<std::string, Matrix> v;
  long t = 0;
};

// One bias-corrected adaptive-moment update over every gradient in `grads`.
// Parameters without a gradient entry are left untouched.
void adam_step(std::map<std::string, Matrix*>& params,
               const std::map<std::string, Matrix>& grads, AdamState& state,
               const AdamConfig& cfg);

}  // namespace dpsw
