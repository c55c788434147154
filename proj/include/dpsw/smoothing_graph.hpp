#pragma once

#include <optional>

#include "dpsw/graph.hpp"
#include "dpsw/smoothing.hpp"

namespace dpsw {

// Graph-valued twin of pareto_smooth_diff. `weights` is the n x 1 output
// node; on a degenerate fit it is the input node itself and the diagnostics
// carry the fallback flag. sigma/xi expose the fitted 1x1 nodes so gradients
// of the fit itself can be inspected.
struct SmoothGraphResult {
  ad::Var weights;
  ad::Var ranks;
  std::optional<ad::Var> sigma;
  std::optional<ad::Var> xi;
  WeightDiagnostics diagnostics;
};

SmoothGraphResult build_pareto_diff(ad::Graph& g, ad::Var w, double epsilon,
                                    double kappa);

// Importance weights (factual plus counterfactual density ratio) from a
// propensity node holding a column of P(A=1|x) values.
ad::Var build_ipw_weights(ad::Graph& g, ad::Var pi, const IntVector& a,
                          double p_treated);

// Within-group self-normalization, differentiable through the group means.
ad::Var build_group_normalize(ad::Graph& g, ad::Var w, const IntVector& a);

}  // namespace dpsw
