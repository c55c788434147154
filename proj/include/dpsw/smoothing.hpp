#pragma once

#include <optional>
#include <string>
#include <utility>

#include "dpsw/common.hpp"
#include "dpsw/gpd.hpp"

namespace dpsw {

enum class WeightScheme {
  raw,
  truncated,
  normalized,
  pareto_hard,
  pareto_diff,
  pareto_diff_normalized,
  ignore,  // 0/1 mask over extreme propensities; the one scheme with zero entries
};

std::string to_string(WeightScheme s);
WeightScheme weight_scheme_from_string(const std::string& s);

struct WeightDiagnostics {
  std::optional<GPDParams> gpd;  // tail fit, when smoothing ran
  bool degenerate_fallback = false;
};

// Per-instance importance weights plus provenance.
struct WeightVector {
  Vector values;
  WeightScheme scheme = WeightScheme::raw;
  std::optional<WeightDiagnostics> diagnostics;
  int n() const { return static_cast<int>(values.size()); }
};

// w_i = 1 + P(A=a_i)/P(A=1-a_i) * (1/pi_a_i - 1), with pi_a_i the propensity
// of the received treatment and P(A=1) = p_treated frozen from the training
// split. pi_a entries outside (0,1) violate positivity.
WeightVector ipw_weights(const Vector& pi_a, const IntVector& a, double p_treated);

// Elementwise clamp to [lower, upper].
WeightVector truncate(const WeightVector& w, double lower, double upper);

// Divide each weight by the mean weight of its treatment group.
WeightVector self_normalize(const WeightVector& w, const IntVector& a);

// Smooth step 1/(1 + exp(-kappa (i - j))).
double sigmoid_gate(double i, double j, double kappa);

// Sorted-tail Pareto smoothing: the m = tail_size(n) largest weights are
// replaced by mid-quantiles of the PWM-fitted GPD; everything else is left
// bit-identical. A degenerate fit returns the input unchanged with the
// fallback flag set, never an error.
WeightVector pareto_smooth_hard(const WeightVector& w);

// Differentiable Pareto smoothing: soft ranks gate the tail, the GPD is
// fitted through fit_pwm_soft, and every weight becomes
//   gate_i * quantile(clamp(p_i)) + (1 - gate_i) * w_i,
// with the quantile argument capped at 1 - 1/(2m) to keep it finite.
// Matches pareto_smooth_hard in the kappa -> inf, epsilon -> 0 limit.
WeightVector pareto_smooth_diff(const WeightVector& w, double epsilon, double kappa);

// Scheme parameters for apply_scheme. `propensity` holds per-instance
// P(A=1|x), required by the ignore scheme.
struct SchemeConfig {
  double epsilon = 0.1;
  double kappa = 10.0;
  double p_treated = 0.5;
  std::optional<Vector> propensity;
};

// Dispatch over the ablation schemes. Self-normalization runs after
// smoothing for pareto_diff_normalized.
WeightVector apply_scheme(const WeightVector& w_raw, const IntVector& a,
                          WeightScheme scheme, const SchemeConfig& config);

// Truncation thresholds for treatment group a: the ipw_weights formula
// evaluated at propensities 0.9 and 0.1 (smaller value first).
std::pair<double, double> crump_thresholds(int a, double p_treated);

inline constexpr double kIgnorePropensityLow = 0.1;
inline constexpr double kIgnorePropensityHigh = 0.9;

}  // namespace dpsw
