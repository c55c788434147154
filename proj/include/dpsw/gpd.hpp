#pragma once

#include <optional>

#include "dpsw/common.hpp"
#include "dpsw/softrank.hpp"

namespace dpsw {

// Generalized Pareto parameters. `reliable` records whether the fitted shape
// stayed at or below the diagnostic threshold; it is advisory only.
struct GPDParams {
  double mu = 0.0;
  double sigma = 1.0;
  double xi = 0.0;
  bool reliable = true;
};

// Tail layout for Pareto smoothing: m replaced weights out of n.
struct TailSpec {
  int n = 0;
  int m = 0;
};

inline constexpr double kXiZeroTol = 1e-12;           // exponential-branch switch
inline constexpr double kDegenerateTol = 1e-12;       // PWM degeneracy tolerance
inline constexpr double kReliabilityThreshold = 0.7;  // shape diagnostic cutoff
inline constexpr double kSoftTailMassTol = 1e-8;      // minimum soft tail mass

// m = min{floor(n/5), floor(3 sqrt(n))}, clamped to >= 1. Requires n >= 3.
TailSpec tail_size(int n);

// GPD distribution function; the xi = 0 (exponential) branch is used when
// |xi| < kXiZeroTol. w must lie in the support.
double gpd_cdf(double w, const GPDParams& p);

// Inverse of gpd_cdf for p in [0, 1).
double gpd_quantile(double p, const GPDParams& params);

// Probability-weighted-moment fit to the m largest weights.
//
// tail_ascending holds exactly m entries, each >= mu_hat, where mu_hat is the
// (m+1)-th largest weight. The survival coefficient for the i-th smallest
// tail entry is (m - i)/m; the printed form without the 1/m normalization
// does not recover the generating parameters, so the normalized form is used.
// Returns nullopt for degenerate tails (near-constant, or sigma <= 0).
std::optional<GPDParams> fit_pwm_hard(const Vector& tail_ascending, double mu_hat,
                                      int n, int m);

// Differentiable-rank counterpart of fit_pwm_hard: tail membership comes from
// sigmoid gates over the soft rank r instead of sorting. The location index
// (largest rank <= n - m, or the smallest rank if none qualifies) is selected
// on rank values and treated as locally constant. Converges to fit_pwm_hard
// as kappa -> inf and r -> hard ranks.
std::optional<GPDParams> fit_pwm_soft(const Vector& w, const RankVector& r,
                                      const TailSpec& spec, double kappa);

namespace detail {

// Gate threshold sits halfway between the largest kept rank (n - m) and the
// smallest replaced rank (n - m + 1) so that integer ranks saturate to exact
// 0/1 gates as kappa grows.
inline double gate_center(const TailSpec& spec) { return spec.n - spec.m + 0.5; }

// Index of the weight acting as soft location parameter, per the rule above.
int soft_mu_index(const Vector& ranks, const TailSpec& spec);

// sigma/xi from the two weighted moments; nullopt when degenerate.
std::optional<GPDParams> pwm_from_alphas(double mu, double alpha0, double alpha1);

}  // namespace detail
}  // namespace dpsw
