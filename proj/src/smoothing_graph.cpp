#include "dpsw/smoothing_graph.hpp"

#include <cmath>
#include <stdexcept>

#include "dpsw/gpd.hpp"

namespace dpsw {

SmoothGraphResult build_pareto_diff(ad::Graph& g, ad::Var w, double epsilon,
                                    double kappa) {
  const int n = static_cast<int>(g.value(w).rows());
  if (g.value(w).cols() != 1)
    throw std::invalid_argument("build_pareto_diff: expected a column vector");
  if (n < 3) throw std::invalid_argument("build_pareto_diff: need n >= 3");
  const TailSpec spec = tail_size(n);

  SmoothGraphResult res;
  res.ranks = ad::soft_rank(g, w, epsilon);
  const double center = detail::gate_center(spec);
  const ad::Var gates =
      ad::sigmoid(g, ad::cmul(g, ad::cadd(g, res.ranks, -center), kappa));
  const ad::Var m_soft = ad::sum(g, gates);

  auto passthrough = [&]() {
    res.weights = w;
    res.diagnostics.degenerate_fallback = true;
    return res;
  };
  if (g.value(m_soft)(0, 0) < kSoftTailMassTol) return passthrough();

  const int mu_idx = detail::soft_mu_index(g.value(res.ranks).col(0), spec);
  const ad::Var mu = ad::select(g, w, mu_idx, 0);
  const ad::Var exceed = ad::sub(g, w, mu);
  const ad::Var alpha0 = ad::div(g, ad::sum(g, ad::mul(g, gates, exceed)), m_soft);
  const ad::Var n_minus_r = ad::cadd(g, ad::cmul(g, res.ranks, -1.0), spec.n);
  const ad::Var alpha1 =
      ad::div(g, ad::sum(g, ad::mul(g, ad::mul(g, gates, n_minus_r), exceed)),
              ad::mul(g, m_soft, m_soft));
  const ad::Var denom = ad::sub(g, alpha0, ad::cmul(g, alpha1, 2.0));

  const double a0 = g.value(alpha0)(0, 0);
  const double dn = g.value(denom)(0, 0);
  if (a0 <= kDegenerateTol || dn <= kDegenerateTol) return passthrough();

  const ad::Var sigma = ad::div(g, ad::cmul(g, ad::mul(g, alpha0, alpha1), 2.0), denom);
  const ad::Var xi = ad::cadd(g, ad::cmul(g, ad::div(g, alpha0, denom), -1.0), 2.0);
  const double sigma_v = g.value(sigma)(0, 0);
  const double xi_v = g.value(xi)(0, 0);
  if (!(sigma_v > 0) || !std::isfinite(sigma_v) || !std::isfinite(xi_v))
    return passthrough();

  res.sigma = sigma;
  res.xi = xi;
  res.diagnostics.gpd =
      GPDParams{g.value(mu)(0, 0), sigma_v, xi_v, xi_v <= kReliabilityThreshold};

  const ad::Var p = ad::clamp(
      g, ad::cmul(g, ad::cadd(g, res.ranks, -(spec.n - spec.m) - 0.5), 1.0 / spec.m),
      0.0, 1.0 - 0.5 / spec.m);
  const ad::Var one_minus_p = ad::cadd(g, ad::cmul(g, p, -1.0), 1.0);
  ad::Var quantile;
  if (std::abs(xi_v) < kXiZeroTol) {
    quantile = ad::sub(g, mu, ad::mul(g, sigma, ad::log_(g, one_minus_p)));
  } else {
    // (1-p)^(-xi) through exp/log; 1-p is bounded away from zero by the cap.
    const ad::Var pw =
        ad::exp_(g, ad::mul(g, ad::cmul(g, xi, -1.0), ad::log_(g, one_minus_p)));
    quantile = ad::add(g, mu, ad::mul(g, ad::div(g, sigma, xi), ad::cadd(g, pw, -1.0)));
  }
  const ad::Var off_gates = ad::cadd(g, ad::cmul(g, gates, -1.0), 1.0);
  res.weights =
      ad::add(g, ad::mul(g, gates, quantile), ad::mul(g, off_gates, w));
  return res;
}

ad::Var build_ipw_weights(ad::Graph& g, ad::Var pi, const IntVector& a,
                          double p_treated) {
  const int n = static_cast<int>(g.value(pi).rows());
  if (a.size() != n) throw std::invalid_argument("build_ipw_weights: length mismatch");
  if (!(p_treated > 0 && p_treated < 1))
    throw std::invalid_argument("build_ipw_weights: p_treated must lie in (0,1)");
  Matrix mask1(n, 1), ratio(n, 1);
  const double odds1 = p_treated / (1.0 - p_treated);
  for (int i = 0; i < n; ++i) {
    mask1(i, 0) = a[i] == 1 ? 1.0 : 0.0;
    ratio(i, 0) = a[i] == 1 ? odds1 : 1.0 / odds1;
  }
  const ad::Var m1 = g.constant(mask1);
  const ad::Var m0 = g.constant(Matrix::Ones(n, 1) - mask1);
  // pi_a = a pi + (1-a)(1-pi)
  const ad::Var pi_a = ad::add(g, ad::mul(g, m1, pi),
                               ad::mul(g, m0, ad::cadd(g, ad::cmul(g, pi, -1.0), 1.0)));
  const ad::Var inv_term =
      ad::cadd(g, ad::div(g, g.constant(Matrix::Ones(n, 1)), pi_a), -1.0);
  return ad::cadd(g, ad::mul(g, g.constant(ratio), inv_term), 1.0);
}

ad::Var build_group_normalize(ad::Graph& g, ad::Var w, const IntVector& a) {
  const int n = static_cast<int>(g.value(w).rows());
  if (a.size() != n) throw std::invalid_argument("build_group_normalize: length mismatch");
  std::vector<int> idx0, idx1;
  for (int i = 0; i < n; ++i) (a[i] == 1 ? idx1 : idx0).push_back(i);
  Matrix mask1 = Matrix::Zero(n, 1);
  for (int i : idx1) mask1(i, 0) = 1.0;
  ad::Var divisor;
  bool first = true;
  if (!idx1.empty()) {
    const ad::Var m1 = ad::mean(g, ad::gather_rows(g, w, idx1));
    divisor = ad::mul(g, g.constant(mask1), m1);
    first = false;
  }
  if (!idx0.empty()) {
    const ad::Var m0 = ad::mean(g, ad::gather_rows(g, w, idx0));
    const ad::Var part = ad::mul(g, g.constant(Matrix::Ones(n, 1) - mask1), m0);
    divisor = first ? part : ad::add(g, divisor, part);
  }
  return ad::div(g, w, divisor);
}

}  // namespace dpsw
