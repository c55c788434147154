#include "dpsw/gpd.hpp"

#include <cmath>
#include <stdexcept>

namespace dpsw {

TailSpec tail_size(int n) {
  if (n < 3) throw std::invalid_argument("tail_size: need n >= 3");
  const int by_fifth = n / 5;
  const int by_sqrt = static_cast<int>(std::floor(3.0 * std::sqrt(static_cast<double>(n))));
  int m = std::min(by_fifth, by_sqrt);
  if (m < 1) m = 1;
  return TailSpec{n, m};
}

double gpd_cdf(double w, const GPDParams& p) {
  if (!(p.sigma > 0)) throw std::invalid_argument("gpd_cdf: sigma must be > 0");
  if (w < p.mu) throw std::domain_error("gpd_cdf: w below support");
  if (std::abs(p.xi) < kXiZeroTol) return 1.0 - std::exp(-(w - p.mu) / p.sigma);
  const double t = 1.0 + p.xi * (w - p.mu) / p.sigma;
  if (t < 0) throw std::domain_error("gpd_cdf: w above support for xi < 0");
  return 1.0 - std::pow(t, -1.0 / p.xi);
}

double gpd_quantile(double p, const GPDParams& params) {
  if (!(params.sigma > 0)) throw std::invalid_argument("gpd_quantile: sigma must be > 0");
  if (!(p >= 0.0 && p < 1.0)) throw std::domain_error("gpd_quantile: p must lie in [0, 1)");
  if (std::abs(params.xi) < kXiZeroTol)
    return params.mu - params.sigma * std::log1p(-p);
  return params.mu + params.sigma / params.xi * (std::pow(1.0 - p, -params.xi) - 1.0);
}

namespace detail {

std::optional<GPDParams> pwm_from_alphas(double mu, double alpha0, double alpha1) {
  const double denom = alpha0 - 2.0 * alpha1;
  if (alpha0 <= kDegenerateTol || denom <= kDegenerateTol) return std::nullopt;
  GPDParams out;
  out.mu = mu;
  out.sigma = 2.0 * alpha0 * alpha1 / denom;
  out.xi = 2.0 - alpha0 / denom;
  if (!(out.sigma > 0) || !std::isfinite(out.sigma) || !std::isfinite(out.xi))
    return std::nullopt;
  out.reliable = out.xi <= kReliabilityThreshold;
  return out;
}

int soft_mu_index(const Vector& ranks, const TailSpec& spec) {
  const int n = static_cast<int>(ranks.size());
  int best = -1;
  for (int i = 0; i < n; ++i) {
    if (ranks[i] <= static_cast<double>(spec.n - spec.m) &&
        (best < 0 || ranks[i] > ranks[best]))
      best = i;
  }
  if (best >= 0) return best;
  // No rank qualifies (heavily tied inputs): fall back to the smallest rank.
  int arg_min = 0;
  for (int i = 1; i < n; ++i)
    if (ranks[i] < ranks[arg_min]) arg_min = i;
  return arg_min;
}

}  // namespace detail

std::optional<GPDParams> fit_pwm_hard(const Vector& tail_ascending, double mu_hat,
                                      int n, int m) {
  if (m < 1 || m >= n) throw std::invalid_argument("fit_pwm_hard: need 0 < m < n");
  if (tail_ascending.size() != m)
    throw std::invalid_argument("fit_pwm_hard: tail must hold exactly m entries");
  double alpha0 = 0.0, alpha1 = 0.0;
  for (int i = 0; i < m; ++i) {
    const double e = tail_ascending[i] - mu_hat;
    if (e < 0 || !std::isfinite(e))
      throw std::invalid_argument("fit_pwm_hard: tail entries must be finite and >= mu_hat");
    if (i > 0 && tail_ascending[i] < tail_ascending[i - 1])
      throw std::invalid_argument("fit_pwm_hard: tail must be ascending");
    alpha0 += e;
    alpha1 += (static_cast<double>(m - 1 - i) / m) * e;
  }
  alpha0 /= m;
  alpha1 /= m;
  return detail::pwm_from_alphas(mu_hat, alpha0, alpha1);
}

std::optional<GPDParams> fit_pwm_soft(const Vector& w, const RankVector& r,
                                      const TailSpec& spec, double kappa) {
  const int n = static_cast<int>(w.size());
  if (r.values.size() != n) throw std::invalid_argument("fit_pwm_soft: rank length mismatch");
  if (!(kappa > 0)) throw std::invalid_argument("fit_pwm_soft: kappa must be > 0");
  if (spec.m < 1 || spec.m >= spec.n) throw std::invalid_argument("fit_pwm_soft: bad tail spec");

  const double center = detail::gate_center(spec);
  const Vector gates =
      (1.0 / (1.0 + (-kappa * (r.values.array() - center)).exp())).matrix();
  const double m_soft = gates.sum();
  if (m_soft < kSoftTailMassTol) return std::nullopt;  // no tail mass under the gates

  const double mu = w[detail::soft_mu_index(r.values, spec)];
  const Eigen::ArrayXd exceed = w.array() - mu;
  const double alpha0 = (gates.array() * exceed).sum() / m_soft;
  const double alpha1 =
      (gates.array() * (static_cast<double>(spec.n) - r.values.array()) * exceed).sum() /
      (m_soft * m_soft);
  return detail::pwm_from_alphas(mu, alpha0, alpha1);
}

}  // namespace dpsw
