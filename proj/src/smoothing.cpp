#include "dpsw/smoothing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dpsw/softrank.hpp"

namespace dpsw {

std::string to_string(WeightScheme s) {
  switch (s) {
    case WeightScheme::raw: return "raw";
    case WeightScheme::truncated: return "truncated";
    case WeightScheme::normalized: return "normalized";
    case WeightScheme::pareto_hard: return "pareto_hard";
    case WeightScheme::pareto_diff: return "pareto_diff";
    case WeightScheme::pareto_diff_normalized: return "pareto_diff_normalized";
    case WeightScheme::ignore: return "ignore";
  }
  return "unknown";
}

WeightScheme weight_scheme_from_string(const std::string& s) {
  if (s == "raw") return WeightScheme::raw;
  if (s == "truncated") return WeightScheme::truncated;
  if (s == "normalized") return WeightScheme::normalized;
  if (s == "pareto_hard") return WeightScheme::pareto_hard;
  if (s == "pareto_diff") return WeightScheme::pareto_diff;
  if (s == "pareto_diff_normalized") return WeightScheme::pareto_diff_normalized;
  if (s == "ignore") return WeightScheme::ignore;
  throw ConfigError("unknown weight scheme: " + s);
}

WeightVector ipw_weights(const Vector& pi_a, const IntVector& a, double p_treated) {
  const int n = static_cast<int>(pi_a.size());
  if (a.size() != n) throw std::invalid_argument("ipw_weights: length mismatch");
  if (!(p_treated > 0 && p_treated < 1))
    throw std::invalid_argument("ipw_weights: p_treated must lie in (0,1)");
  WeightVector out;
  out.values.resize(n);
  const double odds1 = p_treated / (1.0 - p_treated);
  for (int i = 0; i < n; ++i) {
    if (a[i] != 0 && a[i] != 1) throw std::invalid_argument("ipw_weights: a must be 0/1");
    const double p = pi_a[i];
    if (!(p > 0 && p < 1))
      throw std::domain_error("ipw_weights: positivity violation at index " +
                              std::to_string(i));
    const double ratio = (a[i] == 1) ? odds1 : 1.0 / odds1;
    out.values[i] = 1.0 + ratio * (1.0 / p - 1.0);
  }
  out.scheme = WeightScheme::raw;
  return out;
}

WeightVector truncate(const WeightVector& w, double lower, double upper) {
  if (!(lower > 0) || lower > upper)
    throw std::invalid_argument("truncate: need 0 < lower <= upper");
  WeightVector out = w;
  out.values = w.values.cwiseMax(lower).cwiseMin(upper);
  out.scheme = WeightScheme::truncated;
  return out;
}

WeightVector self_normalize(const WeightVector& w, const IntVector& a) {
  const int n = w.n();
  if (a.size() != n) throw std::invalid_argument("self_normalize: length mismatch");
  if (n == 0) throw std::invalid_argument("self_normalize: empty group");
  double sum[2] = {0, 0};
  int count[2] = {0, 0};
  for (int i = 0; i < n; ++i) {
    sum[a[i]] += w.values[i];
    ++count[a[i]];
  }
  WeightVector out = w;
  for (int i = 0; i < n; ++i) {
    const double mean = sum[a[i]] / count[a[i]];
    out.values[i] = w.values[i] / mean;
  }
  out.scheme = (w.scheme == WeightScheme::pareto_diff)
                   ? WeightScheme::pareto_diff_normalized
                   : WeightScheme::normalized;
  return out;
}

double sigmoid_gate(double i, double j, double kappa) {
  if (!(kappa > 0)) throw std::invalid_argument("sigmoid_gate: kappa must be > 0");
  return 1.0 / (1.0 + std::exp(-kappa * (i - j)));
}

WeightVector pareto_smooth_hard(const WeightVector& w) {
  const int n = w.n();
  if (n < 3) throw std::invalid_argument("pareto_smooth_hard: need n >= 3");
  if (!w.values.allFinite())
    throw std::invalid_argument("pareto_smooth_hard: non-finite weight");
  const TailSpec spec = tail_size(n);

  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int p, int q) { return w.values[p] < w.values[q]; });

  const double mu_hat = w.values[idx[n - spec.m - 1]];
  Vector tail(spec.m);
  for (int k = 0; k < spec.m; ++k) tail[k] = w.values[idx[n - spec.m + k]];

  WeightVector out = w;
  out.scheme = WeightScheme::pareto_hard;
  out.diagnostics = WeightDiagnostics{};
  const auto fit = fit_pwm_hard(tail, mu_hat, n, spec.m);
  if (!fit) {
    out.diagnostics->degenerate_fallback = true;
    return out;
  }
  out.diagnostics->gpd = *fit;
  for (int k = 1; k <= spec.m; ++k)
    out.values[idx[n - spec.m + k - 1]] = gpd_quantile((k - 0.5) / spec.m, *fit);
  return out;
}

WeightVector pareto_smooth_diff(const WeightVector& w, double epsilon, double kappa) {
  const int n = w.n();
  if (n < 3) throw std::invalid_argument("pareto_smooth_diff: need n >= 3");
  if (!w.values.allFinite())
    throw std::invalid_argument("pareto_smooth_diff: non-finite weight");
  if (!(epsilon > 0) || !(kappa > 0))
    throw std::invalid_argument("pareto_smooth_diff: epsilon and kappa must be > 0");
  const TailSpec spec = tail_size(n);
  const RankVector r = soft_rank(w.values, epsilon);

  WeightVector out = w;
  out.scheme = WeightScheme::pareto_diff;
  out.diagnostics = WeightDiagnostics{};
  const auto fit = fit_pwm_soft(w.values, r, spec, kappa);
  if (!fit) {
    out.diagnostics->degenerate_fallback = true;
    return out;
  }
  out.diagnostics->gpd = *fit;

  const double center = detail::gate_center(spec);
  const double p_cap = 1.0 - 0.5 / spec.m;
  for (int i = 0; i < n; ++i) {
    const double gate = sigmoid_gate(r.values[i], center, kappa);
    const double p_raw = (r.values[i] - (spec.n - spec.m) - 0.5) / spec.m;
    const double p = std::clamp(p_raw, 0.0, p_cap);
    out.values[i] = gate * gpd_quantile(p, *fit) + (1.0 - gate) * w.values[i];
  }
  return out;
}

std::pair<double, double> crump_thresholds(int a, double p_treated) {
  auto weight_at = [&](double propensity) {
    const double pi_a = (a == 1) ? propensity : 1.0 - propensity;
    const double odds =
        (a == 1) ? p_treated / (1.0 - p_treated) : (1.0 - p_treated) / p_treated;
    return 1.0 + odds * (1.0 / pi_a - 1.0);
  };
  const double w_low = weight_at(kIgnorePropensityHigh);
  const double w_high = weight_at(kIgnorePropensityLow);
  return {std::min(w_low, w_high), std::max(w_low, w_high)};
}

WeightVector apply_scheme(const WeightVector& w_raw, const IntVector& a,
                          WeightScheme scheme, const SchemeConfig& config) {
  switch (scheme) {
    case WeightScheme::raw:
      return w_raw;
    case WeightScheme::normalized:
      return self_normalize(w_raw, a);
    case WeightScheme::truncated: {
      WeightVector out = w_raw;
      for (int i = 0; i < out.n(); ++i) {
        const auto [lo, hi] = crump_thresholds(a[i], config.p_treated);
        out.values[i] = std::clamp(out.values[i], lo, hi);
      }
      out.scheme = WeightScheme::truncated;
      return out;
    }
    case WeightScheme::pareto_hard:
      return pareto_smooth_hard(w_raw);
    case WeightScheme::pareto_diff:
      return pareto_smooth_diff(w_raw, config.epsilon, config.kappa);
    case WeightScheme::pareto_diff_normalized:
      return self_normalize(pareto_smooth_diff(w_raw, config.epsilon, config.kappa), a);
    case WeightScheme::ignore: {
      if (!config.propensity)
        throw ConfigError("apply_scheme: ignore scheme needs per-instance propensities");
      if (config.propensity->size() != w_raw.n())
        throw std::invalid_argument("apply_scheme: propensity length mismatch");
      WeightVector out = w_raw;
      for (int i = 0; i < out.n(); ++i) {
        const double pi = (*config.propensity)[i];
        out.values[i] =
            (pi >= kIgnorePropensityLow && pi <= kIgnorePropensityHigh) ? 1.0 : 0.0;
      }
      out.scheme = WeightScheme::ignore;
      return out;
    }
  }
  throw ConfigError("apply_scheme: unknown scheme");
}

}  // namespace dpsw
