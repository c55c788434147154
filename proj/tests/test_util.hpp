#pragma once

#include <functional>
#include <map>
#include <random>

#include "dpsw/common.hpp"

namespace testutil {

using dpsw::Matrix;
using dpsw::Vector;

inline double rel_err(double got, double want) {
  const double scale = std::max({std::abs(got), std::abs(want), 1e-10});
  return std::abs(got - want) / scale;
}

// Central finite difference of f along dir at x.
inline double directional_fd(const std::function<double(const Vector&)>& f,
                             const Vector& x, const Vector& dir, double h) {
  return (f(x + h * dir) - f(x - h * dir)) / (2.0 * h);
}

inline Vector random_vector(int n, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = dist(rng);
  return v;
}

inline Vector random_lognormal(int n, std::mt19937_64& rng, double sigma = 1.0) {
  std::normal_distribution<double> dist(0.0, sigma);
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = std::exp(dist(rng));
  return v;
}

inline Matrix random_matrix(int r, int c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Matrix m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = dist(rng);
  return m;
}

inline double min_gap(const Vector& w) {
  Vector s = w;
  std::sort(s.data(), s.data() + s.size());
  double gap = std::numeric_limits<double>::infinity();
  for (int i = 1; i < s.size(); ++i) gap = std::min(gap, s[i] - s[i - 1]);
  return gap;
}

// Directional derivative of a named-gradient map against a same-shaped
// direction map: sum of <grads[k], dir[k]>.
inline double grad_dot(const std::map<std::string, Matrix>& grads,
                       const std::map<std::string, Matrix>& dir) {
  double acc = 0.0;
  for (const auto& [name, g] : grads) {
    const auto it = dir.find(name);
    if (it != dir.end()) acc += (g.array() * it->second.array()).sum();
  }
  return acc;
}

}  // namespace testutil
