#include "dpsw/softrank.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace dpsw {

namespace {

void require_finite(const Vector& w, const char* who) {
  if (w.size() < 1) throw std::invalid_argument(std::string(who) + ": empty input");
  if (!w.allFinite()) throw std::invalid_argument(std::string(who) + ": non-finite entry");
}

// PAV for argmin_{v_1 >= ... >= v_n} sum (v_i - u_i)^2. Returns block means
// expanded to full length; block_start gets the first index of every block
// plus a sentinel n.
Vector pav_nonincreasing(const Vector& u, std::vector<int>& block_start) {
  const int n = static_cast<int>(u.size());
  std::vector<double> mean(n), weight(n);
  std::vector<int> start(n);
  int top = -1;  // stack of merged blocks
  for (int i = 0; i < n; ++i) {
    ++top;
    mean[top] = u[i];
    weight[top] = 1.0;
    start[top] = i;
    // merge while the nonincreasing constraint is violated
    while (top > 0 && mean[top - 1] < mean[top]) {
      const double w = weight[top - 1] + weight[top];
      mean[top - 1] = (weight[top - 1] * mean[top - 1] + weight[top] * mean[top]) / w;
      weight[top - 1] = w;
      --top;
    }
  }
  Vector out(n);
  block_start.clear();
  for (int b = 0; b <= top; ++b) {
    block_start.push_back(start[b]);
    const int end = (b == top) ? n : start[b + 1];
    for (int i = start[b]; i < end; ++i) out[i] = mean[b];
  }
  block_start.push_back(n);
  return out;
}

}  // namespace

Vector isotonic_regression(const Vector& y) {
  require_finite(y, "isotonic_regression");
  std::vector<int> blocks;
  return -pav_nonincreasing(-y, blocks);
}

RankVector hard_rank(const Vector& w) {
  require_finite(w, "hard_rank");
  const int n = static_cast<int>(w.size());
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return w[a] < w[b]; });
  RankVector r;
  r.values.resize(n);
  for (int pos = 0; pos < n; ++pos) r.values[idx[pos]] = pos + 1;
  r.epsilon = 0.0;
  return r;
}

namespace detail {

SoftRankPlan soft_rank_plan(const Vector& w, double epsilon) {
  require_finite(w, "soft_rank");
  if (!(epsilon > 0)) throw std::invalid_argument("soft_rank: epsilon must be > 0");
  const int n = static_cast<int>(w.size());

  SoftRankPlan plan;
  plan.order.resize(n);
  std::iota(plan.order.begin(), plan.order.end(), 0);
  std::stable_sort(plan.order.begin(), plan.order.end(),
                   [&](int a, int b) { return w[a] > w[b]; });

  // Project z = w/epsilon onto the permutahedron: in descending coordinates
  // the projection is s - v with v the nonincreasing isotonic fit of
  // u = s - rho, rho = (n, n-1, ..., 1). Evaluated as rho + (u - v) so that
  // singleton blocks give exact integer ranks even when w/epsilon is huge.
  Vector u(n);
  for (int k = 0; k < n; ++k) u[k] = w[plan.order[k]] / epsilon - (n - k);
  const Vector v = pav_nonincreasing(u, plan.block_start);

  plan.ranks.resize(n);
  for (int k = 0; k < n; ++k)
    plan.ranks[plan.order[k]] = (n - k) + (u[k] - v[k]);
  return plan;
}

Vector soft_rank_vjp_from_plan(const SoftRankPlan& plan, double epsilon,
                               const Vector& upstream) {
  const int n = static_cast<int>(plan.order.size());
  if (upstream.size() != n)
    throw std::invalid_argument("soft_rank_vjp: upstream length mismatch");
  Vector g_sorted(n);
  for (int k = 0; k < n; ++k) g_sorted[k] = upstream[plan.order[k]];

  // Jacobian in sorted coordinates: (I - block averaging)/epsilon.
  Vector out(n);
  const auto& bs = plan.block_start;
  for (std::size_t b = 0; b + 1 < bs.size(); ++b) {
    const int lo = bs[b], hi = bs[b + 1];
    const double mean = g_sorted.segment(lo, hi - lo).mean();
    for (int k = lo; k < hi; ++k) out[k] = (g_sorted[k] - mean) / epsilon;
  }
  Vector scattered(n);
  for (int k = 0; k < n; ++k) scattered[plan.order[k]] = out[k];
  return scattered;
}

}  // namespace detail

RankVector soft_rank(const Vector& w, double epsilon) {
  auto plan = detail::soft_rank_plan(w, epsilon);
  return RankVector{std::move(plan.ranks), epsilon};
}

Vector soft_rank_vjp(const Vector& w, double epsilon, const Vector& upstream) {
  const auto plan = detail::soft_rank_plan(w, epsilon);
  return detail::soft_rank_vjp_from_plan(plan, epsilon, upstream);
}

}  // namespace dpsw
