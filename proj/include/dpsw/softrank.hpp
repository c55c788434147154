#pragma once

#include <vector>

#include "dpsw/common.hpp"

namespace dpsw {

// Output of hard_rank/soft_rank. epsilon == 0 denotes a hard (integer) rank.
// Soft ranks live on the permutahedron of {1..n}: entries in [1, n],
// sum equal to n(n+1)/2.
struct RankVector {
  Vector values;
  double epsilon = 0.0;
};

// argmin_{x nondecreasing} sum (x_i - y_i)^2 via pool-adjacent-violators.
Vector isotonic_regression(const Vector& y);

// Ascending rank, 1-based: r_i = position of w_i in the stable ascending
// sort of w. Ties broken by original index.
RankVector hard_rank(const Vector& w);

// l2-regularized rank: the Euclidean projection of w/epsilon onto the
// permutahedron of {1,...,n}, computed through isotonic regression in
// O(n log n). Piecewise linear in w and equal to hard_rank in the
// epsilon -> 0 limit. Descending ranks are soft_rank(-w, epsilon).
RankVector soft_rank(const Vector& w, double epsilon);

// upstream^T * d(soft_rank)/dw. The Jacobian is block-wise centering over
// the isotonic blocks of the projection, scaled by 1/epsilon; blocks at
// kink points follow the solution actually computed (right limit).
Vector soft_rank_vjp(const Vector& w, double epsilon, const Vector& upstream);

namespace detail {

// Projection state shared by soft_rank and its vjp.
struct SoftRankPlan {
  Vector ranks;
  std::vector<int> order;        // order[k] = input index of the k-th largest entry
  std::vector<int> block_start;  // isotonic block starts in sorted coordinates, plus sentinel n
};

SoftRankPlan soft_rank_plan(const Vector& w, double epsilon);
Vector soft_rank_vjp_from_plan(const SoftRankPlan& plan, double epsilon,
                               const Vector& upstream);

}  // namespace detail
}  // namespace dpsw
