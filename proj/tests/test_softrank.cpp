#include <doctest.h>

#include <algorithm>
#include <limits>
#include <random>

#include "dpsw/softrank.hpp"
#include "test_util.hpp"

using dpsw::Vector;
using dpsw::hard_rank;
using dpsw::isotonic_regression;
using dpsw::soft_rank;
using dpsw::soft_rank_vjp;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<int>(xs.size()));
  int i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

// Brute-force isotonic oracle: enumerate all consecutive-block partitions,
// keep those whose block means are nondecreasing, and take the SSE minimizer.
Vector isotonic_bruteforce(const Vector& y) {
  const int n = static_cast<int>(y.size());
  Vector best;
  double best_sse = std::numeric_limits<double>::infinity();
  for (unsigned cuts = 0; cuts < (1u << (n - 1)); ++cuts) {
    Vector sol(n);
    int start = 0;
    double prev_mean = -std::numeric_limits<double>::infinity();
    bool feasible = true;
    for (int i = 0; i < n; ++i) {
      const bool cut_here = (i == n - 1) || (cuts >> i & 1u);
      if (!cut_here) continue;
      const double mean = y.segment(start, i - start + 1).mean();
      if (mean < prev_mean) {
        feasible = false;
        break;
      }
      sol.segment(start, i - start + 1).setConstant(mean);
      prev_mean = mean;
      start = i + 1;
    }
    if (!feasible) continue;
    const double sse = (sol - y).squaredNorm();
    if (sse < best_sse) {
      best_sse = sse;
      best = sol;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("isotonic regression examples") {
  CHECK((isotonic_regression(vec({1, 2, 3})) - vec({1, 2, 3})).norm() == 0.0);
  CHECK((isotonic_regression(vec({3, 1})) - vec({2, 2})).norm() == doctest::Approx(0));
  // frozen from the brute-force oracle below
  CHECK((isotonic_regression(vec({4, 2, 6})) - vec({3, 3, 6})).norm() ==
        doctest::Approx(0));
}

TEST_CASE("isotonic regression matches brute force on random vectors") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 60; ++trial) {
    const Vector y = testutil::random_vector(8, rng, -3, 3);
    const Vector got = isotonic_regression(y);
    const Vector want = isotonic_bruteforce(y);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-9);
    for (int i = 1; i < got.size(); ++i) CHECK(got[i] >= got[i - 1] - 1e-12);
  }
}

TEST_CASE("hard rank examples and errors") {
  CHECK((hard_rank(vec({5, 1, 3})).values - vec({3, 1, 2})).norm() == 0.0);
  CHECK((hard_rank(vec({1, 2, 3})).values - vec({1, 2, 3})).norm() == 0.0);
  CHECK((hard_rank(vec({2, 2})).values - vec({1, 2})).norm() == 0.0);  // stable ties
  CHECK(hard_rank(vec({1})).values[0] == 1.0);
  Vector bad = vec({1, 2});
  bad[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(hard_rank(bad), std::invalid_argument);
  CHECK_THROWS_AS(hard_rank(Vector()), std::invalid_argument);
}

TEST_CASE("hard rank is a bijection onto 1..n") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const Vector w = testutil::random_vector(17, rng);
    Vector r = hard_rank(w).values;
    std::sort(r.data(), r.data() + r.size());
    for (int i = 0; i < r.size(); ++i) CHECK(r[i] == i + 1);
  }
}

TEST_CASE("soft rank basics") {
  // constant input projects to the permutahedron centroid
  const auto r = soft_rank(vec({5, 5, 5}), 0.3);
  for (int i = 0; i < 3; ++i) CHECK(r.values[i] == doctest::Approx(2.0));

  // epsilon -> 0 recovers the hard rank
  const auto r2 = soft_rank(vec({1, 2, 3}), 1e-6);
  CHECK((r2.values - vec({1, 2, 3})).cwiseAbs().maxCoeff() < 1e-3);

  CHECK_THROWS_AS(soft_rank(vec({1, 2}), 0.0), std::invalid_argument);
  CHECK_THROWS_AS(soft_rank(vec({1, 2}), -1.0), std::invalid_argument);
}

TEST_CASE("soft rank invariants on random vectors") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> eps_dist(1e-3, 10.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 40);
    const Vector w = testutil::random_vector(n, rng, -5, 5);
    const double eps = eps_dist(rng);
    const Vector r = soft_rank(w, eps).values;

    // sum conservation (permutahedron membership)
    CHECK(std::abs(r.sum() - n * (n + 1) / 2.0) < 1e-9);
    CHECK(r.minCoeff() >= 1.0 - 1e-9);
    CHECK(r.maxCoeff() <= n + 1e-9);

    // permutation equivariance
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Vector wp(n);
    for (int i = 0; i < n; ++i) wp[i] = w[perm[i]];
    const Vector rp = soft_rank(wp, eps).values;
    for (int i = 0; i < n; ++i) CHECK(rp[i] == doctest::Approx(r[perm[i]]).epsilon(1e-12));

    // shift invariance
    const Vector rs = soft_rank((w.array() + 17.5).matrix(), eps).values;
    CHECK((rs - r).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("soft rank epsilon limit reaches the hard rank") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 3 + static_cast<int>(rng() % 30);
    Vector w = testutil::random_vector(n, rng, -10, 10);
    const double gap = testutil::min_gap(w);
    if (gap <= 0) continue;
    const Vector hard = hard_rank(w).values;
    const Vector soft = soft_rank(w, 1e-6 * gap).values;
    CHECK((soft - hard).cwiseAbs().maxCoeff() <= 1e-3);
  }
}

TEST_CASE("soft rank vjp matches finite differences") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = 12;
    const Vector w = testutil::random_vector(n, rng, -2, 2);
    const double eps = 0.5;  // coarse enough that blocks form
    const Vector upstream = testutil::random_vector(n, rng);
    const Vector g = soft_rank_vjp(w, eps, upstream);
    auto f = [&](const Vector& v) { return upstream.dot(soft_rank(v, eps).values); };
    for (int j = 0; j < n; ++j) {
      Vector dir = Vector::Zero(n);
      dir[j] = 1.0;
      const double fd = testutil::directional_fd(f, w, dir, 1e-6);
      CHECK(testutil::rel_err(g[j], fd) < 1e-6);
    }
  }
}

TEST_CASE("soft rank vjp: singleton blocks give a locally constant map") {
  // entries far apart relative to epsilon: the projection sits on a vertex
  const Vector w = vec({0, 10, 20, 30});
  const double eps = 0.01;
  for (int i = 0; i < 4; ++i) {
    Vector e = Vector::Zero(4);
    e[i] = 1.0;
    const Vector g = soft_rank_vjp(w, eps, e);
    auto f = [&](const Vector& v) { return e.dot(soft_rank(v, eps).values); };
    for (int j = 0; j < 4; ++j) {
      Vector dir = Vector::Zero(4);
      dir[j] = 1.0;
      const double fd = testutil::directional_fd(f, w, dir, 1e-7);
      CHECK(std::abs(g[j] - fd) < 1e-8);
    }
  }
}

TEST_CASE("soft rank vjp: near-constant input, checked at a perturbed point") {
  std::mt19937_64 rng(43);
  Vector w = Vector::Constant(6, 2.0);
  for (int i = 0; i < 6; ++i) w[i] += 1e-3 * testutil::random_vector(1, rng)[0];
  const double eps = 1.0;
  const Vector upstream = testutil::random_vector(6, rng);
  const Vector g = soft_rank_vjp(w, eps, upstream);
  auto f = [&](const Vector& v) { return upstream.dot(soft_rank(v, eps).values); };
  for (int j = 0; j < 6; ++j) {
    Vector dir = Vector::Zero(6);
    dir[j] = 1.0;
    const double fd = testutil::directional_fd(f, w, dir, 1e-7);
    CHECK(testutil::rel_err(g[j], fd) < 1e-6);
  }
}

TEST_CASE("soft rank vjp: zero upstream gives zero gradient") {
  const Vector w = vec({3, 1, 4, 1.5});
  CHECK(soft_rank_vjp(w, 0.2, Vector::Zero(4)).norm() == 0.0);
}
