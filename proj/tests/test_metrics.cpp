#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "dpsw/metrics.hpp"
#include "test_util.hpp"

using dpsw::Matrix;
using dpsw::Vector;

TEST_CASE("pehe examples") {
  Vector y0(2), y1(2), tau(2);
  y0 << 0, 0;
  y1 << 2, 0;
  tau << 2, 0;
  CHECK(dpsw::pehe(y0, y1, tau) == 0.0);

  tau << 3, 1;  // constant offset of one
  CHECK(dpsw::pehe(y0, y1, tau) == doctest::Approx(1.0).epsilon(1e-12));

  tau << 0, 0;
  CHECK(dpsw::pehe(y0, y1, tau) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));

  Vector short_tau(1);
  short_tau << 0;
  CHECK_THROWS_AS(dpsw::pehe(y0, y1, short_tau), std::invalid_argument);
}

TEST_CASE("pehe invariances") {
  std::mt19937_64 rng(3);
  const int n = 23;
  const Vector y0 = testutil::random_vector(n, rng);
  const Vector y1 = testutil::random_vector(n, rng);
  const Vector tau = testutil::random_vector(n, rng);
  const double base = dpsw::pehe(y0, y1, tau);

  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Vector p0(n), p1(n), pt(n);
  for (int i = 0; i < n; ++i) {
    p0[i] = y0[perm[i]];
    p1[i] = y1[perm[i]];
    pt[i] = tau[perm[i]];
  }
  CHECK(dpsw::pehe(p0, p1, pt) == doctest::Approx(base).epsilon(1e-12));

  // zero exactly when every row matches
  CHECK(dpsw::pehe(y0, y1, y1 - y0) == 0.0);
  Vector off = y1 - y0;
  off[4] += 1e-3;
  CHECK(dpsw::pehe(y0, y1, off) > 0.0);
}

TEST_CASE("attribution examples and properties") {
  Matrix w(2, 4);
  // block = first two columns with |mean| 2, rest |mean| 1
  w << 2, -2, 1, -1, -2, 2, -1, 1;
  CHECK(dpsw::attribution(w, 0, 2) == doctest::Approx(1.0).epsilon(1e-12));

  Matrix uniform = Matrix::Constant(3, 6, -0.7);
  CHECK(dpsw::attribution(uniform, 0, 2) == doctest::Approx(0.0).epsilon(1e-12));

  // scale invariance
  std::mt19937_64 rng(5);
  const Matrix r = testutil::random_matrix(4, 9, rng);
  const double base = dpsw::attribution(r, 3, 6);
  CHECK(dpsw::attribution((r * 37.5).eval(), 3, 6) == doctest::Approx(base).epsilon(1e-12));

  Matrix zero_rest = Matrix::Zero(2, 4);
  zero_rest(0, 0) = 1.0;
  CHECK_THROWS_AS(dpsw::attribution(zero_rest, 0, 2), std::domain_error);
  CHECK_THROWS_AS(dpsw::attribution(r, 0, 9), std::invalid_argument);
  CHECK_THROWS_AS(dpsw::attribution(r, 5, 5), std::invalid_argument);
}
