#include <doctest.h>

#include <cmath>
#include <random>

#include "dpsw/gpd.hpp"
#include "dpsw/softrank.hpp"
#include "test_util.hpp"

using dpsw::GPDParams;
using dpsw::TailSpec;
using dpsw::Vector;

TEST_CASE("tail size heuristic") {
  CHECK(dpsw::tail_size(5000).m == 212);  // min{1000, floor(3 sqrt(5000))}
  CHECK(dpsw::tail_size(25).m == 5);      // min{5, 15}
  CHECK(dpsw::tail_size(5).m == 1);       // min{1, 6}
  CHECK(dpsw::tail_size(3).m == 1);       // clamped to >= 1
  CHECK(dpsw::tail_size(4).m == 1);
  CHECK_THROWS_AS(dpsw::tail_size(2), std::invalid_argument);
}

TEST_CASE("gpd cdf values and domain") {
  GPDParams exp_p{0.0, 1.0, 0.0, true};
  CHECK(dpsw::gpd_cdf(0.0, exp_p) == 0.0);
  CHECK(dpsw::gpd_cdf(1.0, exp_p) == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-12));

  GPDParams heavy{0.0, 1.0, 1.0, true};
  CHECK(dpsw::gpd_cdf(1.0, heavy) == doctest::Approx(0.5).epsilon(1e-12));

  GPDParams shifted{2.0, 1.5, 0.0, true};
  CHECK(dpsw::gpd_cdf(2.0, shifted) == 0.0);
  CHECK(dpsw::gpd_cdf(3.5, shifted) == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-12));

  CHECK_THROWS_AS(dpsw::gpd_cdf(-0.1, exp_p), std::domain_error);
  GPDParams bounded{0.0, 1.0, -0.5, true};  // support [0, 2]
  CHECK_THROWS_AS(dpsw::gpd_cdf(2.5, bounded), std::domain_error);
  GPDParams bad{0.0, -1.0, 0.0, true};
  CHECK_THROWS_AS(dpsw::gpd_cdf(0.5, bad), std::invalid_argument);
}

TEST_CASE("gpd quantile values and round trip") {
  GPDParams exp_p{1.0, 2.0, 0.0, true};
  CHECK(dpsw::gpd_quantile(0.0, exp_p) == 1.0);
  CHECK(dpsw::gpd_quantile(1.0 - std::exp(-1.0), exp_p) ==
        doctest::Approx(3.0).epsilon(1e-12));

  GPDParams heavy{0.0, 1.0, 1.0, true};
  CHECK(dpsw::gpd_quantile(0.5, heavy) == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(dpsw::gpd_quantile(1.0, heavy), std::domain_error);
  CHECK_THROWS_AS(dpsw::gpd_quantile(-0.1, heavy), std::domain_error);

  for (double xi : {-0.4, 0.0, 0.2, 1.3}) {
    GPDParams p{0.7, 1.9, xi, true};
    for (double q : {0.0, 0.05, 0.31, 0.77, 0.993}) {
      const double w = dpsw::gpd_quantile(q, p);
      CHECK(std::abs(dpsw::gpd_cdf(w, p) - q) < 1e-10);
    }
  }
}

TEST_CASE("pwm fit: hand-evaluated three-point tail") {
  // tail (1.1, 1.5, 3.0), mu = 1: exceedances (0.1, 0.5, 2.0),
  // alpha0 = 13/15, alpha1 = (1/3)((2/3)0.1 + (1/3)0.5) = 7/90.
  Vector tail(3);
  tail << 1.1, 1.5, 3.0;
  const auto fit = dpsw::fit_pwm_hard(tail, 1.0, 10, 3);
  REQUIRE(fit.has_value());
  const double a0 = 13.0 / 15.0, a1 = 7.0 / 90.0;
  CHECK(fit->sigma == doctest::Approx(2 * a0 * a1 / (a0 - 2 * a1)).epsilon(1e-12));
  CHECK(fit->xi == doctest::Approx(2 - a0 / (a0 - 2 * a1)).epsilon(1e-12));
  CHECK(fit->sigma == doctest::Approx(91.0 / 480.0).epsilon(1e-12));
  CHECK(fit->xi == doctest::Approx(25.0 / 32.0).epsilon(1e-12));
  CHECK(fit->mu == 1.0);
  CHECK_FALSE(fit->reliable);  // 25/32 > 0.7
}

TEST_CASE("pwm fit matches an independent straight-line evaluation") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int m = 4 + static_cast<int>(rng() % 20);
    Vector tail = testutil::random_lognormal(m, rng).array() + 1.0;
    std::sort(tail.data(), tail.data() + tail.size());
    const double mu = 0.5;
    const auto fit = dpsw::fit_pwm_hard(tail, mu, m * 3, m);
    REQUIRE(fit.has_value());
    double a0 = 0, a1 = 0;
    for (int i = 0; i < m; ++i) {
      a0 += (tail[i] - mu) / m;
      a1 += (static_cast<double>(m - 1 - i) / m) * (tail[i] - mu) / m;
    }
    const double denom = a0 - 2 * a1;
    CHECK(fit->sigma == doctest::Approx(2 * a0 * a1 / denom).epsilon(1e-12));
    CHECK(fit->xi == doctest::Approx(2 - a0 / denom).epsilon(1e-12));
  }
}

TEST_CASE("pwm fit recovers generating parameters from exact quantiles") {
  const int m = 1000;
  const GPDParams truth{0.0, 1.0, 0.2, true};
  Vector tail(m);
  for (int k = 1; k <= m; ++k) tail[k - 1] = dpsw::gpd_quantile((k - 0.5) / m, truth);
  const auto fit = dpsw::fit_pwm_hard(tail, 0.0, 5000, m);
  REQUIRE(fit.has_value());
  CHECK(std::abs(fit->sigma - 1.0) <= 0.05);
  CHECK(std::abs(fit->xi - 0.2) <= 0.05);
  CHECK(fit->reliable);
}

TEST_CASE("pwm fit degenerate tails") {
  Vector constant = Vector::Constant(5, 3.0);
  CHECK_FALSE(dpsw::fit_pwm_hard(constant, 3.0, 25, 5).has_value());

  // single exceedance: alpha1 = 0 forces sigma = 0
  Vector one(1);
  one << 2.5;
  CHECK_FALSE(dpsw::fit_pwm_hard(one, 1.0, 5, 1).has_value());

  CHECK_THROWS_AS(dpsw::fit_pwm_hard(one, 1.0, 5, 2), std::invalid_argument);
  Vector below(2);
  below << 0.5, 2.0;  // entry below mu
  CHECK_THROWS_AS(dpsw::fit_pwm_hard(below, 1.0, 10, 2), std::invalid_argument);
}

TEST_CASE("pwm fit is scale equivariant in the exceedances") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const int m = 12;
    Vector tail = testutil::random_lognormal(m, rng).array() + 2.0;
    std::sort(tail.data(), tail.data() + tail.size());
    const double mu = 1.5, c = 3.7;
    const auto base = dpsw::fit_pwm_hard(tail, mu, 60, m);
    Vector scaled = (mu + c * (tail.array() - mu)).matrix();
    const auto sc = dpsw::fit_pwm_hard(scaled, mu, 60, m);
    REQUIRE(base.has_value());
    REQUIRE(sc.has_value());
    CHECK(sc->sigma == doctest::Approx(c * base->sigma).epsilon(1e-12));
    CHECK(sc->xi == doctest::Approx(base->xi).epsilon(1e-12));
  }
}

TEST_CASE("soft pwm fit approaches the hard fit in the sharp limit") {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 100;
    const Vector w = testutil::random_lognormal(n, rng);
    const double gap = testutil::min_gap(w);
    REQUIRE(gap > 0);
    const TailSpec spec = dpsw::tail_size(n);
    const auto r = dpsw::soft_rank(w, 1e-6 * gap);
    const auto soft = dpsw::fit_pwm_soft(w, r, spec, 1e4);

    Vector sorted = w;
    std::sort(sorted.data(), sorted.data() + sorted.size());
    const double mu = sorted[n - spec.m - 1];
    const auto hard = dpsw::fit_pwm_hard(sorted.tail(spec.m), mu, n, spec.m);
    REQUIRE(soft.has_value());
    REQUIRE(hard.has_value());
    CHECK(std::abs(soft->mu - hard->mu) <= 1e-3);
    CHECK(std::abs(soft->sigma - hard->sigma) <= 1e-3);
    CHECK(std::abs(soft->xi - hard->xi) <= 1e-3);
  }
}

TEST_CASE("soft pwm fit: location falls back to the smallest rank") {
  // a tail spec wide enough that no rank sits at or below n - m
  Vector w(4);
  w << 5.0, 1.0, 7.0, 6.0;  // smallest entry at index 1
  dpsw::RankVector r;
  r.values.resize(4);
  r.values << 2.5, 1.5, 3.5, 2.5;  // all above n - m = 1
  r.epsilon = 0.5;
  const dpsw::TailSpec spec{4, 3};
  const auto fit = dpsw::fit_pwm_soft(w, r, spec, 2.0);
  REQUIRE(fit.has_value());
  CHECK(fit->mu == 1.0);  // w at the globally smallest soft rank
}

TEST_CASE("soft pwm fit: no tail mass is degenerate") {
  // constant weights pile every soft rank on (n+1)/2, far below the gate
  const int n = 50;
  const Vector w = Vector::Constant(n, 4.0);
  const auto r = dpsw::soft_rank(w, 0.1);
  CHECK_FALSE(dpsw::fit_pwm_soft(w, r, dpsw::tail_size(n), 50.0).has_value());
}
