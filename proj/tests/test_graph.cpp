#include <doctest.h>

#include <random>

#include "dpsw/graph.hpp"
#include "test_util.hpp"

namespace ad = dpsw::ad;
using dpsw::Matrix;
using dpsw::Vector;

namespace {

// Finite-difference check of d(loss)/d(param "p") for a scalar-valued graph
// builder invoked on a fresh graph each evaluation.
template <typename Builder>
void check_param_gradient(const Matrix& p0, Builder build, double h = 1e-6,
                          double tol = 1e-6) {
  ad::Graph g;
  const ad::Var p = g.param("p", p0);
  const auto tape = g.backward(build(g, p));
  const Matrix grad = tape.grads.at("p");

  std::mt19937_64 rng(99);
  for (int rep = 0; rep < 6; ++rep) {
    const Matrix dir = testutil::random_matrix(static_cast<int>(p0.rows()),
                                               static_cast<int>(p0.cols()), rng);
    auto f = [&](double t) {
      ad::Graph gg;
      const ad::Var pp = gg.param("p", p0 + t * dir);
      return gg.value(build(gg, pp))(0, 0);
    };
    const double fd = (f(h) - f(-h)) / (2 * h);
    const double analytic = (grad.array() * dir.array()).sum();
    CHECK(testutil::rel_err(analytic, fd) < tol);
  }
}

}  // namespace

TEST_CASE("gradient of the squared norm is the parameter itself") {
  std::mt19937_64 rng(1);
  const Matrix theta = testutil::random_matrix(3, 4, rng);
  ad::Graph g;
  const ad::Var p = g.param("theta", theta);
  const auto tape = g.backward(ad::cmul(g, ad::sum(g, ad::square(g, p)), 0.5));
  CHECK((tape.grads.at("theta") - theta).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(tape.loss == doctest::Approx(0.5 * theta.squaredNorm()).epsilon(1e-12));
}

TEST_CASE("constant loss leaves zero gradients") {
  ad::Graph g;
  const ad::Var p = g.param("theta", Matrix::Ones(2, 2));
  const ad::Var c = g.constant(Matrix::Constant(1, 1, 3.0));
  const auto tape = g.backward(c);
  CHECK(tape.grads.at("theta").cwiseAbs().maxCoeff() == 0.0);
  (void)p;
}

TEST_CASE("duplicate parameter names are rejected") {
  ad::Graph g;
  g.param("w", Matrix::Ones(1, 1));
  CHECK_THROWS_AS(g.param("w", Matrix::Ones(1, 1)), std::invalid_argument);
}

TEST_CASE("elementwise and broadcast primitives match finite differences") {
  std::mt19937_64 rng(2);
  const Matrix a = testutil::random_matrix(4, 3, rng);

  check_param_gradient(a, [](ad::Graph& g, ad::Var p) {
    return ad::sum(g, ad::mul(g, p, p));
  });
  std::mt19937_64 rng_b(7);
  const Matrix bmat = testutil::random_matrix(4, 3, rng_b);
  check_param_gradient(a, [&](ad::Graph& g, ad::Var p) {
    const ad::Var b = g.constant(bmat);
    return ad::sum(g, ad::div(g, p, ad::cadd(g, ad::square(g, b), 1.0)));
  });
  check_param_gradient(a, [](ad::Graph& g, ad::Var p) {
    return ad::mean(g, ad::exp_(g, ad::cmul(g, p, 0.3)));
  });
  check_param_gradient(a, [](ad::Graph& g, ad::Var p) {
    return ad::sum(g, ad::log_(g, ad::cadd(g, ad::square(g, p), 1.0)));
  });
  check_param_gradient(a, [](ad::Graph& g, ad::Var p) {
    return ad::sum(g, ad::sigmoid(g, p));
  });
  check_param_gradient(a, [](ad::Graph& g, ad::Var p) {
    return ad::sum(g, ad::elu(g, p));
  });
  // scalar and row-vector broadcasting
  check_param_gradient(a, [](ad::Graph& g, ad::Var p) {
    const ad::Var s = ad::mean(g, p);                      // 1x1
    const ad::Var shifted = ad::sub(g, p, s);              // broadcast scalar
    const ad::Var row = g.constant(Matrix::Ones(1, 3));    // broadcast row
    return ad::sum(g, ad::square(g, ad::add(g, shifted, row)));
  });
  check_param_gradient(Matrix::Constant(1, 1, 0.7), [](ad::Graph& g, ad::Var p) {
    const ad::Var v = g.constant(Matrix::Ones(5, 1) * 2.0);
    return ad::sum(g, ad::div(g, v, p));  // denominator broadcast
  });
}

TEST_CASE("matmul, affine, concat, gather, select match finite differences") {
  std::mt19937_64 rng(3);
  const Matrix w = testutil::random_matrix(3, 5, rng);
  const Matrix x = testutil::random_matrix(6, 5, rng);

  const Matrix w_tall = testutil::random_matrix(5, 3, rng);
  check_param_gradient(w_tall, [&](ad::Graph& g, ad::Var p) {
    const ad::Var xc = g.constant(x);
    return ad::sum(g, ad::square(g, ad::matmul(g, xc, p)));
  });
  check_param_gradient(w, [&](ad::Graph& g, ad::Var p) {
    const ad::Var xc = g.constant(x);
    const ad::Var b = g.constant(Matrix::Zero(1, 3));
    return ad::sum(g, ad::square(g, ad::affine(g, xc, p, b)));
  });
  check_param_gradient(Matrix::Zero(1, 3), [&](ad::Graph& g, ad::Var p) {
    const ad::Var xc = g.constant(x);
    const ad::Var wc = g.constant(w);
    return ad::sum(g, ad::elu(g, ad::affine(g, xc, wc, p)));
  });
  check_param_gradient(x, [&](ad::Graph& g, ad::Var p) {
    const ad::Var left = ad::gather_rows(g, p, {0, 2, 4});
    const ad::Var right = ad::gather_rows(g, p, {1, 3, 5});
    const ad::Var cat = ad::concat_cols(g, left, right);
    return ad::add(g, ad::sum(g, ad::square(g, cat)), ad::select(g, p, 2, 1));
  });
}

TEST_CASE("matmul shape validation") {
  ad::Graph g;
  const ad::Var a = g.constant(Matrix::Ones(2, 3));
  const ad::Var b = g.constant(Matrix::Ones(2, 3));
  CHECK_THROWS_AS(ad::matmul(g, a, b), std::invalid_argument);
  CHECK_THROWS_AS(ad::add(g, a, g.constant(Matrix::Ones(3, 2))), std::invalid_argument);
}

TEST_CASE("clamp passes gradients only inside the band") {
  const Matrix x0 = (Matrix(1, 4) << -2.0, 0.2, 0.8, 3.0).finished();
  ad::Graph g;
  const ad::Var p = g.param("p", x0);
  const auto tape = g.backward(ad::sum(g, ad::clamp(g, p, 0.0, 1.0)));
  const Matrix grad = tape.grads.at("p");
  CHECK(grad(0, 0) == 0.0);
  CHECK(grad(0, 1) == 1.0);
  CHECK(grad(0, 2) == 1.0);
  CHECK(grad(0, 3) == 0.0);
}

TEST_CASE("mmd node: zero on identical sets, matches finite differences") {
  std::mt19937_64 rng(5);
  const Matrix s = testutil::random_matrix(6, 3, rng);
  {
    ad::Graph g;
    const ad::Var a = g.constant(s);
    const ad::Var b = g.constant(s);
    CHECK(g.value(ad::mmd_rbf(g, a, b, 1.3))(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
  }
  const Matrix other = testutil::random_matrix(4, 3, rng);
  check_param_gradient(s, [&](ad::Graph& g, ad::Var p) {
    return ad::mmd_rbf(g, p, g.constant(other), 0.9);
  }, 1e-6, 1e-5);
  check_param_gradient(other, [&](ad::Graph& g, ad::Var p) {
    return ad::mmd_rbf(g, g.constant(s), p, 0.9);
  }, 1e-6, 1e-5);
}

TEST_CASE("soft rank node backpropagates through the projection") {
  std::mt19937_64 rng(6);
  Matrix w0(8, 1);
  w0.col(0) = testutil::random_vector(8, rng, -1, 1);
  const Matrix coeff = testutil::random_matrix(8, 1, rng);
  check_param_gradient(w0, [&](ad::Graph& g, ad::Var p) {
    return ad::sum(g, ad::mul(g, g.constant(coeff), ad::soft_rank(g, p, 0.4)));
  });
}
