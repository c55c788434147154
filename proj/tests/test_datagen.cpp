#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "dpsw/datagen.hpp"
#include "test_util.hpp"

using dpsw::Dataset;
using dpsw::Vector;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("synthetic generator: shapes, blocks, outcome identity") {
  const Dataset d = dpsw::gen_synthetic(18, 100, 5);
  CHECK(d.n() == 100);
  CHECK(d.d() == 18);
  REQUIRE(d.blocks.has_value());
  CHECK(d.blocks->gamma_end == 6);
  CHECK(d.blocks->delta_end == 12);
  REQUIRE(d.y0.has_value());
  REQUIRE(d.y1.has_value());
  for (int i = 0; i < d.n(); ++i) {
    const double want = d.a[i] == 1 ? (*d.y1)[i] : (*d.y0)[i];
    CHECK(d.y[i] == want);  // exact composition
    CHECK((d.a[i] == 0 || d.a[i] == 1));
  }
  CHECK_THROWS_AS(dpsw::gen_synthetic(17, 10, 1), std::invalid_argument);
  CHECK_THROWS_AS(dpsw::gen_synthetic(18, 0, 1), std::invalid_argument);
}

TEST_CASE("synthetic generator is reproducible per seed") {
  const Dataset a = dpsw::gen_synthetic(9, 64, 123);
  const Dataset b = dpsw::gen_synthetic(9, 64, 123);
  const Dataset c = dpsw::gen_synthetic(9, 64, 124);
  CHECK((a.x - b.x).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.y - b.y).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.a - b.a).cwiseAbs().maxCoeff() == 0);
  CHECK((a.x - c.x).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("zero outcome coefficients leave pure noise") {
  const int d = 18, n = 400;
  std::mt19937_64 rng(9);
  dpsw::SyntheticCoeffs coeffs;
  coeffs.c_a = testutil::random_vector(2 * d / 3, rng);
  coeffs.c_y0 = Vector::Zero(2 * d / 3);
  coeffs.c_y1 = testutil::random_vector(2 * d / 3, rng);
  const Dataset data = dpsw::gen_synthetic_with_coeffs(d, n, 77, coeffs);
  // y0 ~ N(0,1): the sample mean stays within 4/sqrt(n)
  CHECK(std::abs(data.y0->mean()) <= 4.0 / std::sqrt(static_cast<double>(n)));
  const double var = (data.y0->array() - data.y0->mean()).square().mean();
  CHECK(var > 0.6);
  CHECK(var < 1.6);
}

TEST_CASE("single-group treatment draws are retried with a fresh coefficient") {
  // at n = 2, a two-group draw often needs several coefficient re-draws
  int retried = 0;
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    const Dataset d = dpsw::gen_synthetic(9, 2, seed);
    CHECK(d.a.sum() == 1);  // retried until both groups appear
    if (d.gen_retries > 0) ++retried;
  }
  CHECK(retried > 0);
}

TEST_CASE("treated fraction is interior for moderate n") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Dataset d = dpsw::gen_synthetic(9, 64, seed);
    const double frac = d.a.cast<double>().mean();
    CHECK(frac > 0.0);
    CHECK(frac < 1.0);
  }
}

TEST_CASE("split: sizes, disjoint union, determinism, carried annotations") {
  const Dataset d = dpsw::gen_synthetic(9, 100, 3);
  const auto parts = dpsw::split(d, {0.5, 0.25, 0.25}, 11);
  CHECK(parts[0].n() == 50);
  CHECK(parts[1].n() == 25);
  CHECK(parts[2].n() == 25);
  CHECK(parts[0].blocks.has_value());
  CHECK(parts[0].y0.has_value());

  // disjoint union: match rows back to the source by feature vector
  std::vector<int> seen(100, 0);
  for (const auto& part : parts) {
    for (int i = 0; i < part.n(); ++i) {
      for (int src = 0; src < 100; ++src) {
        if ((part.x.row(i) - d.x.row(src)).cwiseAbs().maxCoeff() == 0.0) {
          ++seen[src];
          break;
        }
      }
    }
  }
  for (int src = 0; src < 100; ++src) CHECK(seen[src] == 1);

  const auto again = dpsw::split(d, {0.5, 0.25, 0.25}, 11);
  CHECK((again[0].x - parts[0].x).cwiseAbs().maxCoeff() == 0.0);

  // largest remainder: sizes differ from exact ratios by at most one
  const Dataset d2 = dpsw::gen_synthetic(9, 101, 3);
  const auto parts2 = dpsw::split(d2, {0.6, 0.2, 0.2}, 1);
  CHECK(std::abs(parts2[0].n() - 60.6) <= 1.0);
  CHECK(std::abs(parts2[1].n() - 20.2) <= 1.0);
  CHECK(std::abs(parts2[2].n() - 20.2) <= 1.0);
  CHECK(parts2[0].n() + parts2[1].n() + parts2[2].n() == 101);

  CHECK_THROWS_AS(dpsw::split(d, {0.5, 0.5, 0.0}, 1), std::invalid_argument);
  const Dataset tiny = dpsw::gen_synthetic(9, 2, 3);
  CHECK_THROWS_AS(dpsw::split(tiny, {0.5, 0.25, 0.25}, 1), std::invalid_argument);
}

TEST_CASE("csv round trip preserves the dataset bit for bit") {
  const Dataset d = dpsw::gen_synthetic(9, 40, 17);
  const std::string path = temp_path("dpsw_test_roundtrip.csv");
  dpsw::save_csv(d, path);
  const Dataset back = dpsw::load_csv(path);
  CHECK(back.n() == d.n());
  CHECK(back.d() == d.d());
  CHECK((back.x - d.x).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.y - d.y).cwiseAbs().maxCoeff() == 0.0);
  CHECK((*back.y0 - *d.y0).cwiseAbs().maxCoeff() == 0.0);
  CHECK((*back.y1 - *d.y1).cwiseAbs().maxCoeff() == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("csv loader: well-formed and malformed inputs") {
  const std::string path = temp_path("dpsw_test_load.csv");
  {
    std::ofstream f(path);
    f << "a,y,x1,x2\n1,0.5,1.0,2.0\n0,-1.5,3.0,4.0\n1,2.5,5.0,6.0\n";
  }
  const Dataset d = dpsw::load_csv(path);
  CHECK(d.n() == 3);
  CHECK(d.d() == 2);
  CHECK_FALSE(d.y0.has_value());
  CHECK(d.a[0] == 1);
  CHECK(d.x(2, 1) == 6.0);

  {
    std::ofstream f(path);
    f << "a,y,x1\n2,0.5,1.0\n";
  }
  CHECK_THROWS_WITH_AS(dpsw::load_csv(path), doctest::Contains("row 1"),
                       dpsw::DataError);

  {
    std::ofstream f(path);
    f << "a,y,x1\n0,abc,1.0\n";
  }
  CHECK_THROWS_AS(dpsw::load_csv(path), dpsw::DataError);

  {
    std::ofstream f(path);
    f << "a,y,y0,y1,x1\n1,5.0,1.0,4.0,0.3\n";  // y != y1 under a=1
  }
  CHECK_THROWS_AS(dpsw::load_csv(path), dpsw::DataError);

  {
    std::ofstream f(path);
    f << "a,y\n1,5.0\n";  // no features
  }
  CHECK_THROWS_AS(dpsw::load_csv(path), dpsw::DataError);
  std::remove(path.c_str());
  CHECK_THROWS_AS(dpsw::load_csv(temp_path("missing_file_xyz.csv")), dpsw::DataError);
}
