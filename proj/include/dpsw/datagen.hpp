#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dpsw/common.hpp"

namespace dpsw {

// Column partition [0, gamma_end) / [gamma_end, delta_end) / [delta_end, d)
// into instrument, confounder, and adjustment blocks.
struct FeatureBlocks {
  int gamma_end = 0;
  int delta_end = 0;
};

struct Dataset {
  IntVector a;
  Matrix x;
  Vector y;
  std::optional<Vector> y0;
  std::optional<Vector> y1;
  std::optional<FeatureBlocks> blocks;
  int gen_retries = 0;  // treatment re-draws needed to avoid a single-group sample

  int n() const { return static_cast<int>(x.rows()); }
  int d() const { return static_cast<int>(x.cols()); }
  Dataset rows(const std::vector<int>& idx) const;
};

struct SyntheticCoeffs {
  Vector c_a;
  Vector c_y0;
  Vector c_y1;
};

// X ~ N(0, I); A ~ Ber(sigmoid(c_a . (psi + 1))) with psi the instrument and
// confounder blocks; Y0 linear and Y1 quadratic in the confounder and
// adjustment blocks, each with its own unit Gaussian noise. Coefficient
// vectors are drawn once per dataset; a single-group treatment draw is
// retried with a fresh c_a (counted in gen_retries).
Dataset gen_synthetic(int d, int n, std::uint64_t seed);

// Test hook: fixed coefficient vectors, no re-drawing.
Dataset gen_synthetic_with_coeffs(int d, int n, std::uint64_t seed,
                                  const SyntheticCoeffs& coeffs);

// Disjoint row partition with largest-remainder rounding; sizes differ from
// the exact ratios by at most one row each.
std::array<Dataset, 3> split(const Dataset& data, const std::array<double, 3>& ratios,
                             std::uint64_t seed);

// CSV schema: header a,y[,y0,y1],x1..xd. Values are 64-bit reals; a is 0/1.
Dataset load_csv(const std::string& path);
void save_csv(const Dataset& data, const std::string& path);

}  // namespace dpsw
