#pragma once

#include "dpsw/common.hpp"

namespace dpsw {

// Root-mean-square error between the true effects y1 - y0 and tau_hat.
double pehe(const Vector& y0, const Vector& y1, const Vector& tau_hat);

// Relative excess of the mean absolute first-layer weight over the block
// columns [col_start, col_end) against the remaining columns:
// (mean|W_block| - mean|W_rest|) / mean|W_rest|. Scale-invariant.
double attribution(const Matrix& w1, int col_start, int col_end);

}  // namespace dpsw
