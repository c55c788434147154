#include "dpsw/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace dpsw {

double pehe(const Vector& y0, const Vector& y1, const Vector& tau_hat) {
  const auto n = y0.size();
  if (n < 1 || y1.size() != n || tau_hat.size() != n)
    throw std::invalid_argument("pehe: length mismatch");
  const double mse = ((y1 - y0 - tau_hat).array().square()).mean();
  return std::sqrt(mse);
}

double attribution(const Matrix& w1, int col_start, int col_end) {
  const int cols = static_cast<int>(w1.cols());
  if (col_start < 0 || col_end <= col_start || col_end > cols)
    throw std::invalid_argument("attribution: bad block range");
  if (col_end - col_start == cols)
    throw std::invalid_argument("attribution: block must be a strict subset of columns");
  const int block_width = col_end - col_start;
  const double block_mean =
      w1.middleCols(col_start, block_width).array().abs().mean();
  const double total_abs = w1.array().abs().sum();
  const double rest_mean = (total_abs - block_mean * block_width * w1.rows()) /
                           (static_cast<double>(w1.rows()) * (cols - block_width));
  if (rest_mean < 1e-12)
    throw std::domain_error("attribution: degenerate denominator (rest block ~ 0)");
  return (block_mean - rest_mean) / rest_mean;
}

}  // namespace dpsw
