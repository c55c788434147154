#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace dpsw {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using IntVector = Eigen::VectorXi;

// Malformed configuration (CLI exit code 1).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (CLI exit code 2).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite losses or weights during training (CLI exit code 3).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Verbosity from the DPSW_LOG environment variable: 0 quiet, 1 info, 2 debug.
int log_level();
void log_info(const std::string& msg);
void log_debug(const std::string& msg);

}  // namespace dpsw
