// SPDX-License-Identifier: Apache-2.0
//
// semimo: common aliases and error types shared by all modules.

#ifndef SEMIMO_COMMON_HPP
#define SEMIMO_COMMON_HPP

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace semimo {

using cplx = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;

/// Violated precondition or malformed argument.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Numeric failure (non-finite values, non-convergent solver).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Divergent or otherwise failed training run.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File / container I/O problem.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ArgumentError(msg);
}

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }

}  // namespace semimo

#endif  // SEMIMO_COMMON_HPP
