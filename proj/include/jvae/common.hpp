#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace jvae {

using Scalar = double;
using Index = Eigen::Index;

/// Row-major dense matrix; all network tensors are 2-D (batch x features).
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// Base for every error raised by the library. `exit_code()` is what the CLI
/// returns when the error escapes a subcommand.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

class NumericalError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

class IngestionError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

class FormatError : public IngestionError {
 public:
  using IngestionError::IngestionError;
};

/// Shape mismatch between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Input outside an operation's mathematical domain (e.g. log of 0).
class DomainError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// API misuse, e.g. calling backward on a non-scalar.
class ContractError : public Error {
 public:
  using Error::Error;
};

inline std::string shape_str(Index rows, Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

template <typename Derived>
std::string shape_str(const Eigen::EigenBase<Derived>& m) {
  return shape_str(m.rows(), m.cols());
}

}  // namespace jvae
