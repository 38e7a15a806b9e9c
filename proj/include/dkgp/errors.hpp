#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dkgp {

// Base for every error raised by the library. Callers that only need a
// message can catch this; the CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class NotPositiveDefinite : public NumericError {
 public:
  explicit NotPositiveDefinite(const std::string& what)
      : NumericError("not positive definite: " + what) {}
};

class NoConvergence : public NumericError {
 public:
  NoConvergence(const std::string& what, std::size_t iterations, double residual)
      : NumericError(what + " did not converge after " + std::to_string(iterations) +
                     " iterations (residual " + std::to_string(residual) + ")"),
        iterations_(iterations),
        residual_(residual) {}

  std::size_t iterations() const noexcept { return iterations_; }
  double residual() const noexcept { return residual_; }

 private:
  std::size_t iterations_;
  double residual_;
};

class NonFiniteLoss : public NumericError {
 public:
  NonFiniteLoss(std::size_t epoch, double value)
      : NumericError("non-finite loss " + std::to_string(value) + " at epoch " +
                     std::to_string(epoch)),
        epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Raised on invalid arguments that are not shape problems (bad knots, grid
// too small, too many latent dimensions, unknown model name, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t row, std::size_t column)
      : DataError(what + " (row " + std::to_string(row) + ", column " + std::to_string(column) +
                  ")"),
        row_(row),
        column_(column) {}
  std::size_t row() const noexcept { return row_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::size_t column_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace dkgp
