#pragma once

// Minimal reverse-mode automatic differentiation over dense matrices.
//
// A Tape records primitive applications in order; every node stores its
// forward value and a vector-Jacobian rule. Values are immutable once
// recorded, so backward() can be called any number of times and always
// produces the same gradients.
//
// Broadcasting in add/subtract/multiply is limited to a 1x1 scalar, a row
// vector (1 x cols) or a column vector (rows x 1) against a matrix.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "dkgp/linalg.hpp"

namespace dkgp::ad {

class Tape;

// Handle to a recorded value.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  double scalar() const;
  std::size_t id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Maps each input's adjoint from the output adjoint. Returned vector has one
// entry per input (entries for inputs without gradient may be left empty).
using VjpRule = std::function<std::vector<Matrix>(const Matrix& output_adjoint)>;

class Gradients {
 public:
  explicit Gradients(std::vector<Matrix> adjoints) : adjoints_(std::move(adjoints)) {}
  // Zero matrix of the right shape when the variable received no gradient.
  const Matrix& of(const Var& v) const;

 private:
  std::vector<Matrix> adjoints_;
  mutable Matrix zero_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Trainable input.
  Var leaf(Matrix value);
  Var leaf(double value);
  // Input that never receives an adjoint.
  Var constant(Matrix value);
  Var constant(double value);

  // Registers an arbitrary primitive. Used by the built-in operations and by
  // fused model-specific primitives defined elsewhere in the library.
  Var record(std::vector<Var> inputs, Matrix value, VjpRule vjp);

  Gradients backward(const Var& output) const;

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    std::vector<std::size_t> inputs;
    VjpRule vjp;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

Var add(const Var& a, const Var& b);
Var subtract(const Var& a, const Var& b);
Var multiply(const Var& a, const Var& b);  // elementwise
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var square(const Var& a);
Var sum(const Var& a);  // 1x1
Var silu(const Var& a);
Var scale(const Var& a, double factor);

// Squared Euclidean distances between the rows of a and b.
Var pairwise_sqdist(const Var& a, const Var& b);

// Spline path of a KAN layer:
//   out(r, o) = sum_i scaler(o, i) * sum_c weight(o, i*nb + c) * B_c(clamp(x(r, i)))
// with B the order-`order` B-spline basis on `knots` and clamping to [lo, hi].
struct SplineGrid {
  std::vector<double> knots;
  int order = 3;
  double lo = -1.0;
  double hi = 1.0;
  std::size_t basis_count() const { return knots.size() - static_cast<std::size_t>(order) - 1; }
};
Var bspline_combine(const Var& x, const Var& weight, const Var& scaler, const SplineGrid& grid);

// r^T K^{-1} r + log|K| in one primitive. K is factorized under the jitter
// policy; the adjoint of K is the implicit derivative (K^{-1} - a a^T) with
// a = K^{-1} r, plus the term from the jitter's dependence on mean(diag K).
// The adjoint of r is 2a.
Var cholesky_logdet_quadform(const Var& K, const Var& r);

// Max over all entries of all `params` of
//   |analytic - central difference| / (|central difference| + 1e-8).
// `f` must rebuild the traced computation on the supplied tape from the
// supplied leaves and return the scalar output.
using TracedFunction = std::function<Var(Tape&, std::span<const Var>)>;
double grad_check(const TracedFunction& f, std::span<const Matrix> params, double step);

}  // namespace dkgp::ad
