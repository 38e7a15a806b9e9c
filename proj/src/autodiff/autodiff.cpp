#include "dkgp/autodiff.hpp"

#include <cmath>
#include <memory>
#include <string>

#include "dkgp/compute.hpp"
#include "dkgp/gp.hpp"

namespace dkgp::ad {

const Matrix& Var::value() const {
  if (tape_ == nullptr) {
    throw Error("Var: uninitialized handle");
  }
  return tape_->value(id_);
}

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) {
    throw ShapeError("Var::scalar on a " + std::to_string(v.rows()) + "x" +
                     std::to_string(v.cols()) + " value");
  }
  return v(0, 0);
}

const Matrix& Gradients::of(const Var& v) const {
  const Matrix& adj = adjoints_.at(v.id());
  if (adj.size() != 0) {
    return adj;
  }
  zero_ = Matrix::Zero(v.rows(), v.cols());
  return zero_;
}

Var Tape::leaf(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, true});
  return {this, nodes_.size() - 1};
}

Var Tape::leaf(double value) { return leaf(Matrix::Constant(1, 1, value)); }

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, false});
  return {this, nodes_.size() - 1};
}

Var Tape::constant(double value) { return constant(Matrix::Constant(1, 1, value)); }

Var Tape::record(std::vector<Var> inputs, Matrix value, VjpRule vjp) {
  Node node;
  node.value = std::move(value);
  node.vjp = std::move(vjp);
  for (const Var& in : inputs) {
    if (in.tape() != this) {
      throw Error("Tape::record: input belongs to a different tape");
    }
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Gradients Tape::backward(const Var& output) const {
  if (output.tape() != this) {
    throw Error("Tape::backward: output belongs to a different tape");
  }
  if (output.value().size() != 1) {
    throw ShapeError("backward: output is not scalar");
  }
  std::vector<Matrix> adj(nodes_.size());
  adj[output.id()] = Matrix::Ones(1, 1);
  for (std::size_t id = output.id() + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    if (adj[id].size() == 0 || !node.requires_grad || !node.vjp) {
      continue;
    }
    std::vector<Matrix> contributions = node.vjp(adj[id]);
    for (std::size_t k = node.inputs.size(); k-- > 0;) {
      const std::size_t in = node.inputs[k];
      if (!nodes_[in].requires_grad || k >= contributions.size() ||
          contributions[k].size() == 0) {
        continue;
      }
      if (adj[in].size() == 0) {
        adj[in] = std::move(contributions[k]);
      } else {
        adj[in] += contributions[k];
      }
    }
  }
  return Gradients(std::move(adj));
}

namespace {

struct Shape {
  Eigen::Index rows;
  Eigen::Index cols;
};

Shape broadcast_shape(const Matrix& a, const Matrix& b, const char* op) {
  auto fits = [](const Matrix& small, const Matrix& big) {
    return (small.rows() == big.rows() && small.cols() == big.cols()) ||
           (small.size() == 1) || (small.rows() == 1 && small.cols() == big.cols()) ||
           (small.cols() == 1 && small.rows() == big.rows());
  };
  if (fits(b, a)) {
    return {a.rows(), a.cols()};
  }
  if (fits(a, b)) {
    return {b.rows(), b.cols()};
  }
  throw ShapeError(std::string(op) + ": incompatible shapes " + std::to_string(a.rows()) + "x" +
                   std::to_string(a.cols()) + " and " + std::to_string(b.rows()) + "x" +
                   std::to_string(b.cols()));
}

Matrix expand(const Matrix& m, Shape s) {
  if (m.rows() == s.rows && m.cols() == s.cols) {
    return m;
  }
  if (m.size() == 1) {
    return Matrix::Constant(s.rows, s.cols, m(0, 0));
  }
  if (m.rows() == 1) {
    return m.replicate(s.rows, 1);
  }
  return m.replicate(1, s.cols);
}

Matrix reduce_to(const Matrix& g, const Matrix& like) {
  if (g.rows() == like.rows() && g.cols() == like.cols()) {
    return g;
  }
  if (like.size() == 1) {
    return Matrix::Constant(1, 1, g.sum());
  }
  if (like.rows() == 1) {
    return g.colwise().sum();
  }
  return g.rowwise().sum();
}

}  // namespace

Var add(const Var& a, const Var& b) {
  const Shape s = broadcast_shape(a.value(), b.value(), "add");
  Matrix out = expand(a.value(), s) + expand(b.value(), s);
  Tape* t = a.tape();
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return t->record({a, b}, std::move(out), [t, ia, ib](const Matrix& g) {
    return std::vector<Matrix>{reduce_to(g, t->value(ia)), reduce_to(g, t->value(ib))};
  });
}

Var subtract(const Var& a, const Var& b) {
  const Shape s = broadcast_shape(a.value(), b.value(), "subtract");
  Matrix out = expand(a.value(), s) - expand(b.value(), s);
  Tape* t = a.tape();
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return t->record({a, b}, std::move(out), [t, ia, ib](const Matrix& g) {
    Matrix neg = -g;
    return std::vector<Matrix>{reduce_to(g, t->value(ia)), reduce_to(neg, t->value(ib))};
  });
}

Var multiply(const Var& a, const Var& b) {
  const Shape s = broadcast_shape(a.value(), b.value(), "multiply");
  Matrix out = expand(a.value(), s).cwiseProduct(expand(b.value(), s));
  Tape* t = a.tape();
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return t->record({a, b}, std::move(out), [t, ia, ib, s](const Matrix& g) {
    const Matrix& av = t->value(ia);
    const Matrix& bv = t->value(ib);
    std::vector<Matrix> grads(2);
    if (t->requires_grad(ia)) {
      grads[0] = reduce_to(g.cwiseProduct(expand(bv, s)), av);
    }
    if (t->requires_grad(ib)) {
      grads[1] = reduce_to(g.cwiseProduct(expand(av, s)), bv);
    }
    return grads;
  });
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions " + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.rows()));
  }
  Matrix out = a.value() * b.value();
  Tape* t = a.tape();
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return t->record({a, b}, std::move(out), [t, ia, ib](const Matrix& g) {
    std::vector<Matrix> grads(2);
    if (t->requires_grad(ia)) {
      grads[0] = g * t->value(ib).transpose();
    }
    if (t->requires_grad(ib)) {
      grads[1] = t->value(ia).transpose() * g;
    }
    return grads;
  });
}

Var transpose(const Var& a) {
  return a.tape()->record({a}, a.value().transpose(), [](const Matrix& g) {
    return std::vector<Matrix>{g.transpose()};
  });
}

Var exp(const Var& a) {
  Tape* t = a.tape();
  // The rule reads the output value back; it is the next node recorded.
  const std::size_t io = t->size();
  return t->record({a}, a.value().array().exp().matrix(), [t, io](const Matrix& g) {
    return std::vector<Matrix>{g.cwiseProduct(t->value(io))};
  });
}

Var log(const Var& a) {
  Tape* t = a.tape();
  const std::size_t ia = a.id();
  return t->record({a}, a.value().array().log().matrix(), [t, ia](const Matrix& g) {
    return std::vector<Matrix>{g.cwiseQuotient(t->value(ia))};
  });
}

Var square(const Var& a) {
  Tape* t = a.tape();
  const std::size_t ia = a.id();
  return t->record({a}, a.value().cwiseAbs2(), [t, ia](const Matrix& g) {
    return std::vector<Matrix>{2.0 * g.cwiseProduct(t->value(ia))};
  });
}

Var sum(const Var& a) {
  Tape* t = a.tape();
  const Eigen::Index r = a.rows();
  const Eigen::Index c = a.cols();
  const Vector flat = Eigen::Map<const Vector>(a.value().data(), a.value().size());
  const double total = linalg::pairwise_sum({flat.data(), static_cast<std::size_t>(flat.size())});
  return t->record({a}, Matrix::Constant(1, 1, total), [r, c](const Matrix& g) {
    return std::vector<Matrix>{Matrix::Constant(r, c, g(0, 0))};
  });
}

Var silu(const Var& a) {
  Tape* t = a.tape();
  const std::size_t ia = a.id();
  return t->record({a}, compute::silu(a.value()), [t, ia](const Matrix& g) {
    return std::vector<Matrix>{g.cwiseProduct(compute::silu_derivative(t->value(ia)))};
  });
}

Var scale(const Var& a, double factor) {
  return a.tape()->record({a}, factor * a.value(), [factor](const Matrix& g) {
    return std::vector<Matrix>{factor * g};
  });
}

Var pairwise_sqdist(const Var& a, const Var& b) {
  Tape* t = a.tape();
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  Matrix out = compute::pairwise_sqdist(a.value(), b.value(), ia == ib);
  return t->record({a, b}, std::move(out), [t, ia, ib](const Matrix& g) {
    const Matrix& A = t->value(ia);
    const Matrix& B = t->value(ib);
    std::vector<Matrix> grads(2);
    // d/dA_i sum_j g_ij ||A_i - B_j||^2 = 2 (rowsum(g)_i A_i - (g B)_i)
    if (t->requires_grad(ia)) {
      grads[0] = 2.0 * (g.rowwise().sum().asDiagonal() * A - g * B);
    }
    if (t->requires_grad(ib)) {
      grads[1] = 2.0 * (g.colwise().sum().transpose().asDiagonal() * B - g.transpose() * A);
    }
    return grads;
  });
}

Var bspline_combine(const Var& x, const Var& weight, const Var& scaler, const SplineGrid& grid) {
  const Eigen::Index in = x.cols();
  const auto nb = static_cast<Eigen::Index>(grid.basis_count());
  const Eigen::Index out_dim = weight.rows();
  if (weight.cols() != in * nb || scaler.rows() != out_dim || scaler.cols() != in) {
    throw ShapeError("bspline_combine: expected weight " + std::to_string(out_dim) + "x" +
                     std::to_string(in * nb) + " and scaler " + std::to_string(out_dim) + "x" +
                     std::to_string(in));
  }
  Tape* t = x.tape();
  const bool need_dx = t->requires_grad(x.id());
  auto design = std::make_shared<compute::BsplineDesign>(
      compute::bspline_design(x.value(), grid.knots, grid.order, grid.lo, grid.hi, need_dx));
  auto expanded_scaler = [nb](const Matrix& s) {
    Matrix e(s.rows(), s.cols() * nb);
    for (Eigen::Index i = 0; i < s.cols(); ++i) {
      e.middleCols(i * nb, nb) = s.col(i).replicate(1, nb);
    }
    return e;
  };
  const Matrix effective = weight.value().cwiseProduct(expanded_scaler(scaler.value()));
  Matrix out = design->basis * effective.transpose();

  const std::size_t iw = weight.id();
  const std::size_t is = scaler.id();
  const std::size_t ix = x.id();
  return t->record(
      {x, weight, scaler}, std::move(out),
      [t, design, iw, is, ix, nb, in, expanded_scaler](const Matrix& g) {
        const Matrix& W = t->value(iw);
        const Matrix& S = t->value(is);
        const Matrix Sx = expanded_scaler(S);
        std::vector<Matrix> grads(3);
        if (t->requires_grad(iw) || t->requires_grad(is)) {
          const Matrix d_eff = g.transpose() * design->basis;
          if (t->requires_grad(iw)) {
            grads[1] = d_eff.cwiseProduct(Sx);
          }
          if (t->requires_grad(is)) {
            const Matrix dw = d_eff.cwiseProduct(W);
            Matrix ds(S.rows(), in);
            for (Eigen::Index i = 0; i < in; ++i) {
              ds.col(i) = dw.middleCols(i * nb, nb).rowwise().sum();
            }
            grads[2] = std::move(ds);
          }
        }
        if (t->requires_grad(ix)) {
          const Matrix dB = g * W.cwiseProduct(Sx);
          const Matrix prod = dB.cwiseProduct(design->derivative);
          Matrix dx(prod.rows(), in);
          for (Eigen::Index i = 0; i < in; ++i) {
            dx.col(i) = prod.middleCols(i * nb, nb).rowwise().sum();
          }
          grads[0] = std::move(dx);
        }
        return grads;
      });
}

Var cholesky_logdet_quadform(const Var& K, const Var& r) {
  if (K.rows() != K.cols() || r.rows() != K.rows() || r.cols() != 1) {
    throw ShapeError("cholesky_logdet_quadform: expected square K and column r");
  }
  double applied = 0.0;
  auto L = std::make_shared<Matrix>(linalg::cholesky_jittered(K.value(), &applied));
  // The jitter is a fixed fraction of mean(diag K), so it moves with K too.
  const double mean_diag = K.rows() > 0 ? K.value().diagonal().mean() : 0.0;
  const double jitter_slope = mean_diag > 0.0 && std::isfinite(mean_diag)
                                  ? applied / mean_diag / static_cast<double>(K.rows())
                                  : 0.0;
  auto alpha = std::make_shared<Matrix>(linalg::cholesky_solve(*L, r.value()));
  const double quad = r.value().col(0).dot(alpha->col(0));
  const double value = quad + linalg::cholesky_logdet(*L);
  Tape* t = K.tape();
  const std::size_t iK = K.id();
  const std::size_t ir = r.id();
  return t->record({K, r}, Matrix::Constant(1, 1, value), [t, L, alpha, iK, ir, jitter_slope](const Matrix& g) {
    const double s = g(0, 0);
    std::vector<Matrix> grads(2);
    if (t->requires_grad(iK)) {
      // d(r^T K^-1 r + log|K|)/dK = K^-1 - a a^T = 2 * dNLL/dK
      Matrix G = (2.0 * s) * gp::dnll_dK_from_factor(*L, alpha->col(0));
      G.diagonal().array() += jitter_slope * G.trace();
      grads[0] = std::move(G);
    }
    if (t->requires_grad(ir)) {
      grads[1] = (2.0 * s) * (*alpha);
    }
    return grads;
  });
}

double grad_check(const TracedFunction& f, std::span<const Matrix> params, double step) {
  if (!(step > 0.0)) {
    throw InvalidArgument("grad_check: step must be positive");
  }
  std::vector<Matrix> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const Matrix& p : params) {
      leaves.push_back(tape.leaf(p));
    }
    const Var out = f(tape, leaves);
    const Gradients grads = tape.backward(out);
    for (const Var& leaf : leaves) {
      analytic.push_back(grads.of(leaf));
    }
  }
  auto evaluate = [&](const std::vector<Matrix>& values) {
    Tape tape;
    std::vector<Var> leaves;
    for (const Matrix& p : values) {
      leaves.push_back(tape.leaf(p));
    }
    return f(tape, leaves).scalar();
  };
  std::vector<Matrix> probe(params.begin(), params.end());
  double worst = 0.0;
  for (std::size_t k = 0; k < probe.size(); ++k) {
    for (Eigen::Index e = 0; e < probe[k].size(); ++e) {
      const double original = probe[k].data()[e];
      probe[k].data()[e] = original + step;
      const double plus = evaluate(probe);
      probe[k].data()[e] = original - step;
      const double minus = evaluate(probe);
      probe[k].data()[e] = original;
      const double fd = (plus - minus) / (2.0 * step);
      const double err = std::abs(analytic[k].data()[e] - fd) / (std::abs(fd) + 1e-8);
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace dkgp::ad
