#include "fedspca/stiefel.hpp"

#include "fedspca/rng.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <cmath>
#include <utility>

namespace fedspca {

namespace {

bool finite(double x) { return std::isfinite(x); }

void require_finite(double x, const char* what) {
  if (!finite(x)) throw NumericalError(std::string(what) + " is not finite");
}

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw NumericalError(std::string(what) + " is not finite");
}

}  // namespace

ManifoldPoint ManifoldPoint::standard(LoadingMatrix w) {
  ManifoldPoint p;
  p.w = std::move(w);
  return p;
}

ManifoldPoint ManifoldPoint::generalized(LoadingMatrix w, std::shared_ptr<const Matrix> G) {
  if (!G) throw std::invalid_argument("ManifoldPoint: generalized point needs a metric");
  ManifoldPoint p;
  p.w = std::move(w);
  p.G = std::move(G);
  return p;
}

void ManifoldPoint::check_on_manifold() const {
  const Index r = w.rank();
  const Matrix eye = Matrix::Identity(r, r);
  if (!is_generalized()) {
    const double err = (w.values.transpose() * w.values - eye).norm();
    if (err > 1e-8) throw NumericalError("ManifoldPoint: w^T w deviates from I by " + std::to_string(err));
  } else {
    const double err = (w.values.transpose() * (*G) * w.values - eye).norm();
    if (err > 1e-6) throw NumericalError("ManifoldPoint: w^T G w deviates from I by " + std::to_string(err));
  }
}

Matrix sym(const Matrix& A) {
  if (A.rows() != A.cols()) throw std::invalid_argument("sym: matrix must be square");
  return 0.5 * (A + A.transpose());
}

Matrix project_tangent(const ManifoldPoint& w, const Matrix& X) {
  if (X.rows() != w.w.dim() || X.cols() != w.w.rank()) {
    throw std::invalid_argument("project_tangent: shape mismatch");
  }
  if (!w.is_generalized()) {
    return X - w.w.values * sym(w.w.values.transpose() * X);
  }
  return X - w.w.values * sym(w.w.values.transpose() * (*w.G) * X);
}

Matrix qf(const Matrix& A) {
  const Index d = A.rows();
  const Index r = A.cols();
  if (r > d) throw std::invalid_argument("qf: more columns than rows");
  Eigen::HouseholderQR<Matrix> qr(A);
  Matrix q = qr.householderQ() * Matrix::Identity(d, r);
  Matrix rfac = qr.matrixQR().topRows(r).triangularView<Eigen::Upper>();

  double max_diag = 0.0;
  for (Index j = 0; j < r; ++j) max_diag = std::max(max_diag, std::abs(rfac(j, j)));
  if (max_diag == 0.0) throw NumericalError("qf: rank-deficient input");
  for (Index j = 0; j < r; ++j) {
    if (std::abs(rfac(j, j)) < 1e-12 * max_diag) {
      throw NumericalError("qf: rank-deficient input");
    }
    if (rfac(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

ManifoldPoint retract_qf(const ManifoldPoint& w, const Matrix& V) {
  if (V.rows() != w.w.dim() || V.cols() != w.w.rank()) {
    throw std::invalid_argument("retract_qf: shape mismatch");
  }
  LoadingMatrix next;
  next.values = qf(w.w.values + V);
  next.orthonormal = true;
  return ManifoldPoint::standard(std::move(next));
}

ManifoldPoint retract_cholqr(const ManifoldPoint& w, double theta, const Matrix& zeta) {
  if (!w.is_generalized()) {
    throw std::invalid_argument("retract_cholqr: point has no metric attached");
  }
  const Matrix step = w.w.values + theta * zeta;
  const Matrix& G = *w.G;
  const Index r = step.cols();
  Matrix small = step.transpose() * (G * step);
  require_finite(small, "retract_cholqr: Gram factor");

  Eigen::LLT<Matrix> llt(small);
  if (llt.info() != Eigen::Success) {
    small += 1e-10 * Matrix::Identity(r, r);
    llt.compute(small);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("retract_cholqr: Cholesky failed after jitter (deflation degeneracy)");
    }
  }
  Matrix upper = llt.matrixU();
  Matrix rinv = upper.triangularView<Eigen::Upper>().solve(Matrix::Identity(r, r));

  LoadingMatrix next;
  next.values = step * rinv;
  return ManifoldPoint::generalized(std::move(next), w.G);
}

ManifoldPoint retract(const ManifoldPoint& w, double theta, const Matrix& zeta) {
  if (w.is_generalized()) return retract_cholqr(w, theta, zeta);
  return retract_qf(w, theta * zeta);
}

ManifoldPoint random_g_orthonormal(Index d, Index r, std::shared_ptr<const Matrix> G,
                                   std::uint64_t seed) {
  if (!G || G->rows() != d || G->cols() != d) {
    throw std::invalid_argument("random_g_orthonormal: bad metric");
  }
  Rng rng(seed);
  Matrix g(d, r);
  for (Index i = 0; i < d; ++i) {
    for (Index j = 0; j < r; ++j) g(i, j) = rng.gaussian();
  }
  Matrix y = (*G) * g;
  Matrix small = y.transpose() * ((*G) * y);
  Eigen::LLT<Matrix> llt(small);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("random_g_orthonormal: metric rank below requested loading count");
  }
  Matrix upper = llt.matrixU();
  Matrix rinv = upper.triangularView<Eigen::Upper>().solve(Matrix::Identity(r, r));
  LoadingMatrix w;
  w.values = y * rinv;
  return ManifoldPoint::generalized(std::move(w), std::move(G));
}

namespace {

struct Probe {
  double value = 0.0;
  ManifoldPoint point;
  bool has_slope = false;
  double slope = 0.0;
};

}  // namespace

LineSearchResult line_search(const ObjectiveFn& f, const GradientFn& grad_f,
                             const ManifoldPoint& w0, const HyperParams& params) {
  int evals = 0;

  auto value_at = [&](const Matrix& m) {
    ++evals;
    double v = f(m);
    require_finite(v, "line_search: objective");
    return v;
  };
  auto rgrad_at = [&](const ManifoldPoint& p) {
    ++evals;
    Matrix eg = grad_f(p.w.values);
    require_finite(eg, "line_search: gradient");
    return project_tangent(p, eg);
  };

  const double f0 = value_at(w0.w.values);
  const Matrix rgrad0 = rgrad_at(w0);
  const double gnorm = rgrad0.norm();

  LineSearchResult res;
  res.w_next = w0;
  res.f_next = f0;

  if (gnorm <= params.tol_inner) {
    res.condition = LineSearchResult::Condition::armijo_fallback;
    res.n_evals = evals;
    return res;
  }

  const Matrix zeta = -rgrad0;
  const double dphi0 = -(rgrad0.squaredNorm());  // <grad, zeta> < 0

  auto probe = [&](double theta) {
    Probe p;
    p.point = retract(w0, theta, zeta);
    p.value = value_at(p.point.w.values);
    return p;
  };
  auto slope = [&](Probe& p) {
    if (!p.has_slope) {
      // Curvature check compares zeta against the new Riemannian gradient,
      // without transporting zeta to the new tangent space.
      p.slope = (rgrad_at(p.point).array() * zeta.array()).sum();
      p.has_slope = true;
    }
    return p.slope;
  };
  auto armijo_ok = [&](double theta, double val) {
    return val <= f0 + params.c1 * theta * dphi0;
  };
  auto accept = [&](double theta, Probe& p, LineSearchResult::Condition cond) {
    res.theta = theta;
    res.w_next = std::move(p.point);
    res.f_next = p.value;
    res.condition = cond;
    res.n_evals = evals;
    return res;
  };

  const double curvature_bound = -params.c2 * dphi0;

  // Zoom on a bracket [lo, hi] by bisection; lo always satisfies Armijo.
  auto zoom = [&](double lo, Probe plo, double hi) -> std::pair<bool, LineSearchResult> {
    for (int j = 0; j < params.max_linesearch_steps; ++j) {
      const double theta = 0.5 * (lo + hi);
      Probe pt = probe(theta);
      if (!armijo_ok(theta, pt.value) || pt.value >= plo.value) {
        hi = theta;
        continue;
      }
      const double dphi_t = slope(pt);
      if (std::abs(dphi_t) <= curvature_bound) {
        return {true, accept(theta, pt, LineSearchResult::Condition::wolfe)};
      }
      if (dphi_t * (hi - lo) >= 0.0) hi = lo;
      lo = theta;
      plo = std::move(pt);
    }
    if (lo > 0.0) {
      return {true, accept(lo, plo, LineSearchResult::Condition::armijo_fallback)};
    }
    return {false, res};
  };

  // Bracketing stage: expand from theta = 1 by doubling.
  double theta_prev = 0.0;
  Probe prev;
  prev.value = f0;
  prev.point = w0;
  double theta = 1.0;
  for (int i = 0; i < params.max_linesearch_steps; ++i) {
    Probe pt = probe(theta);
    if (!armijo_ok(theta, pt.value) || (i > 0 && pt.value >= prev.value)) {
      auto [done, r2] = zoom(theta_prev, std::move(prev), theta);
      if (done) return r2;
      break;
    }
    const double dphi_t = slope(pt);
    if (std::abs(dphi_t) <= curvature_bound) {
      return accept(theta, pt, LineSearchResult::Condition::wolfe);
    }
    if (dphi_t >= 0.0) {
      auto [done, r2] = zoom(theta, std::move(pt), theta_prev);
      if (done) return r2;
      break;
    }
    theta_prev = theta;
    prev = std::move(pt);
    theta *= 2.0;
  }

  // Armijo backtracking fallback.
  theta = 1.0;
  for (int i = 0; i < params.max_linesearch_steps; ++i) {
    Probe pt = probe(theta);
    if (armijo_ok(theta, pt.value)) {
      return accept(theta, pt, LineSearchResult::Condition::armijo_fallback);
    }
    theta *= 0.5;
  }

  res.theta = 0.0;
  res.condition = LineSearchResult::Condition::max_steps;
  res.n_evals = evals;
  return res;
}

}  // namespace fedspca
