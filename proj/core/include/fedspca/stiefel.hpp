#pragma once

#include "fedspca/types.hpp"

#include <functional>
#include <memory>

namespace fedspca {

/// A point on the Stiefel manifold (w^T w = I) or, when a metric projector G
/// is attached, on the generalized Stiefel manifold (w^T G w = I). G is the
/// orthogonal-complement projector of previously extracted loadings and is
/// shared read-only between workers.
struct ManifoldPoint {
  LoadingMatrix w;
  std::shared_ptr<const Matrix> G;  // null: standard metric

  static ManifoldPoint standard(LoadingMatrix w);
  static ManifoldPoint generalized(LoadingMatrix w, std::shared_ptr<const Matrix> G);

  bool is_generalized() const { return G != nullptr; }

  /// ||w^T w - I|| <= 1e-8 (standard) or ||w^T G w - I|| <= 1e-6 (generalized);
  /// throws NumericalError when violated.
  void check_on_manifold() const;
};

/// sym(A) = (A + A^T) / 2. Throws std::invalid_argument for non-square input.
Matrix sym(const Matrix& A);

/// Orthogonal projection of X onto the tangent space at w:
/// X - w sym(w^T X), or X - w sym(w^T G X) under a metric G.
Matrix project_tangent(const ManifoldPoint& w, const Matrix& X);

/// Q factor of the thin QR factorization, sign convention diag(R) > 0.
/// Throws NumericalError on (numerically) rank-deficient input.
Matrix qf(const Matrix& A);

/// QR retraction: qf(w + V). The result carries the standard metric.
ManifoldPoint retract_qf(const ManifoldPoint& w, const Matrix& V);

/// Cholesky QR retraction on the generalized Stiefel manifold:
/// (w + theta*zeta) R^{-1} with R^T R = (w + theta*zeta)^T G (w + theta*zeta).
/// Retries once with a 1e-10 jitter on the small Gram factor, since G is a
/// singular projector and the factor can be PSD-but-singular at degenerate
/// points; a second failure raises NumericalError.
ManifoldPoint retract_cholqr(const ManifoldPoint& w, double theta, const Matrix& zeta);

/// Metric-appropriate retraction: qf for standard points, Cholesky QR when a
/// metric G is attached.
ManifoldPoint retract(const ManifoldPoint& w, double theta, const Matrix& zeta);

/// Random point with w^T G w = I, built by projecting a Gaussian matrix into
/// range(G) and normalizing through the Cholesky factor of its small Gram.
ManifoldPoint random_g_orthonormal(Index d, Index r, std::shared_ptr<const Matrix> G,
                                   std::uint64_t seed);

struct LineSearchResult {
  enum class Condition { wolfe, armijo_fallback, max_steps };

  double theta = 0.0;
  ManifoldPoint w_next;
  double f_next = 0.0;
  int n_evals = 0;  // objective + gradient evaluations consumed
  Condition condition = Condition::max_steps;
};

using ObjectiveFn = std::function<double(const Matrix&)>;
using GradientFn = std::function<Matrix(const Matrix&)>;

/// One strong-Wolfe line search along the negative Riemannian gradient.
///
/// The Riemannian gradient is project_tangent(w0, grad_f(w0)) and the search
/// direction is its negation. Steps are generated by bracketing (doubling
/// from theta = 1) and bisection on phi(theta) = f(retract(w0, theta*zeta));
/// the curvature condition compares zeta against the gradient at the
/// retracted point without transport. If no strong-Wolfe step emerges within
/// params.max_linesearch_steps, plain Armijo backtracking takes over.
///
/// A vanishing Riemannian gradient (norm <= params.tol_inner) returns w0 with
/// theta = 0 and condition armijo_fallback. Non-finite objective or gradient
/// values raise NumericalError.
LineSearchResult line_search(const ObjectiveFn& f, const GradientFn& grad_f,
                             const ManifoldPoint& w0, const HyperParams& params);

}  // namespace fedspca
