#pragma once

#include "fedspca/report.hpp"
#include "fedspca/stiefel.hpp"
#include "fedspca/types.hpp"

#include <optional>
#include <span>

namespace fedspca {

/// Memo for the covariance product (A^T A) w at one point. The line search
/// evaluates the objective and then the gradient at the same iterate, so
/// sharing this product halves the dominant cost.
struct FsspcaEvalScratch {
  Matrix w;
  Matrix cov_w;
  bool valid = false;
};

/// One worker's view of the smoothing-solver subproblem for a fixed round:
/// reconstruction on the local shard plus smoothing, dual, and proximity
/// terms against the received consensus.
struct FsspcaLocalProblem {
  const DataShard& shard;
  const Matrix& u;         // dual, d x r
  const Matrix& z;         // consensus, d x r
  const HyperParams& params;
  const Matrix* cached_gram = nullptr;   // (A^i)^T A^i, optional
  FsspcaEvalScratch* scratch = nullptr;  // optional product memo

  FsspcaLocalProblem(const DataShard& shard_, const Matrix& u_, const Matrix& z_,
                     const HyperParams& params_, const Matrix* gram = nullptr)
      : shard(shard_), u(u_), z(z_), params(params_), cached_gram(gram) {}
};

/// ||A - A w w^T||_F^2 + lambda1 * smooth_l1(w) + <u, w> + rho/2 ||w - z||_F^2.
/// Uses the cached Gram matrix when present.
double local_objective(const FsspcaLocalProblem& p, const Matrix& w);

/// Euclidean gradient of local_objective; with C = A^T A:
/// -4Cw + 2Cw(w^T w) + 2w(w^T C w) + lambda1 * smooth_l1_grad(w) + u + rho(w - z).
Matrix local_gradient(const FsspcaLocalProblem& p, const Matrix& w);

/// Inner descent loop: line searches from w_init until the Riemannian
/// gradient norm drops below params.tol_inner or params.max_inner_iters is
/// exhausted. The objective never increases across iterations.
LoadingMatrix worker_update(const FsspcaLocalProblem& p, const ManifoldPoint& w_init);

/// Consensus step: z = soft_threshold(mean(w_i + u_i / rho), lambda2 / (K rho)).
LoadingMatrix master_update(std::span<const LoadingMatrix> ws, std::span<const Matrix> us,
                            const HyperParams& params);

/// u + rho (w - z).
Matrix dual_update(const Matrix& u, const Matrix& w, const Matrix& z, double rho);

/// One deflation pass: extract `r` loadings with the given weights.
struct DeflationStep {
  int r = 1;
  HyperParams params;

  bool operator==(const DeflationStep&) const = default;
};

/// Full consensus-ADMM run of the smoothing solver over in-process workers.
/// Shards are used as-is (centering is the session layer's job). The final
/// consensus is orthonormalized through qf.
SolveResult solve_fsspca(std::span<const DataShard> shards, const HyperParams& params);

/// Sequential deflation: solve, map the result through the accumulated
/// complement projector, orthonormalize, deflate every shard, and repeat.
/// Later passes run worker updates on the generalized Stiefel manifold with
/// metric G. Requires sum of step ranks <= d.
SolveResult deflate_fsspca(std::span<const DataShard> shards,
                           std::span<const DeflationStep> schedule);

}  // namespace fedspca
