#pragma once

#include "fedspca/types.hpp"

#include <functional>
#include <vector>

// Independent oracles used to pin expected values. Everything here is kept
// deliberately naive and separate from the library's computation paths.
namespace fedspca::testing {

/// Central finite differences of a scalar function over matrix entries.
Matrix finite_difference_gradient(const std::function<double(const Matrix&)>& f, const Matrix& at,
                                  double h = 1e-6);

/// Eigenvectors of a symmetric matrix sorted by descending eigenvalue.
Matrix top_eigenvectors(const Matrix& sym, Index count);

/// Orthogonal projection of X onto the tangent space of the Stiefel manifold
/// at w, computed by projecting onto an explicit orthonormal basis of that
/// space (skew part + orthogonal-complement part).
Matrix tangent_projection_by_basis(const Matrix& w, const Matrix& X);

/// argmin over z of t*|z| + 0.5*(z - v)^2 by brute-force grid search.
double prox_abs_grid_search(double v, double t, double step = 1e-5);

/// Golden-section minimizer of a unimodal function on [lo, hi].
double golden_section_min(const std::function<double(double)>& f, double lo, double hi,
                          int iters = 90);

/// sqrt(G)^{-1} qf(sqrt(G) (w + theta*zeta)) via eigendecomposition;
/// requires a symmetric positive-definite G.
Matrix sqrt_metric_retraction(const Matrix& G, const Matrix& w, double theta, const Matrix& zeta);

/// Random symmetric positive-definite matrix with condition spread `spread`.
Matrix random_spd(Index d, std::uint64_t seed, double spread = 10.0);

/// Random orthogonal projector of the given rank (G = Q Q^T complement form).
Matrix random_projector(Index d, Index rank, std::uint64_t seed);

/// Deterministic measurement-style base matrix: two dominant correlated
/// directions over 30 features plus small noise. Stands in for real tabular
/// data in augmentation tests.
Matrix wdbc_like_base(Index rows = 569, Index cols = 30, std::uint64_t seed = 20240613);

/// Stacks shards into one matrix, in shard order.
Matrix stack_shards(const std::vector<DataShard>& shards);

}  // namespace fedspca::testing
