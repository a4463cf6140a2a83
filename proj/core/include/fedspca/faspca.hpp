#pragma once

#include "fedspca/fsspca.hpp"
#include "fedspca/report.hpp"
#include "fedspca/types.hpp"

#include <span>

namespace fedspca {

/// One worker's inputs for the projection-approximation update. In deflation
/// mode `shard` holds the deflated block (A^i G) and `G` the complement
/// projector used for the generalized normalization.
struct FaspcaWorkerInput {
  const Matrix& shard;   // n_i x d (possibly deflated)
  const Vector& w_prev;  // previous round's loading, unit length
  const Vector& u;       // dual
  const Vector& z;       // consensus
  double rho;
  const Matrix* G = nullptr;  // deflation projector, optional
};

/// Closed-form worker step: with y = A w_prev held fixed,
///   w = (2 A^T y - u + rho z) / (2 y^T y + rho),
/// normalized to unit length (or w / ||G w|| in deflation mode).
/// Throws NumericalError when the normalizer vanishes.
Vector faspca_worker_update(const FaspcaWorkerInput& inp);

/// Single-loading consensus ADMM with the closed-form worker update. The
/// returned vector is l2-normalized.
SolveResult solve_faspca(std::span<const DataShard> shards, const HyperParams& params);

/// Extracts loadings one at a time: solve, map through the accumulated
/// complement projector, l2-normalize, deflate shards, repeat. Every step
/// must have rank 1.
SolveResult deflate_faspca(std::span<const DataShard> shards,
                           std::span<const DeflationStep> schedule);

}  // namespace fedspca
