#include "fedspca/faspca.hpp"

#include "engine.hpp"

#include <cmath>

namespace fedspca {

Vector faspca_worker_update(const FaspcaWorkerInput& inp) {
  const Index d = inp.shard.cols();
  if (inp.w_prev.size() != d || inp.u.size() != d || inp.z.size() != d) {
    throw std::invalid_argument("faspca_worker_update: shape mismatch");
  }
  if (inp.G) {
    if (inp.G->rows() != d || inp.G->cols() != d) {
      throw std::invalid_argument("faspca_worker_update: projector shape mismatch");
    }
    if (std::abs(((*inp.G) * inp.w_prev).norm() - 1.0) > 1e-6) {
      throw std::invalid_argument("faspca_worker_update: w_prev not G-normalized");
    }
  } else if (std::abs(inp.w_prev.norm() - 1.0) > 1e-6) {
    throw std::invalid_argument("faspca_worker_update: w_prev not unit length");
  }

  const Vector y = inp.shard * inp.w_prev;
  // Denominator 2 y^T y + rho is strictly positive for rho > 0.
  const double denom = 2.0 * y.squaredNorm() + inp.rho;
  Vector w = (2.0 * (inp.shard.transpose() * y) - inp.u + inp.rho * inp.z) / denom;

  const double norm = inp.G ? ((*inp.G) * w).norm() : w.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw NumericalError("faspca_worker_update: degenerate update (zero before normalization)");
  }
  return w / norm;
}

SolveResult solve_faspca(std::span<const DataShard> shards, const HyperParams& params) {
  params.validate();
  if (params.r != 1) {
    throw std::invalid_argument("solve_faspca: computes a single loading (r must be 1)");
  }
  validate_shards(shards);
  SessionSetup setup;
  setup.algorithm = Algorithm::faspca;
  setup.params = params;
  setup.seed = params.seed;
  setup.d = shards.front().cols();
  return detail::solve_in_process(setup, shards, /*threads=*/0);
}

SolveResult deflate_faspca(std::span<const DataShard> shards,
                           std::span<const DeflationStep> schedule) {
  validate_shards(shards);
  if (schedule.empty()) throw std::invalid_argument("deflate_faspca: empty schedule");
  for (const auto& step : schedule) {
    step.params.validate();
    if (step.r != 1) {
      throw std::invalid_argument("deflate_faspca: every step extracts one loading");
    }
  }
  if (static_cast<Index>(schedule.size()) > shards.front().cols()) {
    throw std::invalid_argument("deflate_faspca: schedule exhausts the feature dimension");
  }
  SessionSetup setup;
  setup.algorithm = Algorithm::faspca;
  setup.params = schedule.front().params;
  setup.schedule.assign(schedule.begin(), schedule.end());
  setup.seed = schedule.front().params.seed;
  setup.d = shards.front().cols();
  return detail::solve_in_process(setup, shards, /*threads=*/0);
}

}  // namespace fedspca
