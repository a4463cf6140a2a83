#include "fedspca/fsspca.hpp"

#include "fedspca/operators.hpp"

#include "engine.hpp"

#include <cmath>
#include <cstring>

namespace fedspca {

namespace {

void check_shapes(const FsspcaLocalProblem& p, const Matrix& w) {
  const Index d = p.shard.cols();
  if (w.rows() != d) throw std::invalid_argument("fsspca: loading dimension mismatch");
  if (p.u.rows() != w.rows() || p.u.cols() != w.cols()) {
    throw std::invalid_argument("fsspca: dual shape mismatch");
  }
  if (p.z.rows() != w.rows() || p.z.cols() != w.cols()) {
    throw std::invalid_argument("fsspca: consensus shape mismatch");
  }
  if (p.cached_gram && (p.cached_gram->rows() != d || p.cached_gram->cols() != d)) {
    throw std::invalid_argument("fsspca: cached Gram shape mismatch");
  }
}

// Covariance product (A^T A) w through the Gram cache when present (cheaper
// for tall shards) or through the data (cheaper when rows << features), memoized
// in the problem's scratch.
const Matrix& covariance_product(const FsspcaLocalProblem& p, const Matrix& w,
                                 Matrix& storage) {
  if (p.scratch && p.scratch->valid && p.scratch->w.rows() == w.rows() &&
      p.scratch->w.cols() == w.cols() &&
      std::memcmp(p.scratch->w.data(), w.data(),
                  sizeof(double) * static_cast<std::size_t>(w.size())) == 0) {
    return p.scratch->cov_w;
  }
  Matrix cw;
  if (p.cached_gram) {
    cw = (*p.cached_gram) * w;
  } else {
    cw = p.shard.values.transpose() * (p.shard.values * w);
  }
  if (p.scratch) {
    p.scratch->w = w;
    p.scratch->cov_w = std::move(cw);
    p.scratch->valid = true;
    return p.scratch->cov_w;
  }
  storage = std::move(cw);
  return storage;
}

}  // namespace

double local_objective(const FsspcaLocalProblem& p, const Matrix& w) {
  check_shapes(p, w);
  // ||A - A w w^T||_F^2 = tr(C) - 2 tr(w^T C w) + tr((w^T C w)(w^T w)), C = A^T A.
  Matrix storage;
  const Matrix& cw = covariance_product(p, w, storage);
  const Matrix wtcw = w.transpose() * cw;
  const Matrix wtw = w.transpose() * w;
  const double total_sq =
      p.cached_gram ? p.cached_gram->trace() : p.shard.values.squaredNorm();
  const double recon = total_sq - 2.0 * wtcw.trace() + (wtcw * wtw).trace();
  const double smoothing = p.params.lambda1 > 0.0
                               ? p.params.lambda1 * smooth_l1(w, SmoothingParam(p.params.mu))
                               : 0.0;
  const double dual = (p.u.array() * w.array()).sum();
  const double prox = 0.5 * p.params.rho * (w - p.z).squaredNorm();
  return recon + smoothing + dual + prox;
}

Matrix local_gradient(const FsspcaLocalProblem& p, const Matrix& w) {
  check_shapes(p, w);
  Matrix storage;
  const Matrix& cw = covariance_product(p, w, storage);
  const Matrix wtw = w.transpose() * w;
  const Matrix wtcw = w.transpose() * cw;
  Matrix grad = -4.0 * cw + 2.0 * cw * wtw + 2.0 * w * wtcw;
  if (p.params.lambda1 > 0.0) {
    grad += p.params.lambda1 * smooth_l1_grad(w, SmoothingParam(p.params.mu));
  }
  grad += p.u;
  grad += p.params.rho * (w - p.z);
  return grad;
}

LoadingMatrix worker_update(const FsspcaLocalProblem& p, const ManifoldPoint& w_init) {
  FsspcaEvalScratch scratch;
  FsspcaLocalProblem memoized = p;
  if (!memoized.scratch) memoized.scratch = &scratch;

  ObjectiveFn f = [&memoized](const Matrix& m) { return local_objective(memoized, m); };
  GradientFn g = [&memoized](const Matrix& m) { return local_gradient(memoized, m); };

  ManifoldPoint w = w_init;
  for (int it = 0; it < p.params.max_inner_iters; ++it) {
    LineSearchResult step = line_search(f, g, w, p.params);
    if (step.theta == 0.0) break;  // stationary or no acceptable step
    w = std::move(step.w_next);
  }
  return w.w;
}

LoadingMatrix master_update(std::span<const LoadingMatrix> ws, std::span<const Matrix> us,
                            const HyperParams& params) {
  if (ws.empty()) throw std::invalid_argument("master_update: no worker updates");
  if (ws.size() != us.size()) throw std::invalid_argument("master_update: ws/us size mismatch");
  const double k = static_cast<double>(ws.size());
  Matrix v = Matrix::Zero(ws.front().dim(), ws.front().rank());
  for (std::size_t i = 0; i < ws.size(); ++i) {
    if (ws[i].values.rows() != v.rows() || ws[i].values.cols() != v.cols() ||
        us[i].rows() != v.rows() || us[i].cols() != v.cols()) {
      throw std::invalid_argument("master_update: shape mismatch");
    }
    v += ws[i].values + us[i] / params.rho;
  }
  v /= k;
  LoadingMatrix z;
  z.values = soft_threshold(v, params.lambda2 / (k * params.rho));
  return z;
}

Matrix dual_update(const Matrix& u, const Matrix& w, const Matrix& z, double rho) {
  if (u.rows() != w.rows() || u.cols() != w.cols() || z.rows() != w.rows() ||
      z.cols() != w.cols()) {
    throw std::invalid_argument("dual_update: shape mismatch");
  }
  return u + rho * (w - z);
}

SolveResult solve_fsspca(std::span<const DataShard> shards, const HyperParams& params) {
  params.validate();
  validate_shards(shards);
  SessionSetup setup;
  setup.algorithm = Algorithm::fsspca;
  setup.params = params;
  setup.seed = params.seed;
  setup.d = shards.front().cols();
  return detail::solve_in_process(setup, shards, /*threads=*/0);
}

SolveResult deflate_fsspca(std::span<const DataShard> shards,
                           std::span<const DeflationStep> schedule) {
  validate_shards(shards);
  if (schedule.empty()) throw std::invalid_argument("deflate_fsspca: empty schedule");
  Index total_rank = 0;
  for (const auto& step : schedule) {
    step.params.validate();
    if (step.r < 1) throw std::invalid_argument("deflate_fsspca: step rank must be >= 1");
    total_rank += step.r;
  }
  if (total_rank > shards.front().cols()) {
    throw std::invalid_argument("deflate_fsspca: schedule exhausts the feature dimension");
  }
  SessionSetup setup;
  setup.algorithm = Algorithm::fsspca;
  setup.params = schedule.front().params;
  setup.schedule.assign(schedule.begin(), schedule.end());
  setup.seed = schedule.front().params.seed;
  setup.d = shards.front().cols();
  return detail::solve_in_process(setup, shards, /*threads=*/0);
}

}  // namespace fedspca
