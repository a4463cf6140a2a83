#include "fedspca/types.hpp"

#include "fedspca/rng.hpp"
#include "fedspca/stiefel.hpp"

#include <cmath>

namespace fedspca {

void validate_shards(std::span<const DataShard> shards) {
  if (shards.empty()) throw std::invalid_argument("validate_shards: no shards");
  const Index d = shards.front().cols();
  if (d < 1) throw std::invalid_argument("validate_shards: empty feature dimension");
  for (const auto& s : shards) {
    if (s.cols() != d) {
      throw std::invalid_argument("validate_shards: shard " + std::to_string(s.worker_id) +
                                  " has " + std::to_string(s.cols()) + " columns, expected " +
                                  std::to_string(d));
    }
    if (!s.values.allFinite()) {
      throw std::invalid_argument("validate_shards: shard " + std::to_string(s.worker_id) +
                                  " contains non-finite values");
    }
  }
}

void HyperParams::validate() const {
  auto fail = [](const std::string& what) {
    throw std::invalid_argument("HyperParams: " + what);
  };
  if (!(lambda >= 0.0)) fail("lambda must be >= 0");
  if (!(lambda1 >= 0.0)) fail("lambda1 must be >= 0");
  if (!(lambda2 >= 0.0)) fail("lambda2 must be >= 0");
  if (!(rho > 0.0)) fail("rho must be > 0");
  if (!(mu > 0.0)) fail("mu must be > 0");
  if (r < 1) fail("r must be >= 1");
  if (!(0.0 < c1 && c1 < c2 && c2 < 1.0)) fail("need 0 < c1 < c2 < 1");
  if (max_rounds < 1) fail("max_rounds must be >= 1");
  if (max_linesearch_steps < 1) fail("max_linesearch_steps must be >= 1");
  if (max_inner_iters < 1) fail("max_inner_iters must be >= 1");
  if (!(tol_inner > 0.0)) fail("tol_inner must be > 0");
  if (!std::isfinite(tol_primal) || !std::isfinite(tol_dual)) fail("tolerances must be finite");
}

double HyperParams::resolved_tol_primal(Index d, Index rank) const {
  if (tol_primal > 0.0) return tol_primal;
  return 1e-4 * std::sqrt(static_cast<double>(d) * static_cast<double>(rank));
}

double HyperParams::resolved_tol_dual(Index d, Index rank) const {
  if (tol_dual > 0.0) return tol_dual;
  return 1e-4 * std::sqrt(static_cast<double>(d) * static_cast<double>(rank));
}

DeflationContext DeflationContext::identity(Index d) {
  DeflationContext ctx;
  ctx.G = Matrix::Identity(d, d);
  return ctx;
}

void DeflationContext::absorb(const Matrix& z) {
  if (z.rows() != G.rows()) throw std::invalid_argument("DeflationContext: dimension mismatch");
  G = G * (Matrix::Identity(G.rows(), G.cols()) - z * z.transpose());
  accepted.push_back(z);
}

void DeflationContext::check(double tol_sym, double tol_idem, double tol_annihilate) const {
  if ((G - G.transpose()).norm() > tol_sym) {
    throw NumericalError("DeflationContext: projector lost symmetry");
  }
  if ((G * G - G).norm() > tol_idem) {
    throw NumericalError("DeflationContext: projector lost idempotence");
  }
  for (const auto& z : accepted) {
    if ((G * z).norm() > tol_annihilate) {
      throw NumericalError("DeflationContext: accepted loading not annihilated");
    }
  }
}

LoadingMatrix random_orthonormal(Index d, Index r, std::uint64_t seed) {
  if (r < 1 || r > d) {
    throw std::invalid_argument("random_orthonormal: need 1 <= r <= d, got r = " +
                                std::to_string(r) + ", d = " + std::to_string(d));
  }
  Rng rng(seed);
  Matrix g(d, r);
  for (Index i = 0; i < d; ++i) {
    for (Index j = 0; j < r; ++j) g(i, j) = rng.gaussian();
  }
  LoadingMatrix out;
  out.values = qf(g);
  out.orthonormal = true;
  return out;
}

std::pair<std::vector<DataShard>, Vector> center_federated(std::span<const DataShard> shards) {
  validate_shards(shards);
  const Index d = shards.front().cols();

  // Aggregation pre-pass: each worker contributes d column sums and a count.
  Vector colsum = Vector::Zero(d);
  double count = 0.0;
  for (const auto& s : shards) {
    colsum += s.values.colwise().sum().transpose();
    count += static_cast<double>(s.rows());
  }
  if (count == 0.0) throw std::invalid_argument("center_federated: no instances");
  Vector mean = colsum / count;

  std::vector<DataShard> centered;
  centered.reserve(shards.size());
  for (const auto& s : shards) {
    DataShard c;
    c.worker_id = s.worker_id;
    c.values = s.values.rowwise() - mean.transpose();
    centered.push_back(std::move(c));
  }
  return {std::move(centered), std::move(mean)};
}

}  // namespace fedspca
