#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fedspca {

// Dense row-major doubles throughout; the target problem sizes (d <= ~1000)
// need nothing sparser.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Solver produced a non-finite or degenerate quantity (exit code 3 in the CLI).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Wire-level failure: bad frame, unexpected message, lost peer (exit code 4).
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One worker's locally held block of the mean-centered dataset.
struct DataShard {
  int worker_id = 0;
  Matrix values;  // n_i x d, one instance per row

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }
};

/// Checks that all shards agree on the feature dimension and hold only
/// finite values. Throws std::invalid_argument otherwise.
void validate_shards(std::span<const DataShard> shards);

/// A d x r matrix of component loadings (a worker's local w_i or the
/// consensus z). `orthonormal` asserts ||w^T w - I||_F <= 1e-8.
struct LoadingMatrix {
  Matrix values;
  bool orthonormal = false;

  Index dim() const { return values.rows(); }
  Index rank() const { return values.cols(); }
};

/// Per-worker ADMM state: local primal w_i, local dual u_i, shard index.
struct WorkerState {
  LoadingMatrix w;
  Matrix u;
  int shard_index = 0;
};

/// Solver hyper-parameters. `lambda` weights the consensus l1 term of the
/// approximation solver; `lambda1`/`lambda2` weight the smoothing and
/// consensus terms of the smoothing solver. Tolerances <= 0 mean "auto"
/// (1e-4 * sqrt(d * r), resolved at solve time).
struct HyperParams {
  double lambda = 0.0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double rho = 1000.0;
  double mu = 1e-3;
  int r = 2;
  double c1 = 1e-4;
  double c2 = 0.9;
  int max_rounds = 500;
  int max_linesearch_steps = 30;
  int max_inner_iters = 50;
  double tol_primal = 0.0;  // <= 0: auto
  double tol_dual = 0.0;    // <= 0: auto
  double tol_inner = 1e-6;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on any violated constraint.
  void validate() const;

  double resolved_tol_primal(Index d, Index rank) const;
  double resolved_tol_dual(Index d, Index rank) const;

  bool operator==(const HyperParams&) const = default;
};

/// Accumulated orthogonal-complement projector G of previously extracted
/// loadings, plus those loadings in extraction order.
struct DeflationContext {
  Matrix G;                      // d x d
  std::vector<Matrix> accepted;  // each d x r_j, mutually orthonormal columns

  static DeflationContext identity(Index d);

  /// Folds one freshly accepted block into G and the accepted list.
  void absorb(const Matrix& z);

  /// Symmetry/idempotence/annihilation checks; throws NumericalError.
  void check(double tol_sym = 1e-10, double tol_idem = 1e-8,
             double tol_annihilate = 1e-8) const;
};

/// Q factor of the thin QR factorization of a seeded standard-Gaussian
/// d x r matrix, sign convention diag(R) > 0. Deterministic given the seed.
LoadingMatrix random_orthonormal(Index d, Index r, std::uint64_t seed);

/// Federated mean removal: aggregates per-shard column sums and counts,
/// forms the global mean, and subtracts it from every shard. Only d+1
/// numbers per worker cross the aggregation boundary.
std::pair<std::vector<DataShard>, Vector> center_federated(
    std::span<const DataShard> shards);

}  // namespace fedspca
