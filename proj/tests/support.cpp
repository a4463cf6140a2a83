#include "support.hpp"

#include "fedspca/rng.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <cmath>

namespace fedspca::testing {

Matrix finite_difference_gradient(const std::function<double(const Matrix&)>& f, const Matrix& at,
                                  double h) {
  Matrix grad(at.rows(), at.cols());
  Matrix probe = at;
  for (Index i = 0; i < at.rows(); ++i) {
    for (Index j = 0; j < at.cols(); ++j) {
      const double step = h * std::max(1.0, std::abs(at(i, j)));
      probe(i, j) = at(i, j) + step;
      const double up = f(probe);
      probe(i, j) = at(i, j) - step;
      const double down = f(probe);
      probe(i, j) = at(i, j);
      grad(i, j) = (up - down) / (2.0 * step);
    }
  }
  return grad;
}

Matrix top_eigenvectors(const Matrix& sym, Index count) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  const Index d = sym.rows();
  Matrix out(d, count);
  // SelfAdjointEigenSolver sorts ascending.
  for (Index k = 0; k < count; ++k) out.col(k) = es.eigenvectors().col(d - 1 - k);
  return out;
}

Matrix tangent_projection_by_basis(const Matrix& w, const Matrix& X) {
  const Index d = w.rows();
  const Index r = w.cols();

  Eigen::HouseholderQR<Matrix> qr(w);
  const Matrix full_q = qr.householderQ() * Matrix::Identity(d, d);
  const Matrix w_perp = full_q.rightCols(d - r);

  std::vector<Matrix> basis;
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  for (Index i = 0; i < r; ++i) {
    for (Index j = i + 1; j < r; ++j) {
      Matrix b = Matrix::Zero(d, r);
      b.col(j) = w.col(i) * inv_sqrt2;
      b.col(i) = -w.col(j) * inv_sqrt2;
      basis.push_back(std::move(b));
    }
  }
  for (Index k = 0; k < d - r; ++k) {
    for (Index l = 0; l < r; ++l) {
      Matrix b = Matrix::Zero(d, r);
      b.col(l) = w_perp.col(k);
      basis.push_back(std::move(b));
    }
  }

  Matrix projected = Matrix::Zero(d, r);
  for (const auto& b : basis) {
    projected += (X.array() * b.array()).sum() * b;
  }
  return projected;
}

double prox_abs_grid_search(double v, double t, double step) {
  const double span = std::abs(v) + t + 1.0;
  double best_z = -span;
  double best_val = std::numeric_limits<double>::infinity();
  for (double z = -span; z <= span; z += step) {
    const double val = t * std::abs(z) + 0.5 * (z - v) * (z - v);
    if (val < best_val) {
      best_val = val;
      best_z = z;
    }
  }
  return best_z;
}

double golden_section_min(const std::function<double(double)>& f, double lo, double hi,
                          int iters) {
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo;
  double b = hi;
  double c = b - phi * (b - a);
  double d = a + phi * (b - a);
  double fc = f(c);
  double fd = f(d);
  for (int i = 0; i < iters; ++i) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + phi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

Matrix sqrt_metric_retraction(const Matrix& G, const Matrix& w, double theta, const Matrix& zeta) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(G);
  const Vector eigs = es.eigenvalues();
  if (eigs.minCoeff() <= 0.0) {
    throw std::invalid_argument("sqrt_metric_retraction: metric must be positive definite");
  }
  const Matrix v = es.eigenvectors();
  const Matrix sqrt_g = v * eigs.cwiseSqrt().asDiagonal() * v.transpose();
  const Matrix sqrt_g_inv = v * eigs.cwiseSqrt().cwiseInverse().asDiagonal() * v.transpose();

  const Matrix lifted = sqrt_g * (w + theta * zeta);
  Eigen::HouseholderQR<Matrix> qr(lifted);
  Matrix q = qr.householderQ() * Matrix::Identity(lifted.rows(), lifted.cols());
  const Matrix rfac = qr.matrixQR().topRows(lifted.cols()).triangularView<Eigen::Upper>();
  for (Index j = 0; j < lifted.cols(); ++j) {
    if (rfac(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return sqrt_g_inv * q;
}

Matrix random_spd(Index d, std::uint64_t seed, double spread) {
  Rng rng(seed);
  Matrix m(d, d);
  for (Index i = 0; i < d; ++i) {
    for (Index j = 0; j < d; ++j) m(i, j) = rng.gaussian();
  }
  Eigen::HouseholderQR<Matrix> qr(m);
  const Matrix q = qr.householderQ() * Matrix::Identity(d, d);
  Vector eigs(d);
  for (Index i = 0; i < d; ++i) {
    eigs(i) = 1.0 + (spread - 1.0) * rng.uniform();
  }
  return q * eigs.asDiagonal() * q.transpose();
}

Matrix random_projector(Index d, Index rank, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(d, rank);
  for (Index i = 0; i < d; ++i) {
    for (Index j = 0; j < rank; ++j) m(i, j) = rng.gaussian();
  }
  Eigen::HouseholderQR<Matrix> qr(m);
  const Matrix q = qr.householderQ() * Matrix::Identity(d, rank);
  return q * q.transpose();
}

Matrix wdbc_like_base(Index rows, Index cols, std::uint64_t seed) {
  Rng rng(seed);
  Vector dir1(cols);
  Vector dir2(cols);
  for (Index j = 0; j < cols; ++j) {
    dir1(j) = rng.gaussian();
    dir2(j) = rng.gaussian();
  }
  dir1.normalize();
  dir2 -= dir1 * dir1.dot(dir2);
  dir2.normalize();

  Vector mean(cols);
  for (Index j = 0; j < cols; ++j) mean(j) = 2.0 + 8.0 * rng.uniform();

  Matrix base(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const double s1 = 12.0 * rng.gaussian();
    const double s2 = 8.0 * rng.gaussian();
    for (Index j = 0; j < cols; ++j) {
      base(i, j) = mean(j) + s1 * dir1(j) + s2 * dir2(j) + 0.3 * rng.gaussian();
    }
  }
  return base;
}

Matrix stack_shards(const std::vector<DataShard>& shards) {
  Index rows = 0;
  for (const auto& s : shards) rows += s.rows();
  Matrix out(rows, shards.front().cols());
  Index off = 0;
  for (const auto& s : shards) {
    out.middleRows(off, s.rows()) = s.values;
    off += s.rows();
  }
  return out;
}

}  // namespace fedspca::testing
