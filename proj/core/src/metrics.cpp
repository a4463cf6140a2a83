#include "fedspca/metrics.hpp"

#include <cmath>

namespace fedspca {

double recovery_error(const LoadingMatrix& z, const LoadingMatrix& v_sol) {
  if (z.dim() != v_sol.dim()) throw std::invalid_argument("recovery_error: dimension mismatch");
  // || z z^T - v v^T ||_F^2 expanded through r x r Gramians.
  const Matrix ztz = z.values.transpose() * z.values;
  const Matrix vtv = v_sol.values.transpose() * v_sol.values;
  const Matrix vtz = v_sol.values.transpose() * z.values;
  return ztz.squaredNorm() - 2.0 * vtz.squaredNorm() + vtv.squaredNorm();
}

double reconstruction_error(const Matrix& data, const Matrix& z) {
  if (data.cols() != z.rows()) throw std::invalid_argument("reconstruction_error: shape mismatch");
  const Matrix projected = data * z;
  return (data - projected * z.transpose()).squaredNorm();
}

double reconstruction_error(std::span<const DataShard> shards, const LoadingMatrix& z) {
  double total = 0.0;
  for (const auto& s : shards) total += reconstruction_error(s.values, z.values);
  return total;
}

Index l0_count(const Matrix& z, double tol) {
  if (!(tol >= 0.0)) throw std::invalid_argument("l0_count: tol must be >= 0");
  Index count = 0;
  const double* data = z.data();
  for (Index i = 0; i < z.size(); ++i) {
    if (std::abs(data[i]) > tol) ++count;
  }
  return count;
}

SmallValueProfile small_value_profile(const Matrix& z, Index original_count) {
  if (original_count < 0 || original_count > z.rows()) {
    throw std::invalid_argument("small_value_profile: bad original feature count");
  }
  SmallValueProfile profile;
  const Index added_count = z.rows() - original_count;
  for (int decade = 1; decade <= SmallValueProfile::decades; ++decade) {
    const double bound = std::pow(10.0, -decade);
    Index in_orig = 0;
    Index in_added = 0;
    for (Index i = 0; i < z.rows(); ++i) {
      for (Index j = 0; j < z.cols(); ++j) {
        if (std::abs(z(i, j)) <= bound) {
          (i < original_count ? in_orig : in_added) += 1;
        }
      }
    }
    const double orig_entries = static_cast<double>(original_count * z.cols());
    const double added_entries = static_cast<double>(added_count * z.cols());
    profile.original[static_cast<std::size_t>(decade - 1)] =
        orig_entries > 0 ? static_cast<double>(in_orig) / orig_entries : 0.0;
    profile.added[static_cast<std::size_t>(decade - 1)] =
        added_entries > 0 ? static_cast<double>(in_added) / added_entries : 0.0;
  }
  return profile;
}

double mean_abs_cosine(std::span<const Matrix> ws) {
  if (ws.size() < 2) throw std::invalid_argument("mean_abs_cosine: need at least two workers");
  const Index d = ws.front().rows();
  const Index r = ws.front().cols();
  for (const auto& w : ws) {
    if (w.rows() != d || w.cols() != r) {
      throw std::invalid_argument("mean_abs_cosine: shape mismatch");
    }
  }
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < ws.size(); ++i) {
    for (std::size_t j = i + 1; j < ws.size(); ++j) {
      for (Index c = 0; c < r; ++c) {
        const double ni = ws[i].col(c).norm();
        const double nj = ws[j].col(c).norm();
        if (ni == 0.0 || nj == 0.0) {
          throw std::invalid_argument("mean_abs_cosine: zero-norm column");
        }
        sum += std::abs(ws[i].col(c).dot(ws[j].col(c))) / (ni * nj);
        ++pairs;
      }
    }
  }
  return sum / static_cast<double>(pairs);
}

}  // namespace fedspca
