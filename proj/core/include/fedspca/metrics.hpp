#pragma once

#include "fedspca/types.hpp"

#include <array>
#include <span>

namespace fedspca {

/// || z z^T - v v^T ||_F^2: squared Frobenius distance between projectors.
/// Invariant to column signs and in-span rotations.
double recovery_error(const LoadingMatrix& z, const LoadingMatrix& v_sol);

/// Sum over shards of || A^i - A^i z z^T ||_F^2.
double reconstruction_error(std::span<const DataShard> shards, const LoadingMatrix& z);
double reconstruction_error(const Matrix& data, const Matrix& z);

/// Number of entries with |z_ij| > tol.
Index l0_count(const Matrix& z, double tol);

/// Fractions of entries inside [-10^-i, 10^-i] for i = 1..10, split between
/// the first `original_count` feature rows and the appended remainder.
struct SmallValueProfile {
  static constexpr int decades = 10;
  std::array<double, decades> original{};
  std::array<double, decades> added{};
};

SmallValueProfile small_value_profile(const Matrix& z, Index original_count);

/// Mean over unordered worker pairs (column-wise for r > 1) of the absolute
/// cosine similarity. Requires K >= 2 and nonzero columns.
double mean_abs_cosine(std::span<const Matrix> ws);

}  // namespace fedspca
