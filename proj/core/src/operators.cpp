#include "fedspca/operators.hpp"

#include <cmath>

namespace fedspca {

double psi(double x, SmoothingParam mu) {
  const double half = 0.5 * mu.mu;
  if (x >= half) return x;
  if (x <= -half) return -x;
  return x * x / mu.mu + 0.25 * mu.mu;
}

double psi_grad(double x, SmoothingParam mu) {
  const double half = 0.5 * mu.mu;
  if (x >= half) return 1.0;
  if (x <= -half) return -1.0;
  return 2.0 * x / mu.mu;
}

double smooth_l1(const Matrix& X, SmoothingParam mu) {
  double sum = 0.0;
  const double* data = X.data();
  const Index n = X.size();
  for (Index i = 0; i < n; ++i) sum += psi(data[i], mu);
  return sum;
}

Matrix smooth_l1_grad(const Matrix& X, SmoothingParam mu) {
  Matrix g(X.rows(), X.cols());
  const double* in = X.data();
  double* out = g.data();
  const Index n = X.size();
  for (Index i = 0; i < n; ++i) out[i] = psi_grad(in[i], mu);
  return g;
}

Matrix soft_threshold(const Matrix& V, double t) {
  if (!(t >= 0.0)) throw std::invalid_argument("soft_threshold: t must be >= 0");
  Matrix out(V.rows(), V.cols());
  const double* in = V.data();
  double* o = out.data();
  const Index n = V.size();
  for (Index i = 0; i < n; ++i) {
    const double v = in[i];
    const double mag = std::abs(v) - t;
    o[i] = mag > 0.0 ? (v > 0.0 ? mag : -mag) : 0.0;
  }
  return out;
}

}  // namespace fedspca
