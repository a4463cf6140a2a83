#pragma once

#include "fedspca/types.hpp"

namespace fedspca {

/// Similarity parameter of the smoothed absolute value.
struct SmoothingParam {
  double mu = 1e-3;

  explicit SmoothingParam(double m = 1e-3) : mu(m) {
    if (!(mu > 0.0)) throw std::invalid_argument("SmoothingParam: mu must be > 0");
  }
};

/// C^1 piecewise approximation of |x|:
///   x          for x >= mu/2
///   x^2/mu + mu/4  for |x| < mu/2
///   -x         for x <= -mu/2
/// Always within mu/4 of |x|, and never below it.
double psi(double x, SmoothingParam mu);

/// Derivative of psi: clamps 2x/mu to [-1, 1] at the breakpoints.
double psi_grad(double x, SmoothingParam mu);

/// Entrywise sum of psi over a matrix; smooth stand-in for the matrix l1 norm.
double smooth_l1(const Matrix& X, SmoothingParam mu);

/// Entrywise psi_grad.
Matrix smooth_l1_grad(const Matrix& X, SmoothingParam mu);

/// Proximal operator of t * |.| applied entrywise:
/// max(|v| - t, 0) * sign(v), with sign(0) = 0.
Matrix soft_threshold(const Matrix& V, double t);

}  // namespace fedspca
