#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fedspca/datagen.hpp"
#include "fedspca/faspca.hpp"
#include "fedspca/metrics.hpp"
#include "fedspca/rng.hpp"

#include "support.hpp"

#include <cmath>

using namespace fedspca;
namespace oracle = fedspca::testing;

namespace {

Matrix gaussian(Index rows, Index cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.gaussian();
  return m;
}

Vector gaussian_vec(Index n, std::uint64_t seed) {
  Rng rng(seed);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = rng.gaussian();
  return v;
}

DataShard make_shard(Matrix values, int id = 0) {
  DataShard s;
  s.worker_id = id;
  s.values = std::move(values);
  return s;
}

}  // namespace

TEST_CASE("closed-form worker step arithmetic") {
  Matrix a(2, 2);
  a << 1, 0, 0, 0;
  Vector w_prev(2);
  w_prev << 1, 0;
  const Vector u = Vector::Zero(2);
  const Vector z = Vector::Zero(2);

  // y = (1, 0); numerator (2, 0); denominator 2 + rho = 4; pre-normalization
  // value (0.5, 0), unit after normalization.
  FaspcaWorkerInput inp{a, w_prev, u, z, 2.0, nullptr};
  const Vector out = faspca_worker_update(inp);
  CHECK(out(0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(out(1) == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("leading eigenvector is a fixed point of the worker step") {
  const Matrix a = gaussian(7, 5, 1);
  const Matrix top = oracle::top_eigenvectors(a.transpose() * a, 1);
  const Vector v1 = top.col(0);
  const Vector u = Vector::Zero(5);

  FaspcaWorkerInput inp{a, v1, u, v1, 500.0, nullptr};
  const Vector out = faspca_worker_update(inp);
  CHECK((out - v1 * (out.dot(v1) > 0 ? 1.0 : -1.0)).norm() <= 1e-8);
}

TEST_CASE("worker step always returns a unit vector") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = gaussian(6, 4, 10 + static_cast<std::uint64_t>(trial));
    Vector w = gaussian_vec(4, 30 + static_cast<std::uint64_t>(trial));
    w.normalize();
    const Vector u = gaussian_vec(4, 50 + static_cast<std::uint64_t>(trial));
    const Vector z = gaussian_vec(4, 70 + static_cast<std::uint64_t>(trial));
    FaspcaWorkerInput inp{a, w, u, z, 100.0 + 900.0 * rng.uniform(), nullptr};
    CHECK(std::abs(faspca_worker_update(inp).norm() - 1.0) <= 1e-10);
  }
}

TEST_CASE("pre-normalization step matches a dense linear solve of the quadratic") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const Index d = 2 + static_cast<Index>(3.0 * rng.uniform());  // d in [2, 5]
    const Matrix a = gaussian(6, d, 100 + static_cast<std::uint64_t>(trial));
    Vector w_prev = gaussian_vec(d, 200 + static_cast<std::uint64_t>(trial));
    w_prev.normalize();
    const Vector u = gaussian_vec(d, 300 + static_cast<std::uint64_t>(trial));
    const Vector z = gaussian_vec(d, 400 + static_cast<std::uint64_t>(trial));
    const double rho = 50.0 + 500.0 * rng.uniform();

    const Vector y = a * w_prev;
    // The quadratic's Hessian is (2 y^T y + rho) I; solve it densely.
    const Matrix hessian = (2.0 * y.squaredNorm() + rho) * Matrix::Identity(d, d);
    const Vector rhs = 2.0 * a.transpose() * y - u + rho * z;
    const Vector solved = hessian.ldlt().solve(rhs);

    const Vector closed_form = rhs / (2.0 * y.squaredNorm() + rho);
    CHECK((closed_form - solved).norm() <= 1e-8 * std::max(1.0, solved.norm()));

    // And the literal objective is stationary there (finite differences).
    auto literal = [&](const Matrix& m) {
      const Vector w = m.col(0);
      return (a - y * w.transpose()).squaredNorm() + u.dot(w) + 0.5 * rho * (w - z).squaredNorm();
    };
    const Matrix fd = oracle::finite_difference_gradient(literal, solved, 1e-6);
    CHECK(fd.norm() <= 1e-5 * std::max(1.0, rhs.norm()));
  }
}

TEST_CASE("metric normalization lands on the generalized constraint set") {
  const Matrix g = oracle::random_projector(8, 5, 4);
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Vector w = gaussian_vec(8, 500 + static_cast<std::uint64_t>(trial));
    const Vector gw = g * w;
    REQUIRE(gw.norm() > 1e-8);
    const Vector wn = w / gw.norm();
    CHECK(std::abs(wn.dot(g * wn) - 1.0) <= 1e-8);
  }
}

TEST_CASE("degenerate update raises a numerical error") {
  const Matrix a = Matrix::Zero(3, 2);
  Vector w(2);
  w << 1, 0;
  const Vector u = Vector::Zero(2);
  const Vector z = Vector::Zero(2);
  FaspcaWorkerInput inp{a, w, u, z, 10.0, nullptr};
  CHECK_THROWS_AS(faspca_worker_update(inp), NumericalError);
}

TEST_CASE("non-unit inputs are rejected") {
  const Matrix a = gaussian(3, 2, 6);
  Vector w(2);
  w << 2.0, 0.0;
  const Vector u = Vector::Zero(2);
  const Vector z = Vector::Zero(2);
  FaspcaWorkerInput inp{a, w, u, z, 10.0, nullptr};
  CHECK_THROWS_AS(faspca_worker_update(inp), std::invalid_argument);
}

TEST_CASE("single-worker solve aligns with the leading eigenvector") {
  const Matrix data = gaussian(9, 5, 7);
  HyperParams hp;
  hp.lambda = 0.0;
  hp.r = 1;
  hp.seed = 13;

  const SolveResult res = solve_faspca(std::vector<DataShard>{make_shard(data)}, hp);
  CHECK(res.converged);
  CHECK(std::abs(res.loadings.values.col(0).norm() - 1.0) <= 1e-10);

  const Matrix top = oracle::top_eigenvectors(data.transpose() * data, 1);
  CHECK(std::abs(res.loadings.values.col(0).dot(top.col(0))) >= 1.0 - 1e-6);
}

TEST_CASE("solve rejects multi-column requests") {
  HyperParams hp;
  hp.r = 2;
  CHECK_THROWS_AS(solve_faspca(std::vector<DataShard>{make_shard(gaussian(4, 3, 8))}, hp),
                  std::invalid_argument);
}

TEST_CASE("single-step deflation matches the plain solve") {
  const Matrix data = gaussian(12, 6, 9);
  std::vector<DataShard> shards{make_shard(data.topRows(6), 0), make_shard(data.bottomRows(6), 1)};

  HyperParams hp;
  hp.lambda = 2.0;
  hp.rho = 500.0;
  hp.r = 1;
  hp.seed = 17;

  const SolveResult plain = solve_faspca(shards, hp);

  DeflationStep step;
  step.r = 1;
  step.params = hp;
  const SolveResult deflated = deflate_faspca(shards, std::vector<DeflationStep>{step});
  CHECK((plain.loadings.values - deflated.loadings.values).norm() <= 1e-12);
}

TEST_CASE("sequential deflation extracts orthogonal planted components") {
  SyntheticSpec spec;
  spec.d = 40;
  spec.n = 800;
  spec.K = 2;
  spec.seed = 29;
  const auto shards = gen_synthetic_iid(spec);

  HyperParams hp;
  hp.lambda = 5.0;
  hp.rho = 1000.0;
  hp.r = 1;
  hp.seed = 31;

  DeflationStep step;
  step.r = 1;
  step.params = hp;
  const SolveResult res = deflate_faspca(shards, std::vector<DeflationStep>{step, step});

  REQUIRE(res.loadings.rank() == 2);
  CHECK(std::abs(res.loadings.values.col(0).dot(res.loadings.values.col(1))) <= 1e-6);
  CHECK(std::abs(res.loadings.values.col(0).norm() - 1.0) <= 1e-10);
  CHECK(std::abs(res.loadings.values.col(1).norm() - 1.0) <= 1e-10);

  LoadingMatrix truth;
  truth.values = spec.v_sol();
  truth.orthonormal = true;
  CHECK(recovery_error(res.loadings, truth) <= 0.1);
}

TEST_CASE("deflation schedule validation") {
  std::vector<DataShard> shards{make_shard(gaussian(5, 3, 11))};
  DeflationStep bad;
  bad.r = 2;
  CHECK_THROWS_AS(deflate_faspca(shards, std::vector<DeflationStep>{bad}), std::invalid_argument);
}
