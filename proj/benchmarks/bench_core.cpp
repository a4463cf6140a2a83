#include <benchmark/benchmark.h>

#include "fedspca/faspca.hpp"
#include "fedspca/federation.hpp"
#include "fedspca/fsspca.hpp"
#include "fedspca/operators.hpp"
#include "fedspca/rng.hpp"
#include "fedspca/stiefel.hpp"

using namespace fedspca;

namespace {

Matrix gaussian(Index rows, Index cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.gaussian();
  return m;
}

void BM_SoftThreshold(benchmark::State& state) {
  const Matrix v = gaussian(state.range(0), 2, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(soft_threshold(v, 0.05));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_SoftThreshold)->Range(64, 4096)->Complexity();

void BM_SmoothL1Grad(benchmark::State& state) {
  const Matrix v = gaussian(state.range(0), 2, 2);
  const SmoothingParam mu(1e-3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(smooth_l1_grad(v, mu));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_SmoothL1Grad)->Range(64, 4096)->Complexity();

void BM_RetractQf(benchmark::State& state) {
  const Index d = state.range(0);
  const ManifoldPoint w = ManifoldPoint::standard(random_orthonormal(d, 2, 3));
  const Matrix step = 0.1 * gaussian(d, 2, 4);
  for (auto _ : state) {
    benchmark::DoNotOptimize(retract_qf(w, step));
  }
  state.SetComplexityN(d);
}
BENCHMARK(BM_RetractQf)->Range(64, 1024)->Complexity();

void BM_FsspcaGradient(benchmark::State& state) {
  const Index d = state.range(0);
  const DataShard shard{0, gaussian(100, d, 5)};
  const Matrix gram = shard.values.transpose() * shard.values;
  HyperParams hp;
  hp.lambda1 = 10.0;
  const Matrix w = random_orthonormal(d, 2, 6).values;
  const Matrix u = Matrix::Zero(d, 2);
  const Matrix z = Matrix::Zero(d, 2);
  FsspcaLocalProblem p(shard, u, z, hp, &gram);
  for (auto _ : state) {
    benchmark::DoNotOptimize(local_gradient(p, w));
  }
  state.SetComplexityN(d);
}
BENCHMARK(BM_FsspcaGradient)->Range(64, 1024)->Complexity();

void BM_FsspcaWorkerUpdate(benchmark::State& state) {
  const Index d = state.range(0);
  const DataShard shard{0, gaussian(100, d, 7)};
  const Matrix gram = shard.values.transpose() * shard.values;
  HyperParams hp;
  hp.lambda1 = 10.0;
  hp.max_inner_iters = 5;
  const Matrix u = Matrix::Zero(d, 2);
  const Matrix z = Matrix::Zero(d, 2);
  FsspcaLocalProblem p(shard, u, z, hp, &gram);
  const ManifoldPoint start = ManifoldPoint::standard(random_orthonormal(d, 2, 8));
  for (auto _ : state) {
    benchmark::DoNotOptimize(worker_update(p, start));
  }
  state.SetComplexityN(d);
}
BENCHMARK(BM_FsspcaWorkerUpdate)->Range(128, 512)->Complexity();

void BM_FaspcaWorkerUpdate(benchmark::State& state) {
  const Index d = state.range(0);
  const Matrix shard = gaussian(100, d, 9);
  Vector w = gaussian(d, 1, 10).col(0);
  w.normalize();
  const Vector u = Vector::Zero(d);
  const Vector z = Vector::Zero(d);
  for (auto _ : state) {
    FaspcaWorkerInput inp{shard, w, u, z, 1000.0, nullptr};
    benchmark::DoNotOptimize(faspca_worker_update(inp));
  }
  state.SetComplexityN(d);
}
BENCHMARK(BM_FaspcaWorkerUpdate)->Range(128, 2048)->Complexity();

void BM_SerializeBroadcast(benchmark::State& state) {
  RoundMessage m;
  m.kind = MsgKind::broadcast;
  m.round = 3;
  m.algo = Algorithm::fsspca;
  m.mat = gaussian(state.range(0), 2, 11);
  for (auto _ : state) {
    benchmark::DoNotOptimize(serialize_message(m));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_SerializeBroadcast)->Range(64, 1024)->Complexity();

}  // namespace

BENCHMARK_MAIN();
