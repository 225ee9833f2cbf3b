#include <benchmark/benchmark.h>

#include <random>

#include "sprl/config.hpp"
#include "sprl/curriculum.hpp"
#include "sprl/dual.hpp"
#include "sprl/envs.hpp"
#include "sprl/wml_fit.hpp"

using namespace sprl;

namespace {

Matrix uniform_matrix(std::mt19937_64& rng, Index rows, Index cols, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = u(rng);
  return m;
}

/// A buffer-sized batch on the gate context box with the default 5x5 value grid.
struct DualFixture {
  SampleBatch batch;
  FeatureMap features;
  Gaussian target;
  Gaussian sampler;

  explicit DualFixture(Index m)
      : features(FeatureMap::radial_basis_grid(Eigen::Vector2d(-4, 0.1), Eigen::Vector2d(4, 8), {5, 5})),
        target(Eigen::Vector2d(0, 4), Eigen::Vector2d(4, 1).asDiagonal().toDenseMatrix()),
        sampler(Eigen::Vector2d(0, 4), Eigen::Vector2d(2, 2).asDiagonal().toDenseMatrix()) {
    std::mt19937_64 rng(1);
    batch.contexts = uniform_matrix(rng, m, 2, -3, 3);
    batch.contexts.col(1).array() += 4.0;
    batch.params = uniform_matrix(rng, m, GateParams::kDim, -1, 1);
    batch.rewards = uniform_matrix(rng, m, 1, 0, 10);
  }
};

void BM_SprlDualEvaluate(benchmark::State& state) {
  const DualFixture fx(state.range(0));
  const SprlDual dual(fx.batch, fx.features, fx.target, fx.sampler, 0.01, 0.25);
  Vector x = Vector::Constant(27, 0.1);
  x[0] = 1.0;
  x[1] = 0.5;
  for (auto _ : state) benchmark::DoNotOptimize(dual.evaluate(x));
}
BENCHMARK(BM_SprlDualEvaluate)->Arg(100)->Arg(1000);

void BM_OptimizeDual(benchmark::State& state) {
  const DualFixture fx(state.range(0));
  const SprlDual dual(fx.batch, fx.features, fx.target, fx.sampler, 0.01, 0.25);
  for (auto _ : state) benchmark::DoNotOptimize(optimize_dual(dual, {1.0, 1.0, Vector::Zero(25)}));
}
BENCHMARK(BM_OptimizeDual)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_WeightedFit(benchmark::State& state) {
  const Index n = state.range(0);
  std::mt19937_64 rng(2);
  WeightedDataset data;
  data.xs = uniform_matrix(rng, n, 2, -1, 1);
  data.ys = uniform_matrix(rng, n, GateParams::kDim, -1, 1);
  data.wx = uniform_matrix(rng, n, 1, 0.1, 2);
  data.wy = uniform_matrix(rng, n, 1, 0.1, 2);
  const FeatureMap f = FeatureMap::linear_with_bias(2);
  const ReferencePair ref{Gaussian(Vector::Constant(2, 3.0), Matrix::Identity(2, 2)),
                          LinearGaussianConditional(Matrix::Zero(GateParams::kDim, 3),
                                                    Matrix::Identity(GateParams::kDim, GateParams::kDim), f)};
  for (auto _ : state) benchmark::DoNotOptimize(fit(data, ref, 0.25));
}
BENCHMARK(BM_WeightedFit)->Arg(100)->Arg(1000)->Unit(benchmark::kMicrosecond);

void BM_GateRollout(benchmark::State& state) {
  const GateEnvironment env;
  GateParams p;
  p.gain1 = Eigen::Vector2d(10, 1).asDiagonal();
  p.offset1 = Eigen::Vector2d(-5, 0);
  p.gain2 = 10.0 * Eigen::Matrix2d::Identity();
  p.offset2 = Eigen::Vector2d(-5, 1);
  const Vector theta = p.to_vector();
  const Vector c = Eigen::Vector2d(0.0, 2.0);
  RandomStream rng(3);
  for (auto _ : state) benchmark::DoNotOptimize(env.rollout(theta, c, rng));
}
BENCHMARK(BM_GateRollout);

void BM_GateIteration(benchmark::State& state) {
  const ExperimentConfig config = default_config(EnvironmentKind::gate_global, Algorithm::sprl);
  const GateEnvironment env;
  const LearnerState initial = initial_state(config.learner, env, RandomStream(4).split(0));
  for (auto _ : state) {
    LearnerState s = initial;
    benchmark::DoNotOptimize(sprl_step(std::move(s), env, config.learner, RandomStream(4).split(1)));
  }
}
BENCHMARK(BM_GateIteration)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
