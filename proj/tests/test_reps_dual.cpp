#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include "sprl/dual.hpp"
#include "sprl/errors.hpp"
#include "sprl/optimizer.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace sprl;
using namespace testing_support;

namespace {

/// 1-D contexts with three radial features on [0, 1].
FeatureMap small_value_features() {
  Matrix centers(3, 1);
  centers << 0.0, 0.5, 1.0;
  return FeatureMap::radial_basis(centers, Vector::Constant(1, 0.5));
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

TEST_CASE("advantage examples") {
  const FeatureMap f = FeatureMap::linear_with_bias(1);
  SampleBatch b;
  b.contexts = Matrix::Zero(2, 1);
  b.params = Matrix::Zero(2, 1);
  b.rewards = Eigen::Vector2d(1.0, 2.0);
  DualVariables d;
  d.v_weights = Vector::Zero(2);
  CHECK(advantage(b, d, f) == b.rewards);
  d.v_weights = Eigen::Vector2d(0.5, 0.0);
  CHECK(advantage(b, d, f) == Eigen::Vector2d(0.5, 1.5));
  b.rewards = Eigen::Vector2d(0.5, 0.5);
  CHECK(advantage(b, d, f).isZero());
  d.v_weights = Vector::Zero(3);
  CHECK_THROWS_AS((void)advantage(b, d, f), std::invalid_argument);
}

TEST_CASE("equal rewards at alpha = 0") {
  Rng rng(200);
  const FeatureMap f = small_value_features();
  SampleBatch b = random_batch(rng, 8, 1);
  b.rewards.setConstant(0.7);
  const Gaussian q(Vector::Constant(1, 0.5), Matrix::Constant(1, 1, 0.1));
  const DualVariables d{0.8, 0.3, Vector::Zero(3)};
  const ObjectiveValue v = sprl_dual(d, 0.0, b, q, q, 0.4, f);
  CHECK(v.value == doctest::Approx((0.8 + 0.3) * 0.4 + 0.7).epsilon(1e-12));
  const Vector gv = v.gradient.tail(3);
  CHECK(gv.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("dual values match the unshifted formulas") {
  Rng rng(201);
  const FeatureMap f = small_value_features();
  const Gaussian target(Vector::Constant(1, 0.8), Matrix::Constant(1, 1, 0.05));
  const Gaussian sampler(Vector::Constant(1, 0.4), Matrix::Constant(1, 1, 0.2));
  for (int t = 0; t < 100; ++t) {
    const SampleBatch b = random_batch(rng, 3 + t % 20, 1, 3.0);
    const double eta_p = std::exp(rng.uniform(-1, 2)), eta_mu = std::exp(rng.uniform(-1, 2));
    const double alpha = t % 3 == 0 ? 0.0 : rng.uniform(0, 3);
    const Vector v = rng.normal_vector(3);
    const DualVariables d{eta_p, eta_mu, v};
    CHECK(sprl_dual(d, alpha, b, target, sampler, 0.3, f).value ==
          doctest::Approx(naive_sprl(eta_p, eta_mu, v, alpha, b, target, sampler, 0.3, f)).epsilon(1e-10));
    CHECK(creps_dual(d, b, 0.3, f).value == doctest::Approx(naive_creps(eta_p, v, b, 0.3, f)).epsilon(1e-10));
  }
}

TEST_CASE("analytic gradients agree with central differences") {
  Rng rng(202);
  const FeatureMap f = small_value_features();
  const Gaussian target(Vector::Constant(1, 0.9), Matrix::Constant(1, 1, 0.02));
  const Gaussian sampler(Vector::Constant(1, 0.3), Matrix::Constant(1, 1, 0.3));
  const double h = 1e-5;
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const SampleBatch b = random_batch(rng, 5 + t % 30, 1, 2.0);
    const double alpha = rng.uniform(0, 2);
    const SprlDual sd(b, f, target, sampler, alpha, 0.25);
    const CrepsDual cd(b, f, 0.25);
    for (const DualObjective* obj : {static_cast<const DualObjective*>(&sd), static_cast<const DualObjective*>(&cd)}) {
      Vector x(obj->temperature_count() + 3);
      for (Index i = 0; i < obj->temperature_count(); ++i) x[i] = std::exp(rng.uniform(-1, 1.5));
      x.tail(3) = rng.normal_vector(3);
      const Vector g = obj->evaluate(x).gradient;
      for (Index i = 0; i < x.size(); ++i) {
        Vector xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        const double fd = (obj->evaluate(xp).value - obj->evaluate(xm).value) / (2 * h);
        worst = std::max(worst, rel_err(g[i], fd));
      }
    }
  }
  CHECK(worst < 1e-4);
}

// Linear features keep the value weights well identified on 5 samples.
TEST_CASE("SPRL minimizer agrees with a grid search on 5 samples") {
  Rng rng(203);
  const FeatureMap f = FeatureMap::linear_with_bias(2);
  const Gaussian target(Eigen::Vector2d(0.7, 0.3), Matrix::Identity(2, 2) * 0.05);
  const Gaussian sampler(Eigen::Vector2d(0.5, 0.5), Matrix::Identity(2, 2) * 0.1);
  for (int t = 0; t < 3; ++t) {
    const SampleBatch b = random_batch(rng, 5, 2);
    const double alpha = 0.3, eps = 0.1;
    const SprlDual dual(b, f, target, sampler, alpha, eps);
    const DualSolution sol = optimize_dual(dual, {1.0, 1.0, Vector::Zero(3)});
    const double found = dual.evaluate(sol.duals).value;
    // log temperatures, then value weights
    const auto g = [&](const Vector& x) {
      return naive_sprl(std::exp(x[0]), std::exp(x[1]), x.tail(3), alpha, b, target, sampler, eps, f);
    };
    Vector lo(5), hi(5);
    lo << std::log(1e-3), std::log(1e-6), -5, -5, -5;
    hi << std::log(1e2), std::log(1e2), 5, 5, 5;
    const double grid = grid_minimum(g, lo, hi, 13, 10);
    CHECK(sol.duals.v_weights.cwiseAbs().maxCoeff() < 5.0);
    CHECK(found <= grid + 1e-6);
    CHECK(grid - found < 1e-4);
  }
}

TEST_CASE("C-REPS minimizer agrees with a grid search on 5 samples") {
  Rng rng(204);
  const FeatureMap f = FeatureMap::linear_with_bias(2);
  for (int t = 0; t < 3; ++t) {
    const SampleBatch b = random_batch(rng, 5, 2);
    const double eps = 0.1;
    const CrepsDual dual(b, f, eps);
    const DualSolution sol = optimize_dual(dual, {1.0, 1.0, Vector::Zero(3)});
    const double found = dual.evaluate(sol.duals).value;
    const auto g = [&](const Vector& x) { return naive_creps(std::exp(x[0]), x.tail(3), b, eps, f); };
    Vector lo(4), hi(4);
    lo << std::log(1e-3), -5, -5, -5;
    hi << std::log(1e2), 5, 5, 5;
    const double grid = grid_minimum(g, lo, hi, 17, 10);
    CHECK(sol.duals.v_weights.cwiseAbs().maxCoeff() < 5.0);
    CHECK(found <= grid + 1e-6);
    CHECK(grid - found < 1e-4);
  }
}

TEST_CASE("optimizer is insensitive to the starting point") {
  Rng rng(205);
  const FeatureMap f = FeatureMap::radial_basis_grid(Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 1), {3, 3});
  const Gaussian target(Eigen::Vector2d(0.8, 0.2), Matrix::Identity(2, 2) * 0.02);
  const Gaussian sampler(Eigen::Vector2d(0.5, 0.5), Matrix::Identity(2, 2) * 0.1);
  for (int t = 0; t < 5; ++t) {
    const SampleBatch b = random_batch(rng, 100, 2, 5.0);
    const SprlDual sd(b, f, target, sampler, 0.5, 0.25);
    const CrepsDual cd(b, f, 0.25);
    for (const DualObjective* obj : {static_cast<const DualObjective*>(&sd), static_cast<const DualObjective*>(&cd)}) {
      std::vector<double> values;
      for (const DualVariables& start : {DualVariables{1.0, 1.0, Vector::Zero(9)},
                                         DualVariables{10.0, 0.01, Vector::Constant(9, 1.0)},
                                         DualVariables{0.05, 50.0, Vector::Constant(9, -2.0)}}) {
        values.push_back(obj->evaluate(optimize_dual(*obj, start).duals).value);
      }
      const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
      CHECK(*hi - *lo < 1e-6);
    }
  }
}

TEST_CASE("optimizer is deterministic and respects the temperature floor") {
  Rng rng(206);
  const FeatureMap f = small_value_features();
  SampleBatch b = random_batch(rng, 20, 1);
  b.rewards.setConstant(1.0);
  const CrepsDual dual(b, f, 0.0);
  const DualSolution a = optimize_dual(dual, {1.0, 1.0, Vector::Zero(3)});
  const DualSolution c = optimize_dual(dual, {1.0, 1.0, Vector::Zero(3)});
  CHECK(a.duals.eta_p == c.duals.eta_p);
  CHECK(a.duals.v_weights == c.duals.v_weights);
  CHECK(a.duals.eta_p >= 1e-6);
  CHECK(a.duals.eta_p <= 1e8);
  // equal advantages give uniform weights at any temperature
  for (double eta : {1e-3, 1.0, 1e3}) {
    const Vector w = compute_policy_weights({eta, 1.0, Vector::Zero(3)}, b, f);
    CHECK((w.array() - 1.0).abs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("bounded quasi-Newton recovers the minimum of a convex quadratic") {
  Matrix h(3, 3);
  h << 4, 1, 0, 1, 3, 0.5, 0, 0.5, 2;
  const Vector a = Eigen::Vector3d(1.0, -2.0, 0.5);
  const Objective f = [&](const Vector& x) {
    const Vector d = x - a;
    return ObjectiveValue{0.5 * d.dot(h * d), h * d};
  };
  const double inf = std::numeric_limits<double>::infinity();
  SUBCASE("unconstrained") {
    const QuasiNewtonResult r = minimize_bounded(f, Vector::Zero(3), Vector::Constant(3, -inf), Vector::Constant(3, inf));
    CHECK((r.x - a).cwiseAbs().maxCoeff() < 1e-6);
  }
  SUBCASE("one active bound") {
    // x0 >= 2: KKT gives x0 = 2 and the rest minimizing the restricted quadratic
    Vector lo = Vector::Constant(3, -inf);
    lo[0] = 2.0;
    const QuasiNewtonResult r = minimize_bounded(f, Vector::Constant(3, 3.0), lo, Vector::Constant(3, inf));
    const Matrix hff = h.bottomRightCorner(2, 2);
    const Vector rest = a.tail(2) - hff.inverse() * h.bottomLeftCorner(2, 1) * (2.0 - a[0]);
    CHECK(r.x[0] == doctest::Approx(2.0));
    CHECK((r.x.tail(2) - rest).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("huge alpha with target equal to sampler reduces to C-REPS plus the context offset") {
  Rng rng(207);
  const FeatureMap f = small_value_features();
  const Gaussian q(Vector::Constant(1, 0.5), Matrix::Constant(1, 1, 0.1));
  for (int t = 0; t < 20; ++t) {
    const SampleBatch b = random_batch(rng, 10 + t, 1);
    const DualVariables d{std::exp(rng.uniform(-1, 1)), std::exp(rng.uniform(-1, 1)), rng.normal_vector(3)};
    const double s = sprl_dual(d, 1e8, b, q, q, 0.25, f).value;
    const double c = creps_dual(d, b, 0.25, f).value;
    CHECK(std::abs(s - d.eta_mu * 0.25 - c) < 1e-6);
  }
}

TEST_CASE("policy weights follow exp(A / eta)") {
  const FeatureMap f = FeatureMap::linear_with_bias(1);
  SampleBatch b;
  b.contexts = Matrix::Zero(3, 1);
  b.params = Matrix::Zero(3, 1);
  b.rewards = Eigen::Vector3d(0.0, 1.0, 2.0);
  const DualVariables d{1.0, 1.0, Vector::Zero(2)};
  const Vector w = compute_policy_weights(d, b, f);
  CHECK(w[1] / w[0] == doctest::Approx(std::exp(1.0)));
  CHECK(w[2] / w[0] == doctest::Approx(std::exp(2.0)));
  CHECK(w.mean() == doctest::Approx(1.0));
  const Gaussian q(Vector::Zero(1), Matrix::Identity(1, 1));
  const SampleWeights sw = compute_weights(d, 0.0, b, q, q, f);
  CHECK((sw.policy - w).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((sw.context.array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("context weights approach density ratios for huge alpha") {
  Rng rng(208);
  const FeatureMap f = small_value_features();
  const Gaussian target(Vector::Constant(1, 0.7), Matrix::Constant(1, 1, 0.05));
  const Gaussian sampler(Vector::Constant(1, 0.4), Matrix::Constant(1, 1, 0.3));
  const SampleBatch b = random_batch(rng, 30, 1);
  const DualVariables d{1.0, 0.5, rng.normal_vector(3)};
  const Vector w = compute_weights(d, 1e8, b, target, sampler, f).context;
  Vector ratio(b.size());
  for (Index i = 0; i < b.size(); ++i) {
    const Vector c = b.contexts.row(i).transpose();
    ratio[i] = std::exp(target.log_pdf(c)) / std::exp(sampler.log_pdf(c));
  }
  ratio *= static_cast<double>(ratio.size()) / ratio.sum();
  for (Index i = 0; i < b.size(); ++i) CHECK(w[i] == doctest::Approx(ratio[i]).epsilon(1e-6));
}

TEST_CASE("at alpha = 0 context weights rank like the value function") {
  Rng rng(209);
  const FeatureMap f = small_value_features();
  const Gaussian target(Vector::Constant(1, 0.7), Matrix::Constant(1, 1, 0.05));
  const Gaussian sampler(Vector::Constant(1, 0.4), Matrix::Constant(1, 1, 0.3));
  for (int t = 0; t < 50; ++t) {
    const SampleBatch b = random_batch(rng, 15, 1);
    const DualVariables d{1.0, std::exp(rng.uniform(-1, 2)), rng.normal_vector(3)};
    const Vector w = compute_weights(d, 0.0, b, target, sampler, f).context;
    const Vector v = f.rows(b.contexts) * d.v_weights;
    std::vector<Index> by_w(static_cast<std::size_t>(b.size())), by_v(by_w.size());
    std::iota(by_w.begin(), by_w.end(), 0);
    std::iota(by_v.begin(), by_v.end(), 0);
    std::sort(by_w.begin(), by_w.end(), [&](Index a, Index c) { return w[a] < w[c]; });
    std::sort(by_v.begin(), by_v.end(), [&](Index a, Index c) { return v[a] < v[c]; });
    CHECK(by_w == by_v);
  }
}

TEST_CASE("corrected policy weights subtract the context exponent") {
  Rng rng(210);
  const FeatureMap f = small_value_features();
  const Gaussian target(Vector::Constant(1, 0.7), Matrix::Constant(1, 1, 0.05));
  const Gaussian sampler(Vector::Constant(1, 0.4), Matrix::Constant(1, 1, 0.3));
  const SampleBatch b = random_batch(rng, 10, 1);
  const DualVariables d{0.7, 0.4, rng.normal_vector(3)};
  const double alpha = 0.6;
  const SampleWeights sw = compute_weights(d, alpha, b, target, sampler, f, {.corrected_policy_weights = true});
  Vector expected(b.size());
  for (Index i = 0; i < b.size(); ++i) {
    const Vector c = b.contexts.row(i).transpose();
    const double v = f(c).dot(d.v_weights);
    const double beta = alpha * (target.log_pdf(c) - sampler.log_pdf(c)) + v;
    expected[i] = std::exp((b.rewards[i] - v) / d.eta_p - beta / (alpha + d.eta_mu));
  }
  expected *= static_cast<double>(expected.size()) / expected.sum();
  CHECK((sw.policy - expected).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("a constant reward shift moves the dual by exactly that constant") {
  Rng rng(211);
  const FeatureMap f = small_value_features();
  const Gaussian target(Vector::Constant(1, 0.7), Matrix::Constant(1, 1, 0.05));
  const Gaussian sampler(Vector::Constant(1, 0.4), Matrix::Constant(1, 1, 0.3));
  for (int t = 0; t < 50; ++t) {
    SampleBatch b = random_batch(rng, 20, 1);
    const DualVariables d{std::exp(rng.uniform(-2, 2)), std::exp(rng.uniform(-2, 2)), rng.normal_vector(3)};
    const double alpha = rng.uniform(0, 2);
    const ObjectiveValue base = sprl_dual(d, alpha, b, target, sampler, 0.3, f);
    b.rewards.array() += 1e3;
    const ObjectiveValue shifted = sprl_dual(d, alpha, b, target, sampler, 0.3, f);
    CHECK(shifted.value - base.value == doctest::Approx(1e3).epsilon(1e-10));
    CHECK((shifted.gradient.tail(3) - base.gradient.tail(3)).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("duals and weights stay finite for huge rewards") {
  Rng rng(212);
  const FeatureMap f = small_value_features();
  const Gaussian target(Vector::Constant(1, 0.7), Matrix::Constant(1, 1, 0.05));
  const Gaussian sampler(Vector::Constant(1, 0.4), Matrix::Constant(1, 1, 0.3));
  SampleBatch b = random_batch(rng, 50, 1, 1e3);
  b.rewards.array() += 1e6;
  for (double eta : {1e-6, 1e-2, 1.0, 1e4}) {
    const DualVariables d{eta, eta, Vector::Zero(3)};
    const ObjectiveValue s = sprl_dual(d, 1.0, b, target, sampler, 0.25, f);
    const ObjectiveValue c = creps_dual(d, b, 0.25, f);
    CHECK(std::isfinite(s.value));
    CHECK(s.gradient.allFinite());
    CHECK(std::isfinite(c.value));
    CHECK(c.gradient.allFinite());
    const SampleWeights w = compute_weights(d, 1.0, b, target, sampler, f);
    CHECK(w.policy.allFinite());
    CHECK(w.context.allFinite());
  }
  const SprlDual dual(b, f, target, sampler, 1.0, 0.25);
  const DualSolution sol = optimize_dual(dual, {1.0, 1.0, Vector::Zero(3)});
  CHECK(std::isfinite(dual.evaluate(sol.duals).value));
}

TEST_CASE("importance weights act as a base measure") {
  Rng rng(213);
  const FeatureMap f = small_value_features();
  SampleBatch b = random_batch(rng, 4, 1);
  // duplicating a sample equals doubling its importance weight
  SampleBatch dup = b;
  dup.contexts.conservativeResize(5, Eigen::NoChange);
  dup.params.conservativeResize(5, Eigen::NoChange);
  dup.rewards.conservativeResize(5);
  dup.contexts.row(4) = b.contexts.row(0);
  dup.params.row(4) = b.params.row(0);
  dup.rewards[4] = b.rewards[0];
  b.log_importance = Vector::Zero(4);
  b.log_importance[0] = std::log(2.0);
  const DualVariables d{0.6, 1.0, rng.normal_vector(3)};
  CHECK(creps_dual(d, b, 0.2, f).value == doctest::Approx(creps_dual(d, dup, 0.2, f).value).epsilon(1e-12));
}

TEST_CASE("alpha schedule") {
  const Vector rewards = Vector::Constant(100, 1.0);
  CHECK(alpha_schedule(100, 140, 0.02, rewards, 5.0) == 0.0);
  CHECK(alpha_schedule(140, 140, 0.02, rewards, 5.0) == 0.0);
  CHECK(alpha_schedule(141, 140, 0.02, rewards, 5.0) == doctest::Approx(0.004));
  CHECK(alpha_schedule(141, 140, 0.02, rewards, 1e-9) == 1e6);
  CHECK(alpha_schedule(141, 140, 0.02, -rewards, 5.0) == 0.0);
  CHECK_THROWS_AS((void)alpha_schedule(141, 140, 0.02, rewards, -1.0), std::invalid_argument);
}

TEST_CASE("invalid batches are rejected") {
  const FeatureMap f = small_value_features();
  SampleBatch b;
  b.contexts = Matrix::Zero(3, 1);
  b.params = Matrix::Zero(3, 1);
  b.rewards = Vector::Zero(2);
  CHECK_THROWS_AS(CrepsDual(b, f, 0.1), std::invalid_argument);
  b.rewards = Vector::Zero(3);
  b.rewards[1] = std::nan("");
  CHECK_THROWS_AS(CrepsDual(b, f, 0.1), std::invalid_argument);
}
