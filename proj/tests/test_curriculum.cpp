#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

#include "sprl/config.hpp"
#include "sprl/curriculum.hpp"
#include "support.hpp"

using namespace sprl;

namespace {

/// Same reward everywhere; optionally NaN on chosen calls.
class ConstantEnvironment final : public Environment {
 public:
  explicit ConstantEnvironment(double reward = 1.0) : reward_(reward) {
    box_.lower = Eigen::Vector2d(-1.0, -1.0);
    box_.upper = Eigen::Vector2d(1.0, 1.0);
  }
  std::string name() const override { return "constant"; }
  Index context_dim() const override { return 2; }
  Index param_dim() const override { return 2; }
  const ContextBox& context_box() const override { return box_; }
  RolloutResult rollout(const Vector&, const Vector&, RandomStream&, bool) const override {
    RolloutResult r;
    r.reward = reward_;
    r.final_position = Vector::Zero(2);
    return r;
  }

 private:
  double reward_;
  ContextBox box_;
};

LearnerConfig quadratic_learner(Algorithm a) { return default_config(EnvironmentKind::quadratic, a).learner; }

LearnerConfig constant_learner(Algorithm a) {
  LearnerConfig c = quadratic_learner(a);
  c.iterations = 15;
  return c;
}

double relative_gain_error(const Matrix& gain, const Matrix& optimal) {
  return (gain - optimal).norm() / optimal.norm();
}

/// Final policy gain of one run.
Matrix final_gain(const LearnerConfig& config, const Environment& env, std::uint64_t seed) {
  Matrix gain;
  (void)run(config, env, seed, [&gain](const LearnerState& s, const IterationRecord&) { gain = s.policy.gain(); });
  return gain;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

}  // namespace

TEST_CASE("constant reward keeps every step inside the trust region") {
  const ConstantEnvironment env;
  for (Algorithm a : {Algorithm::sprl, Algorithm::creps}) {
    LearnerConfig c = constant_learner(a);
    c.alpha_override = 0.0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const std::vector<IterationRecord> records = run(c, env, seed);
      REQUIRE(records.size() == 15);
      for (const IterationRecord& r : records) {
        CHECK_FALSE(r.fit_failed);
        CHECK(r.trust_region_kl <= c.epsilon + 1e-3);
        CHECK(r.sampler_step_kl <= c.epsilon);
        CHECK(r.sampler_step_kl + r.policy_kl <= c.epsilon + 1e-3);
      }
    }
  }
}

TEST_CASE("constant reward leaves the policy mean in place") {
  // uniform weights: only sampling noise moves the gain
  const ConstantEnvironment env;
  LearnerConfig c = constant_learner(Algorithm::creps);
  c.samples_per_iteration = 400;
  c.iterations = 5;
  const Matrix gain = final_gain(c, env, 11);
  CHECK(gain.cwiseAbs().maxCoeff() < 0.3);
}

TEST_CASE("quadratic mean reward improves over 20 iterations") {
  const QuadraticEnvironment env;
  LearnerConfig c = quadratic_learner(Algorithm::sprl);
  c.iterations = 20;
  int improved = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const std::vector<IterationRecord> r = run(c, env, seed);
    improved += r.back().mean_reward > r.front().mean_reward ? 1 : 0;
  }
  CHECK(improved >= 18);
}

TEST_CASE("sampler started on the target stays there when alpha is at its cap") {
  const QuadraticEnvironment env;
  LearnerConfig c = quadratic_learner(Algorithm::sprl);
  c.iterations = 10;
  // a fitted 2-D Gaussian sits ~2.5 / N nats from its source, so N must be well above 50
  c.samples_per_iteration = 200;
  c.alpha_override = c.alpha_limits.alpha_cap;
  c.initial_sampler_mean = c.target_mean;
  c.initial_sampler_std = c.target_cov.diagonal().cwiseSqrt();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    for (const IterationRecord& r : run(c, env, seed)) CHECK(r.kl_to_target <= 0.05);
  }
}

TEST_CASE("C-REPS and SPRL pinned to the target reach similar rewards") {
  const QuadraticEnvironment env;
  LearnerConfig s = quadratic_learner(Algorithm::sprl);
  s.alpha_override = s.alpha_limits.alpha_cap;
  s.initial_sampler_mean = s.target_mean;
  s.initial_sampler_std = s.target_cov.diagonal().cwiseSqrt();
  const LearnerConfig c = quadratic_learner(Algorithm::creps);
  double sum_s = 0.0, sum_c = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    sum_s += run(s, env, seed).back().eval_reward;
    sum_c += run(c, env, seed).back().eval_reward;
  }
  CHECK(std::abs(sum_s - sum_c) / sum_c < 0.1);
}

TEST_CASE("both algorithms recover the optimal quadratic gain") {
  const QuadraticEnvironment env;
  for (Algorithm a : {Algorithm::sprl, Algorithm::creps}) {
    const LearnerConfig c = quadratic_learner(a);
    REQUIRE(c.iterations == 30);
    int within = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      within += relative_gain_error(final_gain(c, env, seed), env.optimal_gain()) < 0.05 ? 1 : 0;
    }
    CHECK(within >= 18);
  }
}

TEST_CASE("the fit sees min(k, B) M buffered samples") {
  const QuadraticEnvironment env;
  for (Algorithm a : {Algorithm::sprl, Algorithm::creps}) {
    LearnerConfig c = quadratic_learner(a);
    c.buffer_size = 3;
    c.samples_per_iteration = 20;
    c.iterations = 7;
    const std::vector<IterationRecord> r = run(c, env, 4);
    for (int k = 1; k <= 7; ++k) CHECK(r[static_cast<std::size_t>(k - 1)].buffered_samples == std::min(k, 3) * 20);
  }
}

TEST_CASE("alpha follows the previous KL and never drops while the KL does not grow") {
  const ConstantEnvironment env(2.0);
  LearnerConfig c = constant_learner(Algorithm::sprl);
  c.k_alpha = 3;
  c.zeta = 0.05;
  c.iterations = 20;
  c.target_mean = Eigen::Vector2d(0.5, -0.5);
  c.target_cov = Matrix::Identity(2, 2) * 0.01;
  const std::vector<IterationRecord> r = run(c, env, 9);
  for (int k = 0; k < 3; ++k) CHECK(r[static_cast<std::size_t>(k)].alpha == 0.0);
  for (std::size_t k = 3; k < r.size(); ++k) {
    // zeta * mean reward / KL(q_{k-1} || mu)
    CHECK(r[k].alpha * r[k - 1].kl_to_target == doctest::Approx(0.05 * 2.0).epsilon(1e-12));
    if (k >= 4 && r[k - 1].kl_to_target <= r[k - 2].kl_to_target) CHECK(r[k].alpha >= r[k - 1].alpha);
  }
  // the pull shrinks the distance to the target
  CHECK(r.back().kl_to_target < r[2].kl_to_target);
}

TEST_CASE("alpha from the schedule is constant for fixed reward and KL") {
  const Vector rewards = Vector::Constant(50, 3.0);
  double prev = 0.0;
  for (int k = 1; k <= 30; ++k) {
    const double a = alpha_schedule(k, 10, 0.1, rewards, 2.0);
    CHECK(a >= prev);
    prev = a;
  }
  CHECK(prev == doctest::Approx(0.15));
}

TEST_CASE("runs are deterministic in the seed") {
  const QuadraticEnvironment env;
  for (Algorithm a : {Algorithm::sprl, Algorithm::creps}) {
    LearnerConfig c = quadratic_learner(a);
    c.iterations = 8;
    const std::vector<IterationRecord> x = run(c, env, 42);
    const std::vector<IterationRecord> y = run(c, env, 42);
    const std::vector<IterationRecord> z = run(c, env, 43);
    REQUIRE(x.size() == y.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(same_bits(x[i].mean_reward, y[i].mean_reward));
      CHECK(same_bits(x[i].eval_reward, y[i].eval_reward));
      CHECK(same_bits(x[i].kl_to_target, y[i].kl_to_target));
      CHECK(same_bits(x[i].trust_region_kl, y[i].trust_region_kl));
      CHECK(same_bits(x[i].alpha, y[i].alpha));
    }
    CHECK_FALSE(same_bits(x.back().mean_reward, z.back().mean_reward));
  }
}

TEST_CASE("zero iterations give no records") {
  const QuadraticEnvironment env;
  LearnerConfig c = quadratic_learner(Algorithm::sprl);
  c.iterations = 0;
  CHECK(run(c, env, 1).empty());
}

TEST_CASE("a failing update is flagged and the run continues") {
  const ConstantEnvironment env(std::numeric_limits<double>::quiet_NaN());
  for (Algorithm a : {Algorithm::sprl, Algorithm::creps}) {
    LearnerConfig c = constant_learner(a);
    c.iterations = 4;
    std::vector<Matrix> gains;
    const std::vector<IterationRecord> r =
        run(c, env, 1, [&gains](const LearnerState& s, const IterationRecord&) { gains.push_back(s.policy.gain()); });
    REQUIRE(r.size() == 4);
    for (const IterationRecord& rec : r) {
      CHECK(rec.fit_failed);
      CHECK_FALSE(rec.note.empty());
      CHECK(rec.sampler_step_kl == 0.0);
    }
    for (const Matrix& g : gains) CHECK(g.isZero());
  }
}

TEST_CASE("evaluation contexts are drawn once from the target") {
  const QuadraticEnvironment env;
  LearnerConfig c = quadratic_learner(Algorithm::sprl);
  c.iterations = 4;
  c.eval_contexts = 2000;
  std::vector<Matrix> sets;
  (void)run(c, env, 3, [&sets](const LearnerState& s, const IterationRecord&) { sets.push_back(s.eval_contexts); });
  REQUIRE(sets.size() == 4);
  for (const Matrix& m : sets) CHECK(m == sets.front());
  CHECK(sets.front().rows() == 2000);
  const Vector mean = sets.front().colwise().mean();
  CHECK((mean - c.target_mean).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("sampler stays inside the context box") {
  const QuadraticEnvironment env;
  LearnerConfig c = quadratic_learner(Algorithm::sprl);
  c.target_mean = Eigen::Vector2d(0.95, -0.95);
  c.target_cov = Matrix::Identity(2, 2) * 0.01;
  c.iterations = 20;
  const ContextBox& box = env.context_box();
  (void)run(c, env, 5, [&box](const LearnerState& s, const IterationRecord&) {
    CHECK(box.contains(s.sampler.mean()));
    const Vector sd = s.sampler.cov().diagonal().cwiseSqrt();
    CHECK((sd.array() <= 0.25 * box.width().array() + 1e-12).all());
  });
}

TEST_CASE("box projection") {
  ContextBox box;
  box.lower = Eigen::Vector2d(0.0, 0.0);
  box.upper = Eigen::Vector2d(4.0, 1.0);
  Matrix cov(2, 2);
  cov << 4.0, 0.01, 0.01, 1e-4;
  const Gaussian g(Eigen::Vector2d(5.0, 0.5), cov);
  const Gaussian p = project_to_box(g, box, Vector::Constant(1, 1e-6));
  CHECK(p.mean() == Eigen::Vector2d(4.0, 0.5));
  // std 2 capped at a quarter of the width 4
  CHECK(p.cov()(0, 0) == doctest::Approx(1.0));
  CHECK(p.cov()(1, 1) == doctest::Approx(1e-4));
  CHECK(p.cov()(0, 1) == doctest::Approx(0.005));
  const Gaussian thin = Gaussian::diagonal(Eigen::Vector2d(1.0, 0.5), Eigen::Vector2d(1e-9, 1e-3));
  CHECK(project_to_box(thin, box, Vector::Constant(1, 1e-6)).cov()(0, 0) == doctest::Approx(1e-6));
  CHECK(project_to_box(thin, box, Eigen::Vector2d(0.0, 0.01)).cov()(1, 1) == doctest::Approx(0.01));
  const Gaussian inside(Eigen::Vector2d(1.0, 0.5), Matrix::Identity(2, 2) * 0.01);
  const Gaussian same = project_to_box(inside, box, Vector::Constant(1, 1e-6));
  CHECK(same.mean() == inside.mean());
  CHECK(same.cov() == inside.cov());
}

TEST_CASE("initial state") {
  const QuadraticEnvironment env;
  LearnerConfig c = quadratic_learner(Algorithm::sprl);
  const LearnerState s = initial_state(c, env, RandomStream(1));
  CHECK(s.policy.gain().isZero());
  CHECK(s.sampler.mean() == env.context_box().center());
  CHECK(s.sampler.cov().diagonal().isApprox((0.25 * env.context_box().width()).array().square().matrix()));
  CHECK(s.buffer.empty());
  const LearnerState cs = initial_state(quadratic_learner(Algorithm::creps), env, RandomStream(1));
  CHECK(cs.sampler.mean() == c.target_mean);
  c.target_mean = Vector::Zero(3);
  CHECK_THROWS_AS((void)initial_state(c, env, RandomStream(1)), std::invalid_argument);
}

TEST_CASE("algorithm names") {
  CHECK(to_string(Algorithm::sprl) == "sprl");
  CHECK(algorithm_from_string("creps") == Algorithm::creps);
  CHECK_THROWS_AS((void)algorithm_from_string("ppo"), std::invalid_argument);
}
