#pragma once

#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sprl/dual.hpp"
#include "sprl/envs.hpp"
#include "sprl/features.hpp"
#include "sprl/gaussian.hpp"
#include "sprl/wml_fit.hpp"

namespace sprl {

enum class Algorithm { sprl, creps };

std::string to_string(Algorithm a);
Algorithm algorithm_from_string(const std::string& s);

/// Everything the learning loop needs besides the environment.
struct LearnerConfig {
  Algorithm algorithm = Algorithm::sprl;
  double epsilon = 0.25;
  double zeta = 0.002;
  int k_alpha = 140;
  int buffer_size = 10;
  int samples_per_iteration = 100;
  int iterations = 200;
  int eval_contexts = 200;

  /// Target context distribution mu(c).
  Vector target_mean;
  Matrix target_cov;

  /// RBF grid for the value function, one count per context dimension.
  std::vector<int> value_feature_grid{5, 5};

  /// Empty: center of the context box / a quarter of its width.
  Vector initial_sampler_mean;
  Vector initial_sampler_std;
  /// Per-parameter std of the initial zero-mean policy; a single entry is broadcast.
  Vector initial_policy_std = Vector::Ones(1);

  /// Lower bound on each sampler variance after every fit; a single entry is broadcast.
  Vector context_variance_floor = Vector::Constant(1, 1e-6);

  AlphaLimits alpha_limits;
  DualBounds dual_bounds;
  QuasiNewtonOptions dual_options;

  /// Clip for the log density ratio of buffered contexts.
  double importance_clip = 10.0;
  bool corrected_policy_weights = false;
  bool bound_reverse_context_kl = true;
  /// Evaluate with the policy mean instead of sampling parameters.
  bool evaluate_policy_mean = true;
  /// Replace the schedule with a constant (tests and ablations).
  std::optional<double> alpha_override;

  [[nodiscard]] Gaussian target() const { return Gaussian(target_mean, target_cov); }
};

struct BufferedBatch {
  SampleBatch batch;
  Vector source_log_density;  ///< log q_source(c_i) under the sampler that drew c_i
};

struct LearnerState {
  LinearGaussianConditional policy;
  Gaussian sampler;
  std::deque<BufferedBatch> buffer;
  int iteration = 0;
  DualVariables duals;
  Matrix eval_contexts;
};

struct IterationRecord {
  int iteration = 0;
  double mean_reward = 0.0;   ///< on the contexts sampled this iteration
  double eval_reward = 0.0;   ///< on the fixed target evaluation set
  double success_rate = 0.0;  ///< on the fixed target evaluation set
  double kl_to_target = 0.0;  ///< KL(q_k(c) || mu(c)) after the update
  double alpha = 0.0;
  double trust_region_kl = 0.0;  ///< achieved joint KL of the fit
  double policy_kl = 0.0;
  double context_kl = 0.0;
  double sampler_step_kl = 0.0;  ///< KL(q_k(c) || q_{k-1}(c))
  double fit_eta = 0.0;
  double eta_p = 0.0;
  double eta_mu = 0.0;
  int buffered_samples = 0;
  bool fit_failed = false;
  bool degenerate_weights = false;
  std::string note;
};

/// Box projection applied to every fitted sampler: the mean is clamped to the
/// box, each standard deviation is capped at a quarter of the box width (so
/// a 2-sigma interval is no wider than the box) and each variance is floored.
Gaussian project_to_box(const Gaussian& g, const ContextBox& box, const Vector& variance_floor);

FeatureMap make_value_features(const LearnerConfig& config, const Environment& env);

LearnerState initial_state(const LearnerConfig& config, const Environment& env, RandomStream rng);

struct StepResult {
  LearnerState state;
  IterationRecord record;
};

/// One iteration: sample M contexts from the current sampler, roll out,
/// buffer, optimize the self-paced dual and refit sampler and policy jointly
/// under the KL budget.
StepResult sprl_step(LearnerState state, const Environment& env, const LearnerConfig& config, RandomStream rng);

/// One iteration of contextual REPS: contexts from the fixed target, policy-only refit.
StepResult creps_step(LearnerState state, const Environment& env, const LearnerConfig& config, RandomStream rng);

/// Mean reward and success rate of `policy` on `contexts`.
struct Evaluation {
  double mean_reward = 0.0;
  double success_rate = 0.0;
};
Evaluation evaluate_policy(const LinearGaussianConditional& policy, const Matrix& contexts, const Environment& env,
                           bool use_mean, RandomStream rng);

/// Per-run observer; receives every state after its update.
using IterationCallback = std::function<void(const LearnerState&, const IterationRecord&)>;

/// K iterations of the configured algorithm. Deterministic in `seed`.
std::vector<IterationRecord> run(const LearnerConfig& config, const Environment& env, std::uint64_t seed,
                                 const IterationCallback& callback = {});

}  // namespace sprl
