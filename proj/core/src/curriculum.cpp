#include "sprl/curriculum.hpp"

#include <cmath>
#include <stdexcept>

#include "sprl/errors.hpp"

namespace sprl {

std::string to_string(Algorithm a) { return a == Algorithm::sprl ? "sprl" : "creps"; }

Algorithm algorithm_from_string(const std::string& s) {
  if (s == "sprl") return Algorithm::sprl;
  if (s == "creps") return Algorithm::creps;
  throw std::invalid_argument("unknown algorithm '" + s + "' (expected sprl or creps)");
}

namespace {

Vector broadcast(const Vector& v, Index n, const char* what) {
  if (v.size() == n) return v;
  if (v.size() == 1) return Vector::Constant(n, v[0]);
  throw std::invalid_argument(std::string(what) + " must have 1 or " + std::to_string(n) + " entries");
}

Matrix clamp_rows(Matrix xs, const ContextBox& box) {
  for (Index i = 0; i < xs.rows(); ++i) xs.row(i) = box.clamp(xs.row(i).transpose()).transpose();
  return xs;
}

SampleBatch concatenate(const std::deque<BufferedBatch>& buffer, Vector* source_log_density) {
  Index total = 0;
  for (const auto& b : buffer) total += b.batch.size();
  const Index dc = buffer.front().batch.contexts.cols();
  const Index dp = buffer.front().batch.params.cols();
  SampleBatch out;
  out.contexts.resize(total, dc);
  out.params.resize(total, dp);
  out.rewards.resize(total);
  source_log_density->resize(total);
  out.source_iteration.reserve(static_cast<std::size_t>(total));
  Index row = 0;
  for (const auto& b : buffer) {
    const Index m = b.batch.size();
    out.contexts.middleRows(row, m) = b.batch.contexts;
    out.params.middleRows(row, m) = b.batch.params;
    out.rewards.segment(row, m) = b.batch.rewards;
    source_log_density->segment(row, m) = b.source_log_density;
    out.source_iteration.insert(out.source_iteration.end(), b.batch.source_iteration.begin(),
                                b.batch.source_iteration.end());
    row += m;
  }
  return out;
}

/// Draws contexts and parameters, rolls out, and appends the batch to the buffer.
SampleBatch collect(LearnerState& state, const Gaussian& context_source, const Environment& env,
                    const LearnerConfig& config, RandomStream& rng) {
  const int m = config.samples_per_iteration;
  RandomStream context_rng = rng.split(1);
  RandomStream param_rng = rng.split(2);
  SampleBatch batch;
  batch.contexts = clamp_rows(context_source.sample(context_rng, m), env.context_box());
  batch.params.resize(m, env.param_dim());
  batch.rewards.resize(m);
  batch.source_iteration.assign(static_cast<std::size_t>(m), state.iteration + 1);
  for (Index i = 0; i < m; ++i) {
    const Vector c = batch.contexts.row(i).transpose();
    const Vector theta = state.policy.sample(c, param_rng);
    batch.params.row(i) = theta.transpose();
    RandomStream rollout_rng = rng.split(1000 + static_cast<std::uint64_t>(i));
    batch.rewards[i] = env.rollout(theta, c, rollout_rng).reward;
  }
  state.buffer.push_back({batch, state.sampler.log_pdf_rows(batch.contexts)});
  while (static_cast<int>(state.buffer.size()) > config.buffer_size) state.buffer.pop_front();
  return batch;
}

void finish_record(IterationRecord& record, LearnerState& state, const Environment& env, const LearnerConfig& config,
                   const Gaussian& target, RandomStream& rng) {
  const Evaluation eval =
      evaluate_policy(state.policy, state.eval_contexts, env, config.evaluate_policy_mean, rng.split(3));
  record.eval_reward = eval.mean_reward;
  record.success_rate = eval.success_rate;
  record.kl_to_target = kl_divergence(state.sampler, target);
  record.eta_p = state.duals.eta_p;
  record.eta_mu = state.duals.eta_mu;
}

}  // namespace

Gaussian project_to_box(const Gaussian& g, const ContextBox& box, const Vector& variance_floor) {
  const Index d = g.dim();
  const Vector floor = broadcast(variance_floor, d, "context variance floor");
  const Vector mean = box.clamp(g.mean());
  const Vector max_std = 0.25 * box.width();
  Vector scale(d);
  for (Index j = 0; j < d; ++j) {
    const double sd = std::sqrt(g.cov()(j, j));
    scale[j] = sd > max_std[j] ? max_std[j] / sd : 1.0;
  }
  Matrix cov = scale.asDiagonal() * g.cov() * scale.asDiagonal();
  for (Index j = 0; j < d; ++j) cov(j, j) = std::max(cov(j, j), floor[j]);
  return Gaussian(mean, cov);
}

FeatureMap make_value_features(const LearnerConfig& config, const Environment& env) {
  const ContextBox& box = env.context_box();
  return FeatureMap::radial_basis_grid(box.lower, box.upper, config.value_feature_grid);
}

LearnerState initial_state(const LearnerConfig& config, const Environment& env, RandomStream rng) {
  const ContextBox& box = env.context_box();
  const Index dc = env.context_dim();
  const Index dp = env.param_dim();
  if (config.target_mean.size() != dc) throw std::invalid_argument("target mean dimension does not match the environment");
  const Gaussian target = config.target();

  const Vector sampler_mean = config.initial_sampler_mean.size() ? config.initial_sampler_mean : box.center();
  const Vector sampler_std = config.initial_sampler_std.size() ? broadcast(config.initial_sampler_std, dc, "initial sampler std")
                                                               : Vector(0.25 * box.width());
  const Vector policy_std = broadcast(config.initial_policy_std, dp, "initial policy std");
  const FeatureMap policy_features = FeatureMap::linear_with_bias(dc);

  LearnerState state{
      LinearGaussianConditional(Matrix::Zero(dp, policy_features.output_dim()),
                                policy_std.array().square().matrix().asDiagonal().toDenseMatrix(), policy_features),
      config.algorithm == Algorithm::sprl ? Gaussian::diagonal(sampler_mean, sampler_std.array().square().matrix())
                                          : target,
      {},
      0,
      DualVariables{1.0, 1.0, Vector::Zero(make_value_features(config, env).output_dim())},
      {}};
  RandomStream eval_rng = rng.split(0);
  state.eval_contexts = clamp_rows(target.sample(eval_rng, config.eval_contexts), box);
  return state;
}

Evaluation evaluate_policy(const LinearGaussianConditional& policy, const Matrix& contexts, const Environment& env,
                           bool use_mean, RandomStream rng) {
  Evaluation out;
  if (contexts.rows() == 0) return out;
  RandomStream param_rng = rng.split(0);
  for (Index j = 0; j < contexts.rows(); ++j) {
    const Vector c = contexts.row(j).transpose();
    const Vector theta = use_mean ? policy.mean(c) : policy.sample(c, param_rng);
    RandomStream rollout_rng = rng.split(1 + static_cast<std::uint64_t>(j));
    const RolloutResult r = env.rollout(theta, c, rollout_rng);
    out.mean_reward += r.reward;
    out.success_rate += r.success ? 1.0 : 0.0;
  }
  out.mean_reward /= static_cast<double>(contexts.rows());
  out.success_rate /= static_cast<double>(contexts.rows());
  return out;
}

StepResult sprl_step(LearnerState state, const Environment& env, const LearnerConfig& config, RandomStream rng) {
  const Gaussian target = config.target();
  const FeatureMap value_features = make_value_features(config, env);
  const Gaussian previous_sampler = state.sampler;

  const SampleBatch fresh = collect(state, state.sampler, env, config, rng);
  IterationRecord record;
  record.iteration = ++state.iteration;
  record.mean_reward = fresh.rewards.mean();
  const double kl_before = kl_divergence(state.sampler, target);
  record.alpha = config.alpha_override ? *config.alpha_override
                                       : alpha_schedule(state.iteration, config.k_alpha, config.zeta, fresh.rewards,
                                                        kl_before, config.alpha_limits);

  Vector source_log_density;
  SampleBatch batch = concatenate(state.buffer, &source_log_density);
  batch.log_importance = (state.sampler.log_pdf_rows(batch.contexts) - source_log_density)
                             .cwiseMax(-config.importance_clip)
                             .cwiseMin(config.importance_clip);
  record.buffered_samples = static_cast<int>(batch.size());

  try {
    const SprlDual dual(batch, value_features, target, state.sampler, record.alpha, config.epsilon);
    DualVariables start = state.duals;
    start.v_weights = Vector::Zero(value_features.output_dim());
    const DualSolution solution = optimize_dual(dual, start, config.dual_bounds, config.dual_options);
    const SampleWeights weights = compute_weights(solution.duals, record.alpha, batch, target, state.sampler,
                                                  value_features, {config.corrected_policy_weights});

    WeightedDataset data{batch.contexts, batch.params, weights.context, weights.policy};
    FitOptions options;
    options.fit_context = true;
    options.bound_reverse_context_kl = config.bound_reverse_context_kl;
    const ContextBox box = env.context_box();
    const Vector floor = config.context_variance_floor;
    options.project_context = [box, floor](const Gaussian& g) { return project_to_box(g, box, floor); };
    FitResult result = fit(data, ReferencePair{state.sampler, state.policy}, config.epsilon, options);

    state.duals = solution.duals;
    state.sampler = std::move(result.context);
    state.policy = std::move(result.policy);
    record.fit_eta = result.eta;
    record.trust_region_kl = result.kl.combined();
    record.policy_kl = result.kl.policy;
    record.context_kl = result.kl.context;
    record.degenerate_weights = result.degenerate_weights;
    if (result.degenerate_weights) record.note = "effective sample size below threshold";
  } catch (const std::exception& e) {
    record.fit_failed = true;
    record.note = e.what();
  }
  record.sampler_step_kl = kl_divergence(state.sampler, previous_sampler);
  finish_record(record, state, env, config, target, rng);
  return {std::move(state), std::move(record)};
}

StepResult creps_step(LearnerState state, const Environment& env, const LearnerConfig& config, RandomStream rng) {
  const Gaussian target = config.target();
  const FeatureMap value_features = make_value_features(config, env);

  const SampleBatch fresh = collect(state, target, env, config, rng);
  IterationRecord record;
  record.iteration = ++state.iteration;
  record.mean_reward = fresh.rewards.mean();

  Vector source_log_density;
  const SampleBatch batch = concatenate(state.buffer, &source_log_density);
  record.buffered_samples = static_cast<int>(batch.size());

  try {
    const CrepsDual dual(batch, value_features, config.epsilon);
    DualVariables start = state.duals;
    start.v_weights = Vector::Zero(value_features.output_dim());
    const DualSolution solution = optimize_dual(dual, start, config.dual_bounds, config.dual_options);
    const Vector policy_weights = compute_policy_weights(solution.duals, batch, value_features);

    WeightedDataset data{batch.contexts, batch.params, Vector::Ones(batch.size()), policy_weights};
    FitOptions options;
    options.fit_context = false;
    FitResult result = fit(data, ReferencePair{state.sampler, state.policy}, config.epsilon, options);

    state.duals = solution.duals;
    state.policy = std::move(result.policy);
    record.fit_eta = result.eta;
    record.trust_region_kl = result.kl.combined();
    record.policy_kl = result.kl.policy;
    record.degenerate_weights = result.degenerate_weights;
    if (result.degenerate_weights) record.note = "effective sample size below threshold";
  } catch (const std::exception& e) {
    record.fit_failed = true;
    record.note = e.what();
  }
  finish_record(record, state, env, config, target, rng);
  return {std::move(state), std::move(record)};
}

std::vector<IterationRecord> run(const LearnerConfig& config, const Environment& env, std::uint64_t seed,
                                 const IterationCallback& callback) {
  if (config.iterations < 0) throw std::invalid_argument("iteration count must be non-negative");
  std::vector<IterationRecord> records;
  if (config.iterations == 0) return records;
  records.reserve(static_cast<std::size_t>(config.iterations));
  const RandomStream root(seed);
  LearnerState state = initial_state(config, env, root.split(0));
  for (int k = 1; k <= config.iterations; ++k) {
    StepResult step = config.algorithm == Algorithm::sprl
                          ? sprl_step(std::move(state), env, config, root.split(static_cast<std::uint64_t>(k)))
                          : creps_step(std::move(state), env, config, root.split(static_cast<std::uint64_t>(k)));
    state = std::move(step.state);
    if (callback) callback(state, step.record);
    records.push_back(std::move(step.record));
  }
  return records;
}

}  // namespace sprl
