#pragma once

#include <vector>

#include "sprl/features.hpp"
#include "sprl/gaussian.hpp"
#include "sprl/optimizer.hpp"

namespace sprl {

/// Lagrange multipliers of the relative-entropy problems.
///
/// `eta_p` is the temperature of the joint KL bound, `eta_mu` the temperature
/// of the context KL bound (unused by C-REPS), and `v_weights` parameterize
/// the context value function V(c) = v^T phi_V(c).
struct DualVariables {
  double eta_p = 1.0;
  double eta_mu = 1.0;
  Vector v_weights;
};

/// Samples (theta_i, c_i, R_i) drawn under possibly different sampling
/// distributions. `log_importance` re-weights each sample toward the current
/// sampler; leave empty for uniform weights.
struct SampleBatch {
  Matrix contexts;
  Matrix params;
  Vector rewards;
  std::vector<int> source_iteration;
  Vector log_importance;

  [[nodiscard]] Index size() const { return rewards.size(); }
  void validate() const;
};

struct DualBounds {
  double eta_floor = 1e-6;
  double eta_ceiling = 1e8;
};

/// Floors used by the alpha schedule.
struct AlphaLimits {
  double kl_floor = 1e-6;
  double alpha_cap = 1e6;
};

/// A_i = R_i - V(c_i).
Vector advantage(const SampleBatch& batch, const DualVariables& duals, const FeatureMap& value_features);

/// Common interface of the two sample-based dual objectives. The packed
/// variable vector lists the temperatures first, then the value weights.
class DualObjective {
 public:
  virtual ~DualObjective() = default;

  [[nodiscard]] virtual Index temperature_count() const = 0;
  [[nodiscard]] virtual Index value_dim() const = 0;
  [[nodiscard]] virtual ObjectiveValue evaluate(const Vector& packed) const = 0;

  [[nodiscard]] Vector pack(const DualVariables& d) const;
  [[nodiscard]] DualVariables unpack(const Vector& packed) const;
  [[nodiscard]] ObjectiveValue evaluate(const DualVariables& d) const { return evaluate(pack(d)); }
};

/// Sample average of the self-paced dual
///   (eta_p + eta_mu) eps + eta_p log E[exp(A / eta_p)]
///     + (alpha + eta_mu) log E[exp(beta / (alpha + eta_mu))],
/// beta(c) = alpha log(mu(c) / q(c)) + V(c), with both expectations taken
/// by shifted log-sum-exp under the batch importance weights.
class SprlDual final : public DualObjective {
 public:
  SprlDual(const SampleBatch& batch, const FeatureMap& value_features, const Gaussian& target,
           const Gaussian& sampler, double alpha, double epsilon);

  [[nodiscard]] Index temperature_count() const override { return 2; }
  [[nodiscard]] Index value_dim() const override { return phi_.cols(); }
  using DualObjective::evaluate;
  [[nodiscard]] ObjectiveValue evaluate(const Vector& packed) const override;

  [[nodiscard]] double alpha() const { return alpha_; }
  /// log mu(c_i) - log q(c_i)
  [[nodiscard]] const Vector& log_ratio() const { return log_ratio_; }
  [[nodiscard]] const Matrix& value_features() const { return phi_; }

 private:
  Matrix phi_;
  Vector rewards_;
  Vector log_base_;
  Vector log_ratio_;
  double alpha_;
  double epsilon_;
};

/// Sample average of the contextual REPS dual
///   eta eps + eta log E[exp(A / eta)] + E[V(c)].
class CrepsDual final : public DualObjective {
 public:
  CrepsDual(const SampleBatch& batch, const FeatureMap& value_features, double epsilon);

  [[nodiscard]] Index temperature_count() const override { return 1; }
  [[nodiscard]] Index value_dim() const override { return phi_.cols(); }
  using DualObjective::evaluate;
  [[nodiscard]] ObjectiveValue evaluate(const Vector& packed) const override;

 private:
  Matrix phi_;
  Vector rewards_;
  Vector log_base_;
  Vector mean_features_;
  double epsilon_;
};

ObjectiveValue sprl_dual(const DualVariables& duals, double alpha, const SampleBatch& batch,
                         const Gaussian& target, const Gaussian& sampler, double epsilon,
                         const FeatureMap& value_features);

ObjectiveValue creps_dual(const DualVariables& duals, const SampleBatch& batch, double epsilon,
                          const FeatureMap& value_features);

struct DualSolution {
  DualVariables duals;
  QuasiNewtonResult report;
};

/// Minimizes the dual with temperatures boxed to [eta_floor, eta_ceiling].
/// Temperatures are first searched in log space, then polished on the
/// original scale; the report describes the polished point and counts both stages.
DualSolution optimize_dual(const DualObjective& objective, const DualVariables& initial,
                           const DualBounds& bounds = {}, const QuasiNewtonOptions& options = {});

struct SampleWeights {
  Vector policy;   ///< w^pi, mean 1
  Vector context;  ///< w^mu~, mean 1
};

struct WeightOptions {
  /// Use exp(A / eta_p - beta / (alpha + eta_mu)) for the policy instead of
  /// the plain C-REPS form exp(A / eta_p).
  bool corrected_policy_weights = false;
};

/// Per-sample weights with max-subtracted exponents, normalized to mean 1.
SampleWeights compute_weights(const DualVariables& duals, double alpha, const SampleBatch& batch,
                              const Gaussian& target, const Gaussian& sampler, const FeatureMap& value_features,
                              const WeightOptions& options = {});

/// Policy weights only, for C-REPS.
Vector compute_policy_weights(const DualVariables& duals, const SampleBatch& batch, const FeatureMap& value_features);

/// 0 for k <= k_alpha, otherwise zeta * sum(R) / (M * kl_to_target);
/// returns `alpha_cap` once the sampler has reached the target.
double alpha_schedule(int k, int k_alpha, double zeta, const Vector& rewards, double kl_to_target,
                      const AlphaLimits& limits = {});

/// log sum_i exp(x_i), shifted by the maximum.
double log_sum_exp(const Vector& x);

}  // namespace sprl
