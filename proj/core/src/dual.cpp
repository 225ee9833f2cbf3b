#include "sprl/dual.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "sprl/errors.hpp"

namespace sprl {

void SampleBatch::validate() const {
  const Index m = rewards.size();
  if (m == 0) throw std::invalid_argument("sample batch is empty");
  if (contexts.rows() != m || params.rows() != m) throw std::invalid_argument("sample batch fields disagree on size");
  if (!source_iteration.empty() && static_cast<Index>(source_iteration.size()) != m) {
    throw std::invalid_argument("sample batch source tags disagree on size");
  }
  if (log_importance.size() != 0 && log_importance.size() != m) {
    throw std::invalid_argument("sample batch importance weights disagree on size");
  }
  if (!rewards.allFinite()) throw std::invalid_argument("sample batch rewards must be finite");
}

double log_sum_exp(const Vector& x) {
  const double m = x.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((x.array() - m).exp().sum());
}

namespace {

Vector normalized_log_base(const SampleBatch& batch) {
  const Index m = batch.size();
  if (batch.log_importance.size() == 0) return Vector::Constant(m, -std::log(static_cast<double>(m)));
  if (!batch.log_importance.allFinite()) throw std::invalid_argument("importance weights must be finite");
  return batch.log_importance.array() - log_sum_exp(batch.log_importance);
}

Matrix value_rows(const SampleBatch& batch, const FeatureMap& value_features) {
  return value_features.rows(batch.contexts);
}

/// Softmax term  t * log sum_i b_i exp(x_i / t)  together with the normalized
/// soft-max weights and the derivative with respect to t.
struct TemperedLogMean {
  double value;
  double d_temperature;
  Vector weights;
  double max_exponent;
};

TemperedLogMean tempered_log_mean(const Vector& log_base, const Vector& x, double t) {
  const Vector exponent = log_base.array() + x.array() / t;
  const double m = exponent.maxCoeff();
  const Vector shifted = (exponent.array() - m).exp();
  const double z = shifted.sum();
  const double log_mean = m + std::log(z);
  Vector w = shifted / z;
  const double weighted_x = w.dot(x);
  return {t * log_mean, log_mean - weighted_x / t, std::move(w), m};
}

void require_finite_value(const ObjectiveValue& v, double max_exponent, const char* which) {
  if (!std::isfinite(v.value) || !v.gradient.allFinite()) {
    std::ostringstream msg;
    msg << which << " dual is not finite (largest exponent " << max_exponent << ")";
    throw NumericalError(msg.str());
  }
}

}  // namespace

Vector advantage(const SampleBatch& batch, const DualVariables& duals, const FeatureMap& value_features) {
  if (duals.v_weights.size() != value_features.output_dim()) {
    throw std::invalid_argument("value weight dimension does not match the value features");
  }
  return batch.rewards - value_rows(batch, value_features) * duals.v_weights;
}

Vector DualObjective::pack(const DualVariables& d) const {
  if (d.v_weights.size() != value_dim()) throw std::invalid_argument("value weight dimension mismatch");
  Vector x(temperature_count() + value_dim());
  x[0] = d.eta_p;
  if (temperature_count() == 2) x[1] = d.eta_mu;
  x.tail(value_dim()) = d.v_weights;
  return x;
}

DualVariables DualObjective::unpack(const Vector& packed) const {
  DualVariables d;
  d.eta_p = packed[0];
  d.eta_mu = temperature_count() == 2 ? packed[1] : 0.0;
  d.v_weights = packed.tail(value_dim());
  return d;
}

SprlDual::SprlDual(const SampleBatch& batch, const FeatureMap& value_features, const Gaussian& target,
                   const Gaussian& sampler, double alpha, double epsilon)
    : alpha_(alpha), epsilon_(epsilon) {
  batch.validate();
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("alpha must be finite and non-negative");
  if (batch.size() < 2) throw std::invalid_argument("dual needs at least two samples");
  phi_ = value_rows(batch, value_features);
  rewards_ = batch.rewards;
  log_base_ = normalized_log_base(batch);
  log_ratio_ = target.log_pdf_rows(batch.contexts) - sampler.log_pdf_rows(batch.contexts);
}

ObjectiveValue SprlDual::evaluate(const Vector& packed) const {
  const double eta_p = packed[0];
  const double eta_mu = packed[1];
  const Vector v = packed.tail(phi_.cols());
  const Vector values = phi_ * v;

  const TemperedLogMean policy = tempered_log_mean(log_base_, rewards_ - values, eta_p);
  const double tau = alpha_ + eta_mu;
  const Vector beta = alpha_ * log_ratio_ + values;
  const TemperedLogMean context = tempered_log_mean(log_base_, beta, tau);

  ObjectiveValue out;
  out.value = (eta_p + eta_mu) * epsilon_ + policy.value + context.value;
  out.gradient.resize(packed.size());
  out.gradient[0] = epsilon_ + policy.d_temperature;
  out.gradient[1] = epsilon_ + context.d_temperature;
  out.gradient.tail(phi_.cols()) = phi_.transpose() * (context.weights - policy.weights);
  return out;
}

CrepsDual::CrepsDual(const SampleBatch& batch, const FeatureMap& value_features, double epsilon)
    : epsilon_(epsilon) {
  batch.validate();
  if (batch.size() < 2) throw std::invalid_argument("dual needs at least two samples");
  phi_ = value_rows(batch, value_features);
  rewards_ = batch.rewards;
  log_base_ = normalized_log_base(batch);
  mean_features_ = phi_.transpose() * log_base_.array().exp().matrix();
}

ObjectiveValue CrepsDual::evaluate(const Vector& packed) const {
  const double eta = packed[0];
  const Vector v = packed.tail(phi_.cols());
  const TemperedLogMean policy = tempered_log_mean(log_base_, rewards_ - phi_ * v, eta);
  ObjectiveValue out;
  out.value = eta * epsilon_ + policy.value + mean_features_.dot(v);
  out.gradient.resize(packed.size());
  out.gradient[0] = epsilon_ + policy.d_temperature;
  out.gradient.tail(phi_.cols()) = mean_features_ - phi_.transpose() * policy.weights;
  return out;
}

ObjectiveValue sprl_dual(const DualVariables& duals, double alpha, const SampleBatch& batch, const Gaussian& target,
                         const Gaussian& sampler, double epsilon, const FeatureMap& value_features) {
  const SprlDual dual(batch, value_features, target, sampler, alpha, epsilon);
  ObjectiveValue v = dual.evaluate(duals);
  require_finite_value(v, (batch.rewards.cwiseAbs().maxCoeff()) / std::min(duals.eta_p, duals.eta_mu), "SPRL");
  return v;
}

ObjectiveValue creps_dual(const DualVariables& duals, const SampleBatch& batch, double epsilon,
                          const FeatureMap& value_features) {
  const CrepsDual dual(batch, value_features, epsilon);
  ObjectiveValue v = dual.evaluate(duals);
  require_finite_value(v, batch.rewards.cwiseAbs().maxCoeff() / duals.eta_p, "C-REPS");
  return v;
}

DualSolution optimize_dual(const DualObjective& objective, const DualVariables& initial, const DualBounds& bounds,
                           const QuasiNewtonOptions& options) {
  if (!(bounds.eta_floor > 0.0) || !(bounds.eta_ceiling > bounds.eta_floor)) {
    throw std::invalid_argument("temperature bounds must satisfy 0 < floor < ceiling");
  }
  const Index nt = objective.temperature_count();
  const Index n = nt + objective.value_dim();
  // Temperatures are searched on a log scale; values are not.
  Vector lower = Vector::Constant(n, -std::numeric_limits<double>::infinity());
  Vector upper = Vector::Constant(n, std::numeric_limits<double>::infinity());
  lower.head(nt).setConstant(std::log(bounds.eta_floor));
  upper.head(nt).setConstant(std::log(bounds.eta_ceiling));

  DualVariables start = initial;
  if (start.v_weights.size() != objective.value_dim()) start.v_weights = Vector::Zero(objective.value_dim());
  if (nt == 1) start.eta_mu = bounds.eta_floor;
  Vector x0 = objective.pack(start);
  for (Index i = 0; i < nt; ++i) x0[i] = std::log(std::clamp(x0[i], bounds.eta_floor, bounds.eta_ceiling));

  const Objective f = [&objective, nt](const Vector& y) {
    Vector x = y;
    for (Index i = 0; i < nt; ++i) x[i] = std::exp(y[i]);
    ObjectiveValue v = objective.evaluate(x);
    for (Index i = 0; i < nt; ++i) v.gradient[i] *= x[i];
    return v;
  };
  const QuasiNewtonResult coarse = minimize_bounded(f, x0, lower, upper, options);
  Vector x = coarse.x;
  for (Index i = 0; i < nt; ++i) x[i] = std::exp(x[i]);

  // A small log-scale gradient can hide a large one near the floor, so
  // convergence is decided on the original scale.
  lower.head(nt).setConstant(bounds.eta_floor);
  upper.head(nt).setConstant(bounds.eta_ceiling);
  const Objective direct = [&objective](const Vector& y) { return objective.evaluate(y); };
  QuasiNewtonResult report = minimize_bounded(direct, x.cwiseMax(lower).cwiseMin(upper), lower, upper, options);
  report.iterations += coarse.iterations;
  report.evaluations += coarse.evaluations;
  DualVariables duals = objective.unpack(report.x);
  if (nt == 1) duals.eta_mu = bounds.eta_floor;
  return {std::move(duals), std::move(report)};
}

namespace {

Vector mean_one_weights(const Vector& log_weights) {
  const Vector w = (log_weights.array() - log_weights.maxCoeff()).exp();
  return w * (static_cast<double>(w.size()) / w.sum());
}

}  // namespace

SampleWeights compute_weights(const DualVariables& duals, double alpha, const SampleBatch& batch,
                              const Gaussian& target, const Gaussian& sampler, const FeatureMap& value_features,
                              const WeightOptions& options) {
  batch.validate();
  const Matrix phi = value_rows(batch, value_features);
  const Vector log_base = normalized_log_base(batch);
  const Vector values = phi * duals.v_weights;
  const Vector log_ratio = target.log_pdf_rows(batch.contexts) - sampler.log_pdf_rows(batch.contexts);
  const Vector policy_exponent = (batch.rewards - values) / duals.eta_p;
  const Vector context_exponent = (alpha * log_ratio + values) / (alpha + duals.eta_mu);

  SampleWeights out;
  if (options.corrected_policy_weights) {
    out.policy = mean_one_weights(log_base + policy_exponent - context_exponent);
  } else {
    out.policy = mean_one_weights(log_base + policy_exponent);
  }
  out.context = mean_one_weights(log_base + context_exponent);
  return out;
}

Vector compute_policy_weights(const DualVariables& duals, const SampleBatch& batch, const FeatureMap& value_features) {
  batch.validate();
  const Vector exponent = normalized_log_base(batch) + advantage(batch, duals, value_features) / duals.eta_p;
  return mean_one_weights(exponent);
}

double alpha_schedule(int k, int k_alpha, double zeta, const Vector& rewards, double kl_to_target,
                      const AlphaLimits& limits) {
  if (!(kl_to_target >= 0.0)) throw std::invalid_argument("KL to the target must be non-negative");
  if (k <= k_alpha) return 0.0;
  if (kl_to_target < limits.kl_floor) return limits.alpha_cap;
  if (rewards.size() == 0) throw std::invalid_argument("alpha schedule needs at least one reward");
  const double alpha = zeta * rewards.sum() / (static_cast<double>(rewards.size()) * kl_to_target);
  // Negative mean reward would flip the pull toward the target.
  return std::clamp(alpha, 0.0, limits.alpha_cap);
}

}  // namespace sprl
