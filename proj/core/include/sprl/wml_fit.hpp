#pragma once

#include <functional>
#include <optional>

#include "sprl/features.hpp"
#include "sprl/gaussian.hpp"

namespace sprl {

/// Weighted samples (x_i, y_i) with separate context weights `wx` and
/// policy weights `wy`.
struct WeightedDataset {
  Matrix xs;  ///< N x d_x contexts
  Matrix ys;  ///< N x d_y parameters
  Vector wx;
  Vector wy;

  [[nodiscard]] Index size() const { return xs.rows(); }
  void validate() const;
};

/// Reference distribution q(x, y) = q_y(y | x) q_x(x) the fit may not move
/// away from by more than the KL budget.
struct ReferencePair {
  Gaussian context;
  LinearGaussianConditional policy;
};

/// Raw output of the stationarity conditions at a fixed multiplier.
struct FitParameters {
  Matrix gain;
  Matrix policy_cov;
  Vector context_mean;
  Matrix context_cov;
};

/// Sample-average KL(q || p) split into its conditional and context parts.
struct KlBreakdown {
  double policy = 0.0;
  double context = 0.0;
  [[nodiscard]] double combined() const { return policy + context; }
};

/// (Sum w)^2 / Sum w^2; zero for an all-zero vector.
double effective_sample_size(const Vector& w);

/// Regularized weighted ML estimates for multiplier `eta` >= 0.
///
/// eta = 0 is plain weighted ML; eta -> infinity pins every parameter to the
/// reference. Throws NumericalError naming the rank if the regularized Gram
/// matrix of the policy features cannot be inverted.
FitParameters closed_form_params(double eta, const WeightedDataset& data, const ReferencePair& ref);

/// (1/N) sum_i KL(q_y(.|x_i) || p_y(.|x_i)) over the dataset contexts.
double mean_conditional_kl(const LinearGaussianConditional& q, const LinearGaussianConditional& p,
                           const Matrix& xs);

KlBreakdown fit_kl(const Gaussian& fitted_context, const LinearGaussianConditional& fitted_policy,
                   const WeightedDataset& data, const ReferencePair& ref);

/// epsilon - (mean conditional KL + context KL) at closed_form_params(eta).
double constraint_gap(double eta, const WeightedDataset& data, const ReferencePair& ref, double epsilon);

struct FitOptions {
  /// When false only the policy is refit (context weights are ignored and the
  /// reference context is returned unchanged).
  bool fit_context = true;
  /// Also require KL(p_x || q_x) + mean conditional KL <= epsilon, which
  /// bounds the context step in the reverse direction too.
  bool bound_reverse_context_kl = false;
  /// Applied to the fitted context before any KL is measured, so the budget
  /// holds for the projected distribution.
  std::function<Gaussian(const Gaussian&)> project_context;
  double eta_max = 1e12;
  double relative_tolerance = 1e-6;
  int max_iterations = 200;
};

struct FitResult {
  Gaussian context;
  LinearGaussianConditional policy;
  double eta = 0.0;  ///< +inf when the reference was returned
  KlBreakdown kl;    ///< KL(q || p) in the fit's own sample-average form
  double reverse_context_kl = 0.0;
  bool degenerate_weights = false;
  int evaluations = 0;
};

/// Fit at eta = 0 when that satisfies the budget, otherwise at the root of
/// the constraint gap found by log-space bisection. The returned fit always
/// sits on the feasible side of the root.
FitResult fit(const WeightedDataset& data, const ReferencePair& ref, double epsilon,
              const FitOptions& options = {});

}  // namespace sprl
