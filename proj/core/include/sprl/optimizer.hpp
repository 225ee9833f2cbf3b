#pragma once

#include <functional>
#include <string>

#include "sprl/gaussian.hpp"

namespace sprl {

struct ObjectiveValue {
  double value = 0.0;
  Vector gradient;
};

using Objective = std::function<ObjectiveValue(const Vector&)>;

struct QuasiNewtonOptions {
  int max_iterations = 500;
  /// Stop when the projected gradient infinity-norm drops below this.
  double gradient_tolerance = 1e-7;
  /// Stop when the objective improves by less than this for `stall_window`
  /// consecutive steps.
  double stall_tolerance = 1e-10;
  int stall_window = 10;
  double armijo = 1e-4;
  int max_backtracks = 60;
};

struct QuasiNewtonResult {
  Vector x;
  double value = 0.0;
  Vector gradient;
  int iterations = 0;
  int evaluations = 0;
  enum class Status { gradient_converged, stalled, iteration_limit, line_search_failed } status =
      Status::iteration_limit;
};

std::string to_string(QuasiNewtonResult::Status s);

/// Box-constrained BFGS minimizer.
///
/// Variables at a bound whose gradient points outward are frozen for the
/// step; the BFGS inverse Hessian is applied on the free subspace and the
/// trial point is projected back onto the box during an Armijo backtracking
/// search. Use +/-infinity for unbounded coordinates. Throws NumericalError
/// if the objective becomes non-finite at an accepted point.
QuasiNewtonResult minimize_bounded(const Objective& f, Vector x0, const Vector& lower, const Vector& upper,
                                   const QuasiNewtonOptions& options = {});

/// Infinity-norm of P(x - g) - x, the first-order optimality measure for a box.
double projected_gradient_norm(const Vector& x, const Vector& g, const Vector& lower, const Vector& upper);

}  // namespace sprl
