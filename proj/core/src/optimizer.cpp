#include "sprl/optimizer.hpp"

#include <cmath>
#include <sstream>

#include "sprl/errors.hpp"

namespace sprl {

std::string to_string(QuasiNewtonResult::Status s) {
  switch (s) {
    case QuasiNewtonResult::Status::gradient_converged: return "gradient_converged";
    case QuasiNewtonResult::Status::stalled: return "stalled";
    case QuasiNewtonResult::Status::iteration_limit: return "iteration_limit";
    case QuasiNewtonResult::Status::line_search_failed: return "line_search_failed";
  }
  return "unknown";
}

double projected_gradient_norm(const Vector& x, const Vector& g, const Vector& lower, const Vector& upper) {
  const Vector projected = (x - g).cwiseMax(lower).cwiseMin(upper);
  return (projected - x).lpNorm<Eigen::Infinity>();
}

namespace {

Vector free_mask(const Vector& x, const Vector& g, const Vector& lower, const Vector& upper) {
  Vector mask = Vector::Ones(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    if ((x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0)) mask[i] = 0.0;
  }
  return mask;
}

}  // namespace

QuasiNewtonResult minimize_bounded(const Objective& f, Vector x0, const Vector& lower, const Vector& upper,
                                   const QuasiNewtonOptions& options) {
  const Index n = x0.size();
  if (lower.size() != n || upper.size() != n) throw std::invalid_argument("bound dimensions do not match x0");
  if ((lower.array() > upper.array()).any()) throw std::invalid_argument("lower bound exceeds upper bound");

  QuasiNewtonResult out;
  out.x = x0.cwiseMax(lower).cwiseMin(upper);
  ObjectiveValue cur = f(out.x);
  out.evaluations = 1;
  if (!std::isfinite(cur.value) || !cur.gradient.allFinite()) {
    throw NumericalError("objective is not finite at the initial point");
  }

  Matrix h = Matrix::Identity(n, n);
  int stall = 0;
  for (out.iterations = 0; out.iterations < options.max_iterations; ++out.iterations) {
    if (projected_gradient_norm(out.x, cur.gradient, lower, upper) < options.gradient_tolerance) {
      out.status = QuasiNewtonResult::Status::gradient_converged;
      break;
    }
    const Vector mask = free_mask(out.x, cur.gradient, lower, upper);
    const Vector g_free = cur.gradient.cwiseProduct(mask);
    Vector dir = -(mask.asDiagonal() * h * g_free);
    if (!(dir.dot(g_free) < 0.0)) {
      h.setIdentity();
      dir = -g_free;
    }

    double step = 1.0;
    bool accepted = false;
    Vector trial_x;
    ObjectiveValue trial;
    for (int b = 0; b < options.max_backtracks; ++b, step *= 0.5) {
      trial_x = (out.x + step * dir).cwiseMax(lower).cwiseMin(upper);
      trial = f(trial_x);
      ++out.evaluations;
      if (!std::isfinite(trial.value) || !trial.gradient.allFinite()) continue;
      if (trial.value <= cur.value + options.armijo * cur.gradient.dot(trial_x - out.x)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // A steepest-descent restart is the last resort before giving up.
      if (!h.isIdentity()) {
        h.setIdentity();
        continue;
      }
      out.status = QuasiNewtonResult::Status::line_search_failed;
      break;
    }

    const Vector s = trial_x - out.x;
    const Vector y = trial.gradient - cur.gradient;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (out.iterations == 0 && h.isIdentity()) h *= sy / y.squaredNorm();
      const double rho = 1.0 / sy;
      const Vector hy = h * y;
      h += (rho * rho * y.dot(hy) + rho) * s * s.transpose() - rho * (hy * s.transpose() + s * hy.transpose());
    }

    const double improvement = cur.value - trial.value;
    out.x = trial_x;
    cur = std::move(trial);
    stall = improvement < options.stall_tolerance ? stall + 1 : 0;
    if (stall >= options.stall_window) {
      out.status = QuasiNewtonResult::Status::stalled;
      ++out.iterations;
      break;
    }
  }
  if (!std::isfinite(cur.value)) {
    std::ostringstream msg;
    msg << "optimizer diverged; last accepted point " << out.x.transpose();
    throw NumericalError(msg.str());
  }
  out.value = cur.value;
  out.gradient = cur.gradient;
  return out;
}

}  // namespace sprl
