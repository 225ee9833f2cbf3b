#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "sprl/random.hpp"

namespace sprl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Relative diagonal jitter added before every covariance factorization.
inline constexpr double kCovarianceJitter = 1e-10;

/// Cholesky factor of `cov + jitter * trace(cov) / d * I`.
/// Throws NumericalError if the jittered matrix is still not positive definite.
Eigen::LLT<Matrix> factorize_covariance(const Matrix& cov, const char* what = "covariance");

/// Full-covariance multivariate normal. Immutable after construction.
class Gaussian {
 public:
  Gaussian(Vector mean, Matrix cov);

  static Gaussian diagonal(const Vector& mean, const Vector& variances);

  [[nodiscard]] const Vector& mean() const { return mean_; }
  [[nodiscard]] const Matrix& cov() const { return cov_; }
  [[nodiscard]] Index dim() const { return mean_.size(); }

  [[nodiscard]] const Eigen::LLT<Matrix>& cholesky() const { return llt_; }
  [[nodiscard]] double log_det() const { return log_det_; }

  [[nodiscard]] double log_pdf(const Vector& x) const;
  /// Log-density of every row of `xs` (N x d).
  [[nodiscard]] Vector log_pdf_rows(const Matrix& xs) const;

  /// n x d matrix of draws.
  [[nodiscard]] Matrix sample(RandomStream& rng, Index n) const;

 private:
  Vector mean_;
  Matrix cov_;
  Eigen::LLT<Matrix> llt_;
  double log_det_ = 0.0;
};

double log_pdf(const Vector& x, const Gaussian& g);

/// KL(p || q) in nats.
double kl_divergence(const Gaussian& p, const Gaussian& q);

/// KL(N(mean_p, cov_p) || N(mean_q, cov_q)) using precomputed factors.
/// Shared by the Gaussian overload and the conditional-KL code paths.
double kl_divergence(const Vector& mean_p, const Matrix& cov_p, double log_det_p,
                     const Vector& mean_q, const Eigen::LLT<Matrix>& chol_q, double log_det_q);

Matrix sample(const Gaussian& g, RandomStream& rng, Index n);

}  // namespace sprl
