#include "sprl/gaussian.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "sprl/errors.hpp"

namespace sprl {

namespace {

void require_finite(const Vector& x, const char* what) {
  if (!x.allFinite()) throw std::invalid_argument(std::string(what) + " contains non-finite values");
}

double log_det_from(const Eigen::LLT<Matrix>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace

Eigen::LLT<Matrix> factorize_covariance(const Matrix& cov, const char* what) {
  const Index d = cov.rows();
  if (d == 0 || cov.cols() != d) throw std::invalid_argument(std::string(what) + " must be square and non-empty");
  if (!cov.allFinite()) throw NumericalError(std::string(what) + " contains non-finite values");
  const double jitter = kCovarianceJitter * cov.trace() / static_cast<double>(d);
  Matrix jittered = cov;
  jittered.diagonal().array() += std::max(jitter, 0.0);
  Eigen::LLT<Matrix> llt(jittered);
  if (llt.info() != Eigen::Success || !(llt.matrixLLT().diagonal().array() > 0.0).all()) {
    throw NumericalError(std::string(what) + " is not positive definite after jitter (trace " +
                         std::to_string(cov.trace()) + ", dim " + std::to_string(d) + ")");
  }
  return llt;
}

Gaussian::Gaussian(Vector mean, Matrix cov) : mean_(std::move(mean)), cov_(std::move(cov)) {
  if (mean_.size() == 0) throw std::invalid_argument("Gaussian dimension must be positive");
  if (cov_.rows() != mean_.size() || cov_.cols() != mean_.size()) {
    throw std::invalid_argument("Gaussian covariance is " + std::to_string(cov_.rows()) + "x" +
                                std::to_string(cov_.cols()) + ", mean has dimension " +
                                std::to_string(mean_.size()));
  }
  require_finite(mean_, "Gaussian mean");
  const double scale = cov_.cwiseAbs().maxCoeff();
  if ((cov_ - cov_.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(scale, 1e-300)) {
    throw std::invalid_argument("Gaussian covariance is not symmetric");
  }
  cov_ = 0.5 * (cov_ + cov_.transpose()).eval();
  llt_ = factorize_covariance(cov_, "Gaussian covariance");
  log_det_ = log_det_from(llt_);
}

Gaussian Gaussian::diagonal(const Vector& mean, const Vector& variances) {
  return Gaussian(mean, variances.asDiagonal().toDenseMatrix());
}

double Gaussian::log_pdf(const Vector& x) const {
  if (x.size() != dim()) {
    throw std::invalid_argument("log_pdf: point has dimension " + std::to_string(x.size()) +
                                ", Gaussian has " + std::to_string(dim()));
  }
  require_finite(x, "log_pdf input");
  const Vector z = llt_.matrixL().solve(x - mean_);
  const double d = static_cast<double>(dim());
  return -0.5 * (d * std::log(2.0 * std::numbers::pi) + log_det_ + z.squaredNorm());
}

Vector Gaussian::log_pdf_rows(const Matrix& xs) const {
  if (xs.cols() != dim()) {
    throw std::invalid_argument("log_pdf_rows: points have dimension " + std::to_string(xs.cols()) +
                                ", Gaussian has " + std::to_string(dim()));
  }
  if (!xs.allFinite()) throw std::invalid_argument("log_pdf_rows input contains non-finite values");
  Matrix centered = (xs.rowwise() - mean_.transpose()).transpose();
  llt_.matrixL().solveInPlace(centered);
  const double d = static_cast<double>(dim());
  const double constant = -0.5 * (d * std::log(2.0 * std::numbers::pi) + log_det_);
  return (constant - 0.5 * centered.colwise().squaredNorm().array()).matrix().transpose();
}

Matrix Gaussian::sample(RandomStream& rng, Index n) const {
  if (n < 1) throw std::invalid_argument("sample count must be at least 1");
  Matrix z(dim(), n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < dim(); ++i) z(i, j) = rng.normal();
  }
  Matrix out = (llt_.matrixL() * z).transpose();
  out.rowwise() += mean_.transpose();
  return out;
}

double log_pdf(const Vector& x, const Gaussian& g) { return g.log_pdf(x); }

double kl_divergence(const Vector& mean_p, const Matrix& cov_p, double log_det_p,
                     const Vector& mean_q, const Eigen::LLT<Matrix>& chol_q, double log_det_q) {
  const Index d = mean_p.size();
  const Matrix solved = chol_q.solve(cov_p);
  const Vector diff = mean_q - mean_p;
  const double maha = diff.dot(chol_q.solve(diff));
  const double kl = 0.5 * (solved.trace() + maha - static_cast<double>(d) + log_det_q - log_det_p);
  if (!std::isfinite(kl)) throw NumericalError("KL divergence is not finite");
  // Rounding can push an exact zero slightly negative.
  return std::max(kl, 0.0);
}

double kl_divergence(const Gaussian& p, const Gaussian& q) {
  if (p.dim() != q.dim()) {
    throw std::invalid_argument("kl_divergence: dimensions " + std::to_string(p.dim()) + " and " +
                                std::to_string(q.dim()) + " differ");
  }
  return kl_divergence(p.mean(), p.cov(), p.log_det(), q.mean(), q.cholesky(), q.log_det());
}

Matrix sample(const Gaussian& g, RandomStream& rng, Index n) { return g.sample(rng, n); }

}  // namespace sprl
