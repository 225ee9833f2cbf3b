#pragma once

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Dense>

#include "sprl/gaussian.hpp"

namespace testing_support {

using sprl::Index;
using sprl::Matrix;
using sprl::Vector;

/// Test-side randomness, deliberately independent of the library's stream.
class Rng {
 public:
  explicit Rng(unsigned long long seed) : engine_(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  Vector normal_vector(Index n) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = normal();
    return v;
  }
  Matrix normal_matrix(Index r, Index c) {
    Matrix m(r, c);
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < c; ++j) m(i, j) = normal();
    return m;
  }
  /// SPD with eigenvalues in [lo, hi].
  Matrix spd(Index d, double lo = 0.2, double hi = 3.0) {
    const Eigen::HouseholderQR<Matrix> qr(normal_matrix(d, d));
    const Matrix q = qr.householderQ();
    Vector ev(d);
    for (Index i = 0; i < d; ++i) ev[i] = uniform(lo, hi);
    Matrix s = q * ev.asDiagonal() * q.transpose();
    return 0.5 * (s + s.transpose());
  }
  sprl::Gaussian gaussian(Index d) { return sprl::Gaussian(normal_vector(d), spd(d)); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

/// Textbook density via explicit inverse and determinant.
inline double naive_log_pdf(const Vector& x, const Vector& mean, const Matrix& cov) {
  const double d = static_cast<double>(x.size());
  const Vector r = x - mean;
  return -0.5 * (d * std::log(2.0 * std::numbers::pi) + std::log(cov.determinant()) + r.dot(cov.inverse() * r));
}

/// Textbook Gaussian KL via explicit inverse and determinant.
inline double naive_kl(const Vector& mp, const Matrix& cp, const Vector& mq, const Matrix& cq) {
  const Matrix qi = cq.inverse();
  const Vector dm = mq - mp;
  const double d = static_cast<double>(mp.size());
  return 0.5 * ((qi * cp).trace() + dm.dot(qi * dm) - d + std::log(cq.determinant() / cp.determinant()));
}

}  // namespace testing_support
