#pragma once

#include <vector>

#include "sprl/gaussian.hpp"

namespace sprl {

/// Context feature map phi(c).
///
/// Linear-with-bias maps c to [1, c]. Radial-basis maps c to one activation
/// exp(-sum_j (c_j - center_j)^2 / (2 b_j^2)) per center.
class FeatureMap {
 public:
  enum class Kind { linear_with_bias, radial_basis };

  static FeatureMap linear_with_bias(Index input_dim);
  /// `centers` is k x d, one center per row.
  static FeatureMap radial_basis(Matrix centers, Vector bandwidth);
  /// Uniform grid over [lower, upper] with `counts[j]` centers along
  /// dimension j; bandwidth per dimension equals the grid spacing.
  static FeatureMap radial_basis_grid(const Vector& lower, const Vector& upper,
                                      const std::vector<int>& counts);

  [[nodiscard]] Kind kind() const { return kind_; }
  [[nodiscard]] Index input_dim() const { return input_dim_; }
  [[nodiscard]] Index output_dim() const;
  [[nodiscard]] const Matrix& centers() const { return centers_; }
  [[nodiscard]] const Vector& bandwidth() const { return bandwidth_; }

  [[nodiscard]] Vector operator()(const Vector& c) const;
  /// Features of every row of `cs` (N x d) as an N x m matrix.
  [[nodiscard]] Matrix rows(const Matrix& cs) const;

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

 private:
  FeatureMap() = default;

  Kind kind_ = Kind::linear_with_bias;
  Index input_dim_ = 0;
  Matrix centers_;
  Vector bandwidth_;
};

Vector featurize(const Vector& c, const FeatureMap& f);

/// Conditional Gaussian N(theta | A phi(c), Sigma).
class LinearGaussianConditional {
 public:
  LinearGaussianConditional(Matrix gain, Matrix cov, FeatureMap features);

  [[nodiscard]] const Matrix& gain() const { return gain_; }
  [[nodiscard]] const Matrix& cov() const { return noise_.cov(); }
  [[nodiscard]] const FeatureMap& features() const { return features_; }
  /// Zero-mean Gaussian carrying the factorized covariance.
  [[nodiscard]] const Gaussian& noise() const { return noise_; }
  [[nodiscard]] Index output_dim() const { return gain_.rows(); }

  [[nodiscard]] Vector mean(const Vector& c) const;
  [[nodiscard]] Gaussian at(const Vector& c) const;
  [[nodiscard]] Vector sample(const Vector& c, RandomStream& rng) const;
  [[nodiscard]] double log_pdf(const Vector& theta, const Vector& c) const;

 private:
  Matrix gain_;
  FeatureMap features_;
  Gaussian noise_;
};

}  // namespace sprl
