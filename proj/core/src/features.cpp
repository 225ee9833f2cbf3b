#include "sprl/features.hpp"

#include <cmath>
#include <string>

namespace sprl {

namespace {

void require_dim(Index got, Index want, const char* what) {
  if (got != want) {
    throw std::invalid_argument(std::string(what) + ": expected dimension " + std::to_string(want) +
                                ", got " + std::to_string(got));
  }
}

Gaussian zero_mean_gaussian(Matrix cov) {
  Vector mean = Vector::Zero(cov.rows());
  return Gaussian(std::move(mean), std::move(cov));
}

}  // namespace

FeatureMap FeatureMap::linear_with_bias(Index input_dim) {
  if (input_dim < 1) throw std::invalid_argument("feature input dimension must be positive");
  FeatureMap f;
  f.kind_ = Kind::linear_with_bias;
  f.input_dim_ = input_dim;
  return f;
}

FeatureMap FeatureMap::radial_basis(Matrix centers, Vector bandwidth) {
  if (centers.rows() < 1 || centers.cols() < 1) throw std::invalid_argument("radial basis needs at least one center");
  require_dim(bandwidth.size(), centers.cols(), "radial basis bandwidth");
  if (!(bandwidth.array() > 0.0).all() || !bandwidth.allFinite()) {
    throw std::invalid_argument("radial basis bandwidth must be positive and finite");
  }
  FeatureMap f;
  f.kind_ = Kind::radial_basis;
  f.input_dim_ = centers.cols();
  f.centers_ = std::move(centers);
  f.bandwidth_ = std::move(bandwidth);
  return f;
}

FeatureMap FeatureMap::radial_basis_grid(const Vector& lower, const Vector& upper,
                                         const std::vector<int>& counts) {
  const Index d = lower.size();
  require_dim(upper.size(), d, "grid upper bound");
  require_dim(static_cast<Index>(counts.size()), d, "grid counts");
  Index total = 1;
  Vector spacing(d);
  for (Index j = 0; j < d; ++j) {
    if (counts[j] < 1) throw std::invalid_argument("grid count must be positive");
    if (!(upper[j] > lower[j])) throw std::invalid_argument("grid bounds must satisfy lower < upper");
    total *= counts[j];
    spacing[j] = counts[j] > 1 ? (upper[j] - lower[j]) / (counts[j] - 1) : (upper[j] - lower[j]);
  }
  Matrix centers(total, d);
  for (Index r = 0; r < total; ++r) {
    Index rest = r;
    // Last dimension varies fastest.
    for (Index j = d - 1; j >= 0; --j) {
      const Index idx = rest % counts[j];
      rest /= counts[j];
      centers(r, j) = counts[j] > 1 ? lower[j] + spacing[j] * static_cast<double>(idx)
                                    : 0.5 * (lower[j] + upper[j]);
    }
  }
  return radial_basis(std::move(centers), spacing);
}

Index FeatureMap::output_dim() const {
  return kind_ == Kind::linear_with_bias ? input_dim_ + 1 : centers_.rows();
}

Vector FeatureMap::operator()(const Vector& c) const {
  require_dim(c.size(), input_dim_, "featurize");
  if (kind_ == Kind::linear_with_bias) {
    Vector out(input_dim_ + 1);
    out[0] = 1.0;
    out.tail(input_dim_) = c;
    return out;
  }
  const Vector inv_bw2 = bandwidth_.array().square().inverse();
  Vector out(centers_.rows());
  for (Index k = 0; k < centers_.rows(); ++k) {
    const double d2 = ((c.transpose() - centers_.row(k)).array().square() * inv_bw2.transpose().array()).sum();
    out[k] = std::exp(-0.5 * d2);
  }
  return out;
}

Matrix FeatureMap::rows(const Matrix& cs) const {
  require_dim(cs.cols(), input_dim_, "featurize rows");
  Matrix out(cs.rows(), output_dim());
  for (Index i = 0; i < cs.rows(); ++i) out.row(i) = (*this)(cs.row(i).transpose()).transpose();
  return out;
}

Vector featurize(const Vector& c, const FeatureMap& f) { return f(c); }

LinearGaussianConditional::LinearGaussianConditional(Matrix gain, Matrix cov, FeatureMap features)
    : gain_(std::move(gain)),
      features_(std::move(features)),
      noise_(zero_mean_gaussian(std::move(cov))) {
  require_dim(gain_.cols(), features_.output_dim(), "policy gain columns");
  require_dim(gain_.rows(), noise_.dim(), "policy gain rows");
  if (!gain_.allFinite()) throw std::invalid_argument("policy gain contains non-finite values");
}

Vector LinearGaussianConditional::mean(const Vector& c) const { return gain_ * features_(c); }

Gaussian LinearGaussianConditional::at(const Vector& c) const { return Gaussian(mean(c), cov()); }

Vector LinearGaussianConditional::sample(const Vector& c, RandomStream& rng) const {
  return mean(c) + noise_.cholesky().matrixL() * rng.normal_vector(output_dim());
}

double LinearGaussianConditional::log_pdf(const Vector& theta, const Vector& c) const {
  return noise_.log_pdf(theta - mean(c));
}

}  // namespace sprl
