#include "sprl/wml_fit.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include <Eigen/QR>

#include "sprl/errors.hpp"

namespace sprl {

void WeightedDataset::validate() const {
  const Index n = xs.rows();
  if (n == 0) throw std::invalid_argument("weighted dataset is empty");
  if (ys.rows() != n || wx.size() != n || wy.size() != n) {
    throw std::invalid_argument("weighted dataset fields disagree on sample count");
  }
  if (!xs.allFinite() || !ys.allFinite()) throw std::invalid_argument("weighted dataset samples must be finite");
  for (const Vector* w : {&wx, &wy}) {
    if (!w->allFinite() || (w->array() < 0.0).any()) {
      throw std::invalid_argument("dataset weights must be finite and non-negative");
    }
    if (!(w->array() > 0.0).any()) throw std::invalid_argument("dataset weights are all zero");
  }
}

double effective_sample_size(const Vector& w) {
  const double sq = w.squaredNorm();
  if (sq == 0.0) return 0.0;
  const double s = w.sum();
  return s * s / sq;
}

namespace {

constexpr double kRankTolerance = 1e-12;

/// Tiny Cholesky pivots relative to the largest diagonal entry.
bool rank_deficient(const Eigen::LLT<Matrix>& llt, const Matrix& gram) {
  const double smallest = llt.matrixLLT().diagonal().cwiseAbs2().minCoeff();
  return !(smallest > kRankTolerance * gram.diagonal().maxCoeff());
}

/// Sufficient statistics shared by every multiplier value during root search.
class FitProblem {
 public:
  FitProblem(const WeightedDataset& data, const ReferencePair& ref, bool fit_context)
      : data_(data), ref_(ref), fit_context_(fit_context) {
    if (data.xs.cols() != ref.context.dim()) {
      throw std::invalid_argument("dataset context dimension does not match the reference context");
    }
    if (data.ys.cols() != ref.policy.output_dim()) {
      throw std::invalid_argument("dataset parameter dimension does not match the reference policy");
    }
    phi_ = ref.policy.features().rows(data.xs);
    const Index n = data.size();
    n_ = static_cast<double>(n);
    gram_plain_ = phi_.transpose() * phi_;
    gram_weighted_ = phi_.transpose() * data.wy.asDiagonal() * phi_;
    cross_weighted_ = data.ys.transpose() * data.wy.asDiagonal() * phi_;
    ref_cross_ = ref.policy.gain() * gram_plain_;
    sum_wy_ = data.wy.sum();
    sum_wx_ = data.wx.sum();
    weighted_x_ = data.xs.transpose() * data.wx;
  }

  [[nodiscard]] const Matrix& features() const { return phi_; }

  FitParameters solve(double eta) const {
    if (!(eta >= 0.0) || std::isnan(eta)) throw std::invalid_argument("fit multiplier must be non-negative");
    FitParameters out;
    const double per_sample = eta / n_;

    Matrix gram = gram_weighted_ + per_sample * gram_plain_;
    const Matrix rhs = cross_weighted_ + per_sample * ref_cross_;
    Eigen::LLT<Matrix> llt(gram);
    if (llt.info() != Eigen::Success || rank_deficient(llt, gram)) {
      Eigen::ColPivHouseholderQR<Matrix> qr(gram);
      qr.setThreshold(kRankTolerance);
      if (qr.rank() < gram.rows()) {
        std::ostringstream msg;
        msg << "policy feature Gram matrix is rank deficient: rank " << qr.rank() << " of " << gram.rows();
        throw NumericalError(msg.str());
      }
      llt = factorize_covariance(gram, "policy feature Gram matrix");
    }
    // A = rhs * gram^{-1}; gram is symmetric.
    out.gain = llt.solve(rhs.transpose()).transpose();

    const Matrix residual = data_.ys - phi_ * out.gain.transpose();
    const Matrix delta_gain = out.gain - ref_.policy.gain();
    Matrix scatter = residual.transpose() * data_.wy.asDiagonal() * residual;
    scatter += eta * ref_.policy.cov();
    scatter += per_sample * delta_gain * gram_plain_ * delta_gain.transpose();
    out.policy_cov = scatter / (sum_wy_ + eta);

    if (fit_context_) {
      const Vector& ref_mean = ref_.context.mean();
      out.context_mean = (weighted_x_ + eta * ref_mean) / (sum_wx_ + eta);
      const Matrix centered = data_.xs.rowwise() - out.context_mean.transpose();
      Matrix cscatter = centered.transpose() * data_.wx.asDiagonal() * centered;
      const Vector shift = out.context_mean - ref_mean;
      cscatter += eta * (ref_.context.cov() + shift * shift.transpose());
      out.context_cov = cscatter / (sum_wx_ + eta);
    } else {
      out.context_mean = ref_.context.mean();
      out.context_cov = ref_.context.cov();
    }
    return out;
  }

  [[nodiscard]] double policy_kl(const LinearGaussianConditional& fitted) const {
    return conditional_kl(ref_.policy, fitted, gram_plain_, n_);
  }

  static double conditional_kl(const LinearGaussianConditional& q, const LinearGaussianConditional& p,
                               const Matrix& gram_plain, double n) {
    const Gaussian& pn = p.noise();
    const Gaussian& qn = q.noise();
    const double shared = kl_divergence(qn.mean(), qn.cov(), qn.log_det(), pn.mean(), pn.cholesky(), pn.log_det());
    const Matrix delta = p.gain() - q.gain();
    const Matrix solved = pn.cholesky().solve(delta);
    const double maha = (delta.transpose() * solved * gram_plain).trace() / n;
    const double kl = shared + 0.5 * maha;
    if (!std::isfinite(kl)) throw NumericalError("conditional KL is not finite");
    return std::max(kl, 0.0);
  }

 private:
  const WeightedDataset& data_;
  const ReferencePair& ref_;
  bool fit_context_;
  Matrix phi_;
  double n_ = 0.0;
  Matrix gram_plain_;
  Matrix gram_weighted_;
  Matrix cross_weighted_;
  Matrix ref_cross_;
  double sum_wy_ = 0.0;
  double sum_wx_ = 0.0;
  Vector weighted_x_;
};

struct Candidate {
  Gaussian context;
  LinearGaussianConditional policy;
  KlBreakdown kl;
  double reverse_context_kl = 0.0;
  double gap = 0.0;
};

std::optional<Candidate> evaluate(const FitProblem& problem, double eta, const ReferencePair& ref,
                                  double epsilon, const FitOptions& options) {
  try {
    FitParameters params = problem.solve(eta);
    LinearGaussianConditional policy(std::move(params.gain), std::move(params.policy_cov),
                                     ref.policy.features());
    Gaussian context = options.fit_context ? Gaussian(std::move(params.context_mean), std::move(params.context_cov))
                                           : ref.context;
    if (options.fit_context && options.project_context) context = options.project_context(context);
    KlBreakdown kl;
    kl.policy = problem.policy_kl(policy);
    kl.context = options.fit_context ? kl_divergence(ref.context, context) : 0.0;
    double gap = epsilon - kl.combined();
    double reverse = 0.0;
    if (options.fit_context) {
      reverse = kl_divergence(context, ref.context);
      if (options.bound_reverse_context_kl) gap = std::min(gap, epsilon - (reverse + kl.policy));
    }
    return Candidate{std::move(context), std::move(policy), kl, reverse, gap};
  } catch (const NumericalError&) {
    return std::nullopt;
  }
}

FitResult to_result(Candidate c, double eta, int evaluations) {
  FitResult r{std::move(c.context), std::move(c.policy), eta, c.kl, c.reverse_context_kl, false, evaluations};
  return r;
}

}  // namespace

FitParameters closed_form_params(double eta, const WeightedDataset& data, const ReferencePair& ref) {
  data.validate();
  return FitProblem(data, ref, true).solve(eta);
}

double mean_conditional_kl(const LinearGaussianConditional& q, const LinearGaussianConditional& p,
                           const Matrix& xs) {
  if (xs.rows() == 0) throw std::invalid_argument("mean_conditional_kl needs at least one context");
  const Matrix phi = q.features().rows(xs);
  return FitProblem::conditional_kl(q, p, phi.transpose() * phi, static_cast<double>(xs.rows()));
}

KlBreakdown fit_kl(const Gaussian& fitted_context, const LinearGaussianConditional& fitted_policy,
                   const WeightedDataset& data, const ReferencePair& ref) {
  KlBreakdown kl;
  kl.policy = mean_conditional_kl(ref.policy, fitted_policy, data.xs);
  kl.context = kl_divergence(ref.context, fitted_context);
  return kl;
}

double constraint_gap(double eta, const WeightedDataset& data, const ReferencePair& ref, double epsilon) {
  data.validate();
  const FitParameters p = closed_form_params(eta, data, ref);
  const LinearGaussianConditional policy(p.gain, p.policy_cov, ref.policy.features());
  const Gaussian context(p.context_mean, p.context_cov);
  return epsilon - fit_kl(context, policy, data, ref).combined();
}

FitResult fit(const WeightedDataset& data, const ReferencePair& ref, double epsilon, const FitOptions& options) {
  data.validate();
  if (!(epsilon > 0.0)) throw std::invalid_argument("fit: epsilon must be positive");

  const Index context_dim = data.xs.cols();
  const Index feature_dim = ref.policy.features().output_dim();
  const bool few_policy = effective_sample_size(data.wy) < static_cast<double>(feature_dim + 2);
  const bool few_context = options.fit_context && effective_sample_size(data.wx) < static_cast<double>(context_dim + 2);
  if (few_policy || few_context) {
    FitResult r{ref.context, ref.policy, std::numeric_limits<double>::infinity(), {}, 0.0, true, 0};
    return r;
  }

  const FitProblem problem(data, ref, options.fit_context);
  int evaluations = 1;
  std::optional<Candidate> at_zero = evaluate(problem, 0.0, ref, epsilon, options);
  if (at_zero && at_zero->gap >= 0.0) return to_result(std::move(*at_zero), 0.0, evaluations);
  const double gap_zero = at_zero ? at_zero->gap : -std::numeric_limits<double>::infinity();

  const double scale = data.wy.sum() + (options.fit_context ? data.wx.sum() : 0.0);
  double lo = 0.0;
  double hi = 1e-10 * scale;
  std::optional<Candidate> best;
  while (true) {
    if (hi > options.eta_max) hi = options.eta_max;
    ++evaluations;
    std::optional<Candidate> c = evaluate(problem, hi, ref, epsilon, options);
    if (c && c->gap >= 0.0) {
      best = std::move(c);
      break;
    }
    if (hi >= options.eta_max) {
      std::ostringstream msg;
      msg << "fit: no multiplier in [0, " << options.eta_max << "] satisfies the KL budget (gap " << gap_zero
          << " at 0, " << (c ? c->gap : -std::numeric_limits<double>::infinity()) << " at the upper end)";
      throw NumericalError(msg.str());
    }
    lo = hi;
    hi *= 10.0;
  }

  if (lo > 0.0) {
    for (int it = 0; it < options.max_iterations && std::log(hi / lo) > options.relative_tolerance; ++it) {
      const double mid = std::sqrt(lo * hi);
      ++evaluations;
      std::optional<Candidate> c = evaluate(problem, mid, ref, epsilon, options);
      if (c && c->gap >= 0.0) {
        hi = mid;
        best = std::move(c);
      } else {
        lo = mid;
      }
    }
  }
  return to_result(std::move(*best), hi, evaluations);
}

}  // namespace sprl
