#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sprl/gaussian.hpp"
#include "sprl/random.hpp"

namespace sprl {

/// Axis-aligned box of valid contexts.
struct ContextBox {
  Vector lower;
  Vector upper;

  [[nodiscard]] Index dim() const { return lower.size(); }
  [[nodiscard]] Vector clamp(const Vector& c) const { return c.cwiseMax(lower).cwiseMin(upper); }
  [[nodiscard]] bool contains(const Vector& c) const;
  [[nodiscard]] Vector center() const { return 0.5 * (lower + upper); }
  [[nodiscard]] Vector width() const { return upper - lower; }
};

struct TrajectoryPoint {
  double t;
  double x;
  double y;
  double ux;
  double uy;
};

struct RolloutResult {
  double reward = 0.0;
  Vector final_position;
  bool success = false;
  bool crashed = false;
  std::vector<TrajectoryPoint> trajectory;
};

/// Episodic contextual task: one call maps (theta, c) to a scalar reward.
/// Implementations are stateless and safe to call from several threads.
class Environment {
 public:
  virtual ~Environment() = default;
  [[nodiscard]] virtual std::string name() const = 0;
  [[nodiscard]] virtual Index context_dim() const = 0;
  [[nodiscard]] virtual Index param_dim() const = 0;
  [[nodiscard]] virtual const ContextBox& context_box() const = 0;
  [[nodiscard]] virtual RolloutResult rollout(const Vector& theta, const Vector& context, RandomStream& rng,
                                              bool record_trajectory = false) const = 0;
};

// ---------------------------------------------------------------------------
// Gate point mass

struct GateContext {
  double gate_x = 0.0;
  double gate_width = 1.0;

  static GateContext from_vector(const Vector& c);
};

/// Two PD controllers u = K_i [x_i - x; y_i - y] + k_i. Desired heights are
/// fixed (wall height, then the goal height); everything else is learned.
struct GateParams {
  static constexpr Index kDim = 14;

  Eigen::Matrix2d gain1 = Eigen::Matrix2d::Zero();
  Eigen::Vector2d offset1 = Eigen::Vector2d::Zero();
  double x1 = 0.0;
  Eigen::Matrix2d gain2 = Eigen::Matrix2d::Zero();
  Eigen::Vector2d offset2 = Eigen::Vector2d::Zero();
  double x2 = 0.0;

  /// Layout: K1 (row-major), k1, x1, K2 (row-major), k2, x2.
  static GateParams from_vector(const Vector& theta);
  [[nodiscard]] Vector to_vector() const;
};

struct GateSettings {
  double kappa = 10.0;
  double nu = 1e-4;
  double tau = 0.05;
  double dt = 0.05;
  int horizon = 100;
  double noise_variance = 2.5e-3;
  double wall_y = 2.5;
  double min_width = 1e-3;
  Eigen::Vector2d start{0.0, 5.0};
  Eigen::Vector2d drift{5.0, -1.0};
  Eigen::Vector2d goal{0.0, 0.0};
};

/// max(0, kappa exp(-||final - goal||) - nu sum_i u_i^T u_i) with the goal at the origin.
double gate_reward(const Eigen::Vector2d& final_position, std::span<const Eigen::Vector2d> actions, double kappa,
                   double nu);
/// Same, from a precomputed sum of squared action norms.
double gate_reward(const Eigen::Vector2d& final_position, double action_energy, double kappa, double nu);

/// Strict: ||final - goal|| < tau.
bool success(const Vector& final_position, const Vector& goal, double tau);

/// Euler rollout of x' = drift + u + noise. The wall at `wall_y` is tested on
/// the segment between consecutive states; a crossing outside the gate stops
/// the episode at the interpolated wall point.
RolloutResult gate_rollout(const GateParams& theta, const GateContext& c, RandomStream& rng,
                           const GateSettings& settings = {}, bool record_trajectory = false);

class GateEnvironment final : public Environment {
 public:
  explicit GateEnvironment(GateSettings settings = {}, ContextBox box = default_box());

  static ContextBox default_box();

  [[nodiscard]] std::string name() const override { return "gate"; }
  [[nodiscard]] Index context_dim() const override { return 2; }
  [[nodiscard]] Index param_dim() const override { return GateParams::kDim; }
  [[nodiscard]] const ContextBox& context_box() const override { return box_; }
  [[nodiscard]] const GateSettings& settings() const { return settings_; }
  [[nodiscard]] RolloutResult rollout(const Vector& theta, const Vector& context, RandomStream& rng,
                                      bool record_trajectory = false) const override;

 private:
  GateSettings settings_;
  ContextBox box_;
};

// ---------------------------------------------------------------------------
// Quadratic oracle task

/// reward = exp(-||theta - G c||^2); success iff reward > 0.9. Noise free, so
/// the optimal linear-with-bias policy gain is [0 | G].
RolloutResult quadratic_rollout(const Vector& theta, const Vector& c, const Matrix& optimal_map);

class QuadraticEnvironment final : public Environment {
 public:
  explicit QuadraticEnvironment(Matrix optimal_map = default_map(), ContextBox box = default_box());

  static Matrix default_map();
  static ContextBox default_box();

  [[nodiscard]] std::string name() const override { return "quadratic"; }
  [[nodiscard]] Index context_dim() const override { return map_.cols(); }
  [[nodiscard]] Index param_dim() const override { return map_.rows(); }
  [[nodiscard]] const ContextBox& context_box() const override { return box_; }
  [[nodiscard]] const Matrix& optimal_map() const { return map_; }
  /// Optimal gain over linear-with-bias features.
  [[nodiscard]] Matrix optimal_gain() const;
  [[nodiscard]] RolloutResult rollout(const Vector& theta, const Vector& context, RandomStream& rng,
                                      bool record_trajectory = false) const override;

 private:
  Matrix map_;
  ContextBox box_;
};

/// One CSV per rollout: t,x,y,u_x,u_y.
void write_trajectory_csv(const std::filesystem::path& path, const std::vector<TrajectoryPoint>& trajectory);

}  // namespace sprl
