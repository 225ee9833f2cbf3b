#include "sprl/envs.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <stdexcept>
#include <string>

namespace sprl {

bool ContextBox::contains(const Vector& c) const {
  return c.size() == dim() && (c.array() >= lower.array()).all() && (c.array() <= upper.array()).all();
}

GateContext GateContext::from_vector(const Vector& c) {
  if (c.size() != 2) throw std::invalid_argument("gate context must have 2 entries");
  return {c[0], c[1]};
}

GateParams GateParams::from_vector(const Vector& theta) {
  if (theta.size() != kDim) {
    throw std::invalid_argument("gate parameters must have 14 entries, got " + std::to_string(theta.size()));
  }
  GateParams p;
  p.gain1 << theta[0], theta[1], theta[2], theta[3];
  p.offset1 << theta[4], theta[5];
  p.x1 = theta[6];
  p.gain2 << theta[7], theta[8], theta[9], theta[10];
  p.offset2 << theta[11], theta[12];
  p.x2 = theta[13];
  return p;
}

Vector GateParams::to_vector() const {
  Vector v(kDim);
  v << gain1(0, 0), gain1(0, 1), gain1(1, 0), gain1(1, 1), offset1, x1, gain2(0, 0), gain2(0, 1), gain2(1, 0),
      gain2(1, 1), offset2, x2;
  return v;
}

double gate_reward(const Eigen::Vector2d& final_position, double action_energy, double kappa, double nu) {
  const double r = kappa * std::exp(-final_position.norm()) - nu * action_energy;
  return std::isfinite(r) ? std::max(0.0, r) : 0.0;
}

double gate_reward(const Eigen::Vector2d& final_position, std::span<const Eigen::Vector2d> actions, double kappa,
                   double nu) {
  double energy = 0.0;
  for (const auto& u : actions) energy += u.squaredNorm();
  return gate_reward(final_position, energy, kappa, nu);
}

bool success(const Vector& final_position, const Vector& goal, double tau) {
  return (final_position - goal).norm() < tau;
}

RolloutResult gate_rollout(const GateParams& theta, const GateContext& c, RandomStream& rng,
                           const GateSettings& s, bool record_trajectory) {
  const double width = std::max(c.gate_width, s.min_width);
  const double noise_scale = std::sqrt(s.noise_variance * s.dt);
  Eigen::Vector2d pos = s.start;
  bool second = pos.y() <= s.wall_y;
  double energy = 0.0;

  RolloutResult out;
  if (record_trajectory) out.trajectory.reserve(static_cast<std::size_t>(s.horizon) + 1);

  for (int step = 0; step < s.horizon; ++step) {
    const Eigen::Vector2d desired = second ? Eigen::Vector2d(theta.x2, s.goal.y()) : Eigen::Vector2d(theta.x1, s.wall_y);
    const Eigen::Vector2d u = second ? Eigen::Vector2d(theta.gain2 * (desired - pos) + theta.offset2)
                                     : Eigen::Vector2d(theta.gain1 * (desired - pos) + theta.offset1);
    energy += u.squaredNorm();
    if (record_trajectory) out.trajectory.push_back({step * s.dt, pos.x(), pos.y(), u.x(), u.y()});

    const double n0 = rng.normal();
    const double n1 = rng.normal();
    const Eigen::Vector2d next = pos + s.dt * (s.drift + u) + noise_scale * Eigen::Vector2d(n0, n1);
    if (!next.allFinite() || !std::isfinite(energy)) {
      out.reward = 0.0;
      out.final_position = pos;
      return out;
    }

    const bool crosses = (pos.y() > s.wall_y && next.y() <= s.wall_y) || (pos.y() < s.wall_y && next.y() >= s.wall_y);
    if (crosses) {
      const double frac = (pos.y() - s.wall_y) / (pos.y() - next.y());
      const double x_cross = pos.x() + frac * (next.x() - pos.x());
      if (std::abs(x_cross - c.gate_x) > 0.5 * width) {
        const Eigen::Vector2d at_wall(x_cross, s.wall_y);
        out.crashed = true;
        out.final_position = at_wall;
        out.reward = gate_reward(at_wall, energy, s.kappa, s.nu);
        if (record_trajectory) out.trajectory.push_back({(step + frac) * s.dt, at_wall.x(), at_wall.y(), 0.0, 0.0});
        return out;
      }
      second = true;
    }
    pos = next;
  }

  if (record_trajectory) out.trajectory.push_back({s.horizon * s.dt, pos.x(), pos.y(), 0.0, 0.0});
  out.final_position = pos;
  out.reward = gate_reward(pos, energy, s.kappa, s.nu);
  out.success = success(pos, s.goal, s.tau);
  return out;
}

GateEnvironment::GateEnvironment(GateSettings settings, ContextBox box)
    : settings_(std::move(settings)), box_(std::move(box)) {
  if (box_.dim() != 2) throw std::invalid_argument("gate context box must be 2-dimensional");
  if (box_.lower[1] < settings_.min_width) throw std::invalid_argument("gate width lower bound below the width floor");
}

ContextBox GateEnvironment::default_box() {
  ContextBox b;
  b.lower = Eigen::Vector2d(-4.0, 0.1);
  b.upper = Eigen::Vector2d(4.0, 8.0);
  return b;
}

RolloutResult GateEnvironment::rollout(const Vector& theta, const Vector& context, RandomStream& rng,
                                       bool record_trajectory) const {
  return gate_rollout(GateParams::from_vector(theta), GateContext::from_vector(context), rng, settings_,
                      record_trajectory);
}

RolloutResult quadratic_rollout(const Vector& theta, const Vector& c, const Matrix& optimal_map) {
  if (theta.size() != optimal_map.rows() || c.size() != optimal_map.cols()) {
    throw std::invalid_argument("quadratic rollout: dimension mismatch");
  }
  RolloutResult out;
  out.final_position = theta - optimal_map * c;
  out.reward = std::exp(-out.final_position.squaredNorm());
  out.success = out.reward > 0.9;
  return out;
}

QuadraticEnvironment::QuadraticEnvironment(Matrix optimal_map, ContextBox box)
    : map_(std::move(optimal_map)), box_(std::move(box)) {
  if (box_.dim() != map_.cols()) throw std::invalid_argument("quadratic context box dimension mismatch");
}

Matrix QuadraticEnvironment::default_map() {
  Matrix g(2, 2);
  g << 1.0, -0.5, 0.5, 1.5;
  return g;
}

ContextBox QuadraticEnvironment::default_box() {
  ContextBox b;
  b.lower = Eigen::Vector2d(-1.0, -1.0);
  b.upper = Eigen::Vector2d(1.0, 1.0);
  return b;
}

Matrix QuadraticEnvironment::optimal_gain() const {
  Matrix a = Matrix::Zero(map_.rows(), map_.cols() + 1);
  a.rightCols(map_.cols()) = map_;
  return a;
}

RolloutResult QuadraticEnvironment::rollout(const Vector& theta, const Vector& context, RandomStream&, bool) const {
  return quadratic_rollout(theta, context, map_);
}

void write_trajectory_csv(const std::filesystem::path& path, const std::vector<TrajectoryPoint>& trajectory) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "t,x,y,u_x,u_y\n" << std::setprecision(10);
  for (const auto& p : trajectory) out << p.t << ',' << p.x << ',' << p.y << ',' << p.ux << ',' << p.uy << '\n';
}

}  // namespace sprl
