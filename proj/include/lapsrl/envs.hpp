#pragma once

// Simulation environments: batched Gaussian bandit, continuous-action
// cart-pole, and a planar two-link reacher.

#include "lapsrl/core.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

namespace lapsrl {

struct StepResult {
  Vector state;
  double reward = 0.0;
  bool done = false;
};

// ---------------------------------------------------------------------------
// Bandit

struct Arm {
  double mean = 0.0;
  double variance = 1.0;
};

class BanditEnv {
 public:
  BanditEnv(std::vector<Arm> arms, int batch) : arms_(std::move(arms)), batch_(batch) {
    require(!arms_.empty(), "bandit needs at least one arm");
    require(batch_ >= 1, "bandit batch must be >= 1");
    for (const auto& a : arms_) {
      require(std::isfinite(a.mean), "arm mean must be finite");
      require_positive(a.variance, "arm variance");
    }
  }

  std::size_t num_arms() const { return arms_.size(); }
  int batch() const { return batch_; }
  const std::vector<Arm>& arms() const { return arms_; }

  std::size_t best_arm() const {
    return static_cast<std::size_t>(
        std::max_element(arms_.begin(), arms_.end(),
                         [](const Arm& a, const Arm& b) { return a.mean < b.mean; }) -
        arms_.begin());
  }

  /// Exact expected regret of one batched pull of `arm`.
  double pull_regret(std::size_t arm) const {
    require(arm < arms_.size(), "invalid arm index");
    return static_cast<double>(batch_) * (arms_[best_arm()].mean - arms_[arm].mean);
  }

  std::vector<double> pull(std::size_t arm, Rng& rng) const {
    require(arm < arms_.size(), "invalid arm index");
    std::normal_distribution<double> reward(arms_[arm].mean, std::sqrt(arms_[arm].variance));
    std::vector<double> out(static_cast<std::size_t>(batch_));
    for (double& r : out) r = reward(rng);
    return out;
  }

  std::vector<double> pull(std::size_t arm, std::uint64_t seed) const {
    Rng rng(seed);
    return pull(arm, rng);
  }

 private:
  std::vector<Arm> arms_;
  int batch_;
};

// ---------------------------------------------------------------------------
// Cart-pole (classic Barto-Sutton-Anderson constants, continuous force)

struct CartpoleParams {
  double gravity = 9.8;
  double cart_mass = 1.0;
  double pole_mass = 0.1;
  double half_length = 0.5;
  double force_mag = 10.0;
  double dt = 0.02;
  double x_limit = 2.4;
  double angle_limit = 12.0 * std::numbers::pi / 180.0;
  int horizon = 200;

  double total_mass() const { return cart_mass + pole_mass; }
};

/// One explicit-Euler step of the cart-pole equations; state is (x, x_dot, phi, phi_dot).
inline Vector cartpole_dynamics(const CartpoleParams& p, const Vector& s, double action) {
  const double force = p.force_mag * std::clamp(action, -1.0, 1.0);
  const double phi = s[2], phi_dot = s[3];
  const double cos_phi = std::cos(phi), sin_phi = std::sin(phi);
  const double pml = p.pole_mass * p.half_length;
  const double temp = (force + pml * phi_dot * phi_dot * sin_phi) / p.total_mass();
  const double phi_acc = (p.gravity * sin_phi - cos_phi * temp) /
                         (p.half_length * (4.0 / 3.0 - p.pole_mass * cos_phi * cos_phi / p.total_mass()));
  const double x_acc = temp - pml * phi_acc * cos_phi / p.total_mass();
  Vector next(4);
  next << s[0] + p.dt * s[1], s[1] + p.dt * x_acc, s[2] + p.dt * phi_dot, s[3] + p.dt * phi_acc;
  return next;
}

/// Jacobians (A, B) of the Euler step at a state/action pair, by central differences.
inline std::pair<Matrix, Matrix> linearize_cartpole(const CartpoleParams& p,
                                                    const Vector& s0 = Vector::Zero(4),
                                                    double a0 = 0.0, double h = 1e-6) {
  Matrix A(4, 4), B(4, 1);
  for (int j = 0; j < 4; ++j) {
    Vector up = s0, dn = s0;
    up[j] += h;
    dn[j] -= h;
    A.col(j) = (cartpole_dynamics(p, up, a0) - cartpole_dynamics(p, dn, a0)) / (2.0 * h);
  }
  B.col(0) = (cartpole_dynamics(p, s0, a0 + h) - cartpole_dynamics(p, s0, a0 - h)) / (2.0 * h);
  return {A, B};
}

struct CartpoleSnapshot {
  std::array<double, 4> state{};
  int steps = 0;
  bool done = false;
  bool failed = false;
};

inline void to_json(nlohmann::json& j, const CartpoleSnapshot& s) {
  j = {{"state", s.state}, {"steps", s.steps}, {"done", s.done}, {"failed", s.failed}};
}
inline void from_json(const nlohmann::json& j, CartpoleSnapshot& s) {
  j.at("state").get_to(s.state);
  j.at("steps").get_to(s.steps);
  j.at("done").get_to(s.done);
  j.at("failed").get_to(s.failed);
}

class CartpoleEnv {
 public:
  explicit CartpoleEnv(CartpoleParams params = {}) : p_(params), state_(Vector::Zero(4)) {}

  const CartpoleParams& params() const { return p_; }
  const Vector& state() const { return state_; }
  int steps() const { return steps_; }
  bool done() const { return done_; }
  bool failed() const { return failed_; }
  /// Episode ran the full horizon without failing.
  bool solved() const { return done_ && !failed_ && steps_ >= p_.horizon; }

  /// Uniform(-0.05, 0.05) in every coordinate.
  const Vector& reset(Rng& rng) {
    std::uniform_real_distribution<double> u(-0.05, 0.05);
    Vector s(4);
    for (int i = 0; i < 4; ++i) s[i] = u(rng);
    return reset(s);
  }

  const Vector& reset(const Vector& s) {
    require(s.size() == 4, "cart-pole state has 4 components");
    state_ = s;
    steps_ = 0;
    done_ = false;
    failed_ = false;
    return state_;
  }

  StepResult step(double action) {
    if (done_) throw RunError("cart-pole episode already terminated");
    state_ = cartpole_dynamics(p_, state_, action);
    ++steps_;
    failed_ = std::abs(state_[0]) > p_.x_limit || std::abs(state_[2]) > p_.angle_limit;
    done_ = failed_ || steps_ >= p_.horizon;
    return {state_, failed_ ? 0.0 : 1.0, done_};
  }

  CartpoleSnapshot snapshot() const {
    return {{state_[0], state_[1], state_[2], state_[3]}, steps_, done_, failed_};
  }
  void restore(const CartpoleSnapshot& s) {
    state_ = Eigen::Map<const Vector>(s.state.data(), 4);
    steps_ = s.steps;
    done_ = s.done;
    failed_ = s.failed;
  }

 private:
  CartpoleParams p_;
  Vector state_;
  int steps_ = 0;
  bool done_ = false;
  bool failed_ = false;
};

// ---------------------------------------------------------------------------
// Reacher: two unit-inertia joints, no gravity, viscous damping.

struct ReacherParams {
  double link1 = 0.1;
  double link2 = 0.1;
  double damping = 0.1;
  double dt = 0.02;
  double action_cost = 0.1;
  int horizon = 50;

  double reach() const { return link1 + link2; }
};

inline Eigen::Vector2d reacher_fingertip(const ReacherParams& p, const Vector& s) {
  return {p.link1 * std::cos(s[0]) + p.link2 * std::cos(s[0] + s[1]),
          p.link1 * std::sin(s[0]) + p.link2 * std::sin(s[0] + s[1])};
}

/// Joint dynamics theta'' = torque - damping * theta', integrated exactly over
/// one step with the torque held constant. State is (th1, th2, w1, w2).
inline Vector reacher_dynamics(const ReacherParams& p, const Vector& s, const Vector& action) {
  const double c = p.damping;
  const double decay = std::exp(-c * p.dt);
  Vector next(4);
  for (int j = 0; j < 2; ++j) {
    const double tau = std::clamp(action[j], -1.0, 1.0);
    const double w_inf = tau / c;
    next[j] = s[j] + w_inf * p.dt + (s[2 + j] - w_inf) * (1.0 - decay) / c;
    next[2 + j] = w_inf + (s[2 + j] - w_inf) * decay;
  }
  return next;
}

/// -(fingertip distance to target) - action_cost * |a|^2, evaluated after the move.
inline double reacher_reward(const ReacherParams& p, const Vector& next_state, const Vector& action,
                             const Eigen::Vector2d& target) {
  const Eigen::Vector2d a(std::clamp(action[0], -1.0, 1.0), std::clamp(action[1], -1.0, 1.0));
  return -(reacher_fingertip(p, next_state) - target).norm() - p.action_cost * a.squaredNorm();
}

struct ReacherSnapshot {
  std::array<double, 4> state{};
  std::array<double, 2> target{};
  int steps = 0;
  bool done = false;
};

inline void to_json(nlohmann::json& j, const ReacherSnapshot& s) {
  j = {{"state", s.state}, {"target", s.target}, {"steps", s.steps}, {"done", s.done}};
}
inline void from_json(const nlohmann::json& j, ReacherSnapshot& s) {
  j.at("state").get_to(s.state);
  j.at("target").get_to(s.target);
  j.at("steps").get_to(s.steps);
  j.at("done").get_to(s.done);
}

class ReacherEnv {
 public:
  explicit ReacherEnv(ReacherParams params = {}) : p_(params), state_(Vector::Zero(4)) {}

  const ReacherParams& params() const { return p_; }
  const Vector& state() const { return state_; }
  const Eigen::Vector2d& target() const { return target_; }
  int steps() const { return steps_; }
  bool done() const { return done_; }
  Eigen::Vector2d fingertip() const { return reacher_fingertip(p_, state_); }
  double distance() const { return (fingertip() - target_).norm(); }

  /// Joint angles and velocities near the stretched-out pose; target uniform
  /// in the reachable disk.
  const Vector& reset(Rng& rng) {
    std::uniform_real_distribution<double> angle(-0.1, 0.1), vel(-0.005, 0.005);
    Vector s(4);
    s << angle(rng), angle(rng), vel(rng), vel(rng);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double r = p_.reach() * std::sqrt(unit(rng));
    const double phi = 2.0 * std::numbers::pi * unit(rng);
    return reset(s, {r * std::cos(phi), r * std::sin(phi)});
  }

  const Vector& reset(const Vector& s, const Eigen::Vector2d& target) {
    require(s.size() == 4, "reacher state has 4 components");
    state_ = s;
    target_ = target;
    steps_ = 0;
    done_ = false;
    return state_;
  }

  StepResult step(const Vector& action) {
    if (done_) throw RunError("reacher episode already terminated");
    require(action.size() == 2, "reacher action has 2 components");
    state_ = reacher_dynamics(p_, state_, action);
    ++steps_;
    done_ = steps_ >= p_.horizon;
    return {state_, reacher_reward(p_, state_, action, target_), done_};
  }

  ReacherSnapshot snapshot() const {
    return {{state_[0], state_[1], state_[2], state_[3]}, {target_[0], target_[1]}, steps_, done_};
  }
  void restore(const ReacherSnapshot& s) {
    state_ = Eigen::Map<const Vector>(s.state.data(), 4);
    target_ = {s.target[0], s.target[1]};
    steps_ = s.steps;
    done_ = s.done;
  }

 private:
  ReacherParams p_;
  Vector state_;
  Eigen::Vector2d target_ = Eigen::Vector2d::Zero();
  int steps_ = 0;
  bool done_ = false;
};

}  // namespace lapsrl
