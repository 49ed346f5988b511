#include "lapsrl/envs.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace lapsrl;

TEST(Bandit, SampleMeanMatchesConfiguredMean) {
  const BanditEnv env({{0.0, 0.25}, {0.1, 0.25}}, 20);
  Rng rng(1);
  double sum = 0;
  const int pulls = 100000 / 20;
  for (int i = 0; i < pulls; ++i)
    for (double r : env.pull(1, rng)) sum += r;
  EXPECT_NEAR(sum / (pulls * 20), 0.1, 0.005);
}

TEST(Bandit, DeterministicGivenSeed) {
  const BanditEnv env({{0.0, 0.25}, {0.1, 0.25}}, 20);
  EXPECT_EQ(env.pull(0, 77), env.pull(0, 77));
  EXPECT_NE(env.pull(0, 77), env.pull(0, 78));
  EXPECT_EQ(env.pull(1, 5).size(), 20u);
}

TEST(Bandit, RejectsInvalidConfigs) {
  EXPECT_THROW(BanditEnv({{0.0, 0.0}}, 20), ValidationError);
  EXPECT_THROW(BanditEnv({}, 20), ValidationError);
  EXPECT_THROW(BanditEnv({{0.0, 1.0}}, 0), ValidationError);
  const BanditEnv env({{0.0, 1.0}}, 1);
  EXPECT_THROW(env.pull(1, 3), ValidationError);
}

TEST(Bandit, ExactRegretOracle) {
  const BanditEnv env({{0.0, 0.25}, {0.1, 0.25}, {-0.3, 1.0}}, 20);
  EXPECT_EQ(env.best_arm(), 1u);
  EXPECT_DOUBLE_EQ(env.pull_regret(1), 0.0);
  EXPECT_NEAR(env.pull_regret(0), 2.0, 1e-12);
  EXPECT_NEAR(env.pull_regret(2), 8.0, 1e-12);
}

TEST(Cartpole, UprightAtRestStaysPut) {
  CartpoleEnv env;
  env.reset(Vector::Zero(4));
  const auto r = env.step(0.0);
  EXPECT_LT(std::abs(r.state[2]), 1e-6);
  EXPECT_EQ(r.reward, 1.0);
  EXPECT_FALSE(r.done);
}

TEST(Cartpole, FallsWithoutControl) {
  CartpoleEnv env;
  Vector s = Vector::Zero(4);
  s[2] = 0.05;
  env.reset(s);
  while (!env.done()) env.step(0.0);
  EXPECT_LT(env.steps(), 200);
  EXPECT_EQ(env.steps(), 28);
  EXPECT_TRUE(env.failed());
  EXPECT_FALSE(env.solved());
}

TEST(Cartpole, FirstStepUnderFullForce) {
  // Classic equations at phi = 0: the pole reaction adds to the cart acceleration.
  const double M = 1.1, m = 0.1, l = 0.5, F = 10.0, dt = 0.02;
  const double temp = F / M;
  const double phi_acc = -temp / (l * (4.0 / 3.0 - m / M));
  const double x_acc = temp - m * l * phi_acc / M;
  CartpoleEnv env;
  env.reset(Vector::Zero(4));
  const auto r = env.step(1.0);
  EXPECT_NEAR(r.state[1], x_acc * dt, 1e-9);
  EXPECT_NEAR(r.state[1], 0.1951219512195122, 1e-9);
  EXPECT_NEAR(r.state[0], 0.0, 1e-15);
  // Actions are clamped to [-1, 1].
  CartpoleEnv env2;
  env2.reset(Vector::Zero(4));
  EXPECT_EQ(env2.step(5.0).state, r.state);
}

TEST(Cartpole, SteppingTerminatedEpisodeThrows) {
  CartpoleParams p;
  p.horizon = 3;
  CartpoleEnv env(p);
  env.reset(Vector::Zero(4));
  for (int i = 0; i < 3; ++i) env.step(0.0);
  EXPECT_TRUE(env.done());
  EXPECT_TRUE(env.solved());
  EXPECT_THROW(env.step(0.0), RunError);
}

TEST(Cartpole, SnapshotRoundTrip) {
  CartpoleEnv env;
  Rng rng(4);
  env.reset(rng);
  env.step(0.3);
  env.step(-0.8);
  const nlohmann::json j = env.snapshot();
  CartpoleEnv other;
  other.restore(nlohmann::json::parse(j.dump()).get<CartpoleSnapshot>());
  EXPECT_EQ(other.state(), env.state());
  EXPECT_EQ(other.steps(), env.steps());
  EXPECT_EQ(other.step(0.1).state, env.step(0.1).state);
}

TEST(Cartpole, ResetIsSeedDeterministicAndSmall) {
  CartpoleEnv a, b;
  Rng r1(9), r2(9);
  EXPECT_EQ(a.reset(r1), b.reset(r2));
  EXPECT_LE(a.state().cwiseAbs().maxCoeff(), 0.05);
}

TEST(Cartpole, LinearizationMatchesDynamicsNearEquilibrium) {
  const CartpoleParams p;
  const auto [A, B] = linearize_cartpole(p);
  Vector s(4);
  s << 0.01, -0.02, 0.01, 0.015;
  const Vector lin = A * s + B * 0.05;
  EXPECT_LT((lin - cartpole_dynamics(p, s, 0.05)).cwiseAbs().maxCoeff(), 1e-5);
  EXPECT_NEAR(A(0, 1), p.dt, 1e-9);
}

TEST(Reacher, EquilibriumWithoutTorque) {
  ReacherEnv env;
  Vector s(4);
  s << 0.3, -0.2, 0.0, 0.0;
  env.reset(s, {0.1, 0.0});
  const auto r = env.step(Vector::Zero(2));
  EXPECT_EQ(r.state, s);
}

TEST(Reacher, RewardZeroAtTarget) {
  const ReacherParams p;
  Vector s(4);
  s << 0.4, 0.7, 0.0, 0.0;
  EXPECT_EQ(reacher_reward(p, s, Vector::Zero(2), reacher_fingertip(p, s)), 0.0);
  EXPECT_NEAR(reacher_reward(p, s, Vector::Ones(2), reacher_fingertip(p, s)), -0.2, 1e-15);
}

TEST(Reacher, ConstantTorqueMatchesClosedForm) {
  // theta'' = tau - c theta' from rest: theta(t) = tau t / c - tau (1 - exp(-c t)) / c^2.
  ReacherEnv env;
  env.reset(Vector::Zero(4), {0.1, 0.1});
  Vector a(2);
  a << 1.0, 0.0;
  for (int i = 0; i < 10; ++i) env.step(a);
  const double c = 0.1, t = 0.2;
  const double want = t / c - (1 - std::exp(-c * t)) / (c * c);
  EXPECT_NEAR(env.state()[0], want, 1e-3);
  EXPECT_NEAR(env.state()[0], 0.019867330675525707, 1e-12);
  EXPECT_NEAR(env.state()[2], (1 - std::exp(-c * t)) / c, 1e-12);
  EXPECT_EQ(env.state()[1], 0.0);
}

TEST(Reacher, FingertipKinematics) {
  const ReacherParams p;
  Vector s = Vector::Zero(4);
  EXPECT_TRUE(reacher_fingertip(p, s).isApprox(Eigen::Vector2d(0.2, 0.0)));
  s[0] = std::numbers::pi / 2;
  s[1] = std::numbers::pi / 2;
  EXPECT_LT((reacher_fingertip(p, s) - Eigen::Vector2d(-0.1, 0.1)).norm(), 1e-15);
}

TEST(Reacher, EpisodeLengthAndSnapshot) {
  ReacherEnv env;
  Rng rng(3);
  env.reset(rng);
  EXPECT_LE(env.target().norm(), 0.2);
  Vector a(2);
  a << 0.2, -0.4;
  env.step(a);
  const nlohmann::json j = env.snapshot();
  ReacherEnv other;
  other.restore(nlohmann::json::parse(j.dump()).get<ReacherSnapshot>());
  EXPECT_EQ(other.state(), env.state());
  EXPECT_EQ(other.target(), env.target());
  int steps = 1;
  while (!env.done()) {
    env.step(a);
    ++steps;
  }
  EXPECT_EQ(steps, 50);
  EXPECT_THROW(env.step(a), RunError);
}

TEST(Reacher, TargetsFillTheDisk) {
  ReacherEnv env;
  Rng rng(11);
  int inner = 0;
  const int N = 20000;
  for (int i = 0; i < N; ++i) {
    env.reset(rng);
    ASSERT_LE(env.target().norm(), 0.2 + 1e-15);
    if (env.target().norm() < 0.1) ++inner;
  }
  // Uniform on the disk: a quarter of the mass lies inside half the radius.
  EXPECT_NEAR(static_cast<double>(inner) / N, 0.25, 5 * std::sqrt(0.25 * 0.75 / N));
}
