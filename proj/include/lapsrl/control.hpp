#pragma once

// Discrete-time LQR via Riccati fixed-point iteration, and an iCEM
// trajectory optimizer for receding-horizon planning.

#include "lapsrl/core.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <numbers>
#include <sstream>
#include <vector>

namespace lapsrl {

struct LqrSolution {
  Matrix P;
  Matrix K;
  int iterations = 0;
  double residual = 0.0;
};

class DareError : public RunError {
 public:
  DareError(const std::string& what, double residual) : RunError(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

namespace detail {

/// One Riccati map evaluation Q + A'PA - A'PB (R + B'PB)^{-1} B'PA.
inline Matrix riccati_step(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                           const Matrix& P, Matrix* gain = nullptr) {
  const Matrix S = R + B.transpose() * P * B;
  Eigen::FullPivLU<Matrix> lu(S);
  if (!lu.isInvertible()) throw DareError("R + B'PB is singular", std::numeric_limits<double>::quiet_NaN());
  const Matrix BtPA = B.transpose() * P * A;
  const Matrix K = lu.solve(BtPA);
  if (gain) *gain = K;
  Matrix next = Q + A.transpose() * P * A - BtPA.transpose() * K;
  return 0.5 * (next + next.transpose());
}

}  // namespace detail

/// Solves the discrete algebraic Riccati equation by iterating the Riccati
/// map from P = Q. The control law is u = -K x.
inline LqrSolution solve_dare(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                              double tol = 1e-10, int max_iter = 100000) {
  const auto n = A.rows();
  require(A.cols() == n && B.rows() == n, "A must be square and match B's rows");
  require(Q.rows() == n && Q.cols() == n, "Q must match A");
  require(R.rows() == B.cols() && R.cols() == B.cols(), "R must match B's columns");
  require(tol > 0.0 && max_iter >= 1, "tolerance and iteration budget must be positive");

  LqrSolution sol;
  sol.P = Q;
  double residual = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= max_iter; ++it) {
    Matrix next = detail::riccati_step(A, B, Q, R, sol.P);
    if (!next.allFinite()) throw DareError("Riccati iteration diverged", residual);
    sol.P = std::move(next);
    sol.iterations = it;
    residual = (sol.P - detail::riccati_step(A, B, Q, R, sol.P)).cwiseAbs().maxCoeff();
    if (residual <= tol) {
      detail::riccati_step(A, B, Q, R, sol.P, &sol.K);
      sol.residual = residual;
      return sol;
    }
  }
  std::ostringstream os;
  os << "Riccati iteration did not converge in " << max_iter << " iterations (residual " << residual
     << ")";
  throw DareError(os.str(), residual);
}

inline double spectral_radius(const Matrix& M) {
  return M.eigenvalues().cwiseAbs().maxCoeff();
}

// ---------------------------------------------------------------------------
// iCEM

struct IcemConfig {
  int iterations = 8;
  int samples = 48;
  int elites = 5;
  int horizon = 20;
  int action_dim = 1;
  double init_std = 0.5;
  /// Exponent of the 1/f^beta action-noise spectrum.
  double noise_beta = 2.0;
  bool reuse_elites = true;
  double action_low = -1.0;
  double action_high = 1.0;

  void validate() const {
    require(iterations >= 1, "iCEM needs at least one iteration");
    require(samples >= 1 && elites >= 1 && elites <= samples, "iCEM needs 1 <= elites <= samples");
    require(horizon >= 1, "planning horizon must be >= 1");
    require(action_dim >= 1, "action dimension must be >= 1");
    require_positive(init_std, "init_std");
    require(action_low < action_high, "action bounds are empty");
  }
};

/// Action sequences are horizon x action_dim.
struct IcemResult {
  Matrix actions;
  double best_return = -std::numeric_limits<double>::infinity();
  /// Best return found so far, after each iteration.
  std::vector<double> best_history;
};

struct EliteFit {
  Matrix mean;
  Matrix std;
  std::vector<std::size_t> indices;
};

/// Sorts candidates by return (ties by index), keeps the top `count` finite
/// ones and returns their elementwise mean and standard deviation.
inline EliteFit fit_elites(const std::vector<Matrix>& candidates, const std::vector<double>& returns,
                           int count) {
  require(candidates.size() == returns.size(), "candidate/return count mismatch");
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return returns[a] > returns[b]; });
  EliteFit fit;
  for (std::size_t i : order) {
    if (static_cast<int>(fit.indices.size()) == count) break;
    if (std::isfinite(returns[i])) fit.indices.push_back(i);
  }
  if (fit.indices.empty()) return fit;
  const auto& first = candidates[fit.indices.front()];
  fit.mean = Matrix::Zero(first.rows(), first.cols());
  for (std::size_t i : fit.indices) fit.mean += candidates[i];
  fit.mean /= static_cast<double>(fit.indices.size());
  Matrix var = Matrix::Zero(first.rows(), first.cols());
  for (std::size_t i : fit.indices) var += (candidates[i] - fit.mean).cwiseAbs2();
  var /= static_cast<double>(fit.indices.size());
  fit.std = var.cwiseSqrt();
  return fit;
}

/// Unit-variance noise sequence of length `len` with power spectrum 1/f^beta
/// (beta = 0 is white noise), synthesized by an inverse real DFT.
inline Vector colored_noise(Rng& rng, int len, double beta) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector out = Vector::Zero(len);
  const int bins = len / 2 + 1;
  double variance = 0.0;
  for (int k = 0; k < bins; ++k) {
    const double f = std::max(static_cast<double>(k), 1.0) / len;
    const double scale = std::pow(f, -beta / 2.0);
    const double re = normal(rng);
    const bool real_only = k == 0 || (len % 2 == 0 && k == len / 2);
    const double im = real_only ? 0.0 : normal(rng);
    variance += scale * scale;
    for (int t = 0; t < len; ++t) {
      const double ang = 2.0 * std::numbers::pi * k * t / len;
      out[t] += scale * (re * std::cos(ang) - im * std::sin(ang));
    }
  }
  return out / std::sqrt(variance);
}

/// Plans an action sequence from `state`. `dynamics(s, a)` returns the next
/// state; `reward(s, a, s_next)` the step reward. The returned sequence is the
/// best one evaluated; its return is nondecreasing over iterations.
template <class Dynamics, class Reward>
IcemResult icem_plan(const Dynamics& dynamics, const Reward& reward, const Vector& state,
                     const IcemConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  const int H = cfg.horizon, D = cfg.action_dim;

  auto rollout = [&](const Matrix& actions) {
    Vector s = state;
    double total = 0.0;
    for (int t = 0; t < H; ++t) {
      const Vector a = actions.row(t).transpose();
      Vector next = dynamics(s, a);
      total += reward(s, a, next);
      if (!std::isfinite(total) || !next.allFinite()) return -std::numeric_limits<double>::infinity();
      s = std::move(next);
    }
    return total;
  };

  Matrix mean = Matrix::Constant(H, D, 0.5 * (cfg.action_low + cfg.action_high));
  Matrix stdev = Matrix::Constant(H, D, cfg.init_std);
  std::vector<Matrix> kept;
  std::vector<double> kept_returns;

  IcemResult result;
  result.actions = mean;
  for (int it = 0; it < cfg.iterations; ++it) {
    std::vector<Matrix> pool;
    std::vector<double> returns;
    for (int i = 0; i < cfg.samples; ++i) {
      Matrix noise(H, D);
      for (int d = 0; d < D; ++d) noise.col(d) = colored_noise(rng, H, cfg.noise_beta);
      pool.push_back((mean + stdev.cwiseProduct(noise)).cwiseMax(cfg.action_low).cwiseMin(cfg.action_high));
    }
    if (it + 1 == cfg.iterations) pool.push_back(mean);
    for (const auto& c : pool) returns.push_back(rollout(c));
    if (cfg.reuse_elites) {
      pool.insert(pool.end(), kept.begin(), kept.end());
      returns.insert(returns.end(), kept_returns.begin(), kept_returns.end());
    }

    const EliteFit fit = fit_elites(pool, returns, cfg.elites);
    const double before = result.best_return;
    if (!fit.indices.empty()) {
      mean = fit.mean;
      stdev = fit.std;
      const std::size_t top = fit.indices.front();
      if (returns[top] > result.best_return) {
        result.best_return = returns[top];
        result.actions = pool[top];
      }
      kept.clear();
      kept_returns.clear();
      for (std::size_t i : fit.indices) {
        kept.push_back(pool[i]);
        kept_returns.push_back(returns[i]);
      }
    }
    if (result.best_return < before) throw RunError("iCEM best return decreased");
    result.best_history.push_back(result.best_return);
  }
  return result;
}

}  // namespace lapsrl
