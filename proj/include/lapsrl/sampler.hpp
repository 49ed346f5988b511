#pragma once

// SARAH-LD: Langevin dynamics driven by the SARAH recursive variance-reduced
// gradient estimator, plus the schedule that maps a KL budget to (eta, K, m, B).
//
// Target: nu(theta) ~ exp(-gamma * F(theta)), F = (1/n) sum_i f_i,
//   f_i(theta) = -log prior(theta) / n - log lik(x_i | theta),
// so with gamma = n the target is the Bayesian posterior.

#include "lapsrl/core.hpp"

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <numbers>
#include <span>
#include <sstream>
#include <vector>

namespace lapsrl {

/// A Bayesian model usable by the sampler. Gradients are accumulated:
/// `add_grad_*(..., scale, out)` performs `out += scale * grad`.
template <class M>
concept LangevinModel = requires(const M& m, const typename M::Datum& x, const ParamVector& theta,
                                 Vector& out, double scale) {
  typename M::Datum;
  { m.dim() } -> std::convertible_to<Eigen::Index>;
  { m.log_prior(theta) } -> std::convertible_to<double>;
  { m.loglik(x, theta) } -> std::convertible_to<double>;
  m.add_grad_log_prior(theta, scale, out);
  m.add_grad_loglik(x, theta, scale, out);
};

struct LangevinSchedule {
  double eta = 0.0;
  std::int64_t steps_K = 0;
  std::int64_t epoch_m = 1;
  std::int64_t batch_B = 1;
  double gamma = 1.0;
  double eps_target = 0.0;
  /// Unrounded step count before the ceiling.
  double steps_real = 0.0;
  /// Set when 2*KL0/eps <= 1 and steps_K was clamped to 1.
  bool steps_clamped = false;
};

struct SamplerStats {
  std::int64_t grad_evals = 0;
  std::int64_t epochs = 0;
  std::int64_t wall_steps = 0;
  bool steps_clamped = false;
};

struct SampleResult {
  ParamVector theta;
  SamplerStats stats;
};

/// Thrown when an iterate or gradient estimate stops being finite.
class SamplerDivergence : public RunError {
 public:
  SamplerDivergence(std::int64_t step, double theta_norm)
      : RunError(message(step, theta_norm)), step_(step), theta_norm_(theta_norm) {}

  std::int64_t step() const { return step_; }
  double theta_norm() const { return theta_norm_; }

 private:
  static std::string message(std::int64_t step, double theta_norm) {
    std::ostringstream os;
    os << "SARAH-LD diverged at update " << step << " (|theta| = " << theta_norm << ")";
    return os.str();
  }
  std::int64_t step_;
  double theta_norm_;
};

/// Smallest integer r with r*r >= n.
inline std::int64_t ceil_sqrt(std::int64_t n) {
  auto r = static_cast<std::int64_t>(std::sqrt(static_cast<double>(n)));
  while (r * r < n) ++r;
  while (r > 1 && (r - 1) * (r - 1) >= n) --r;
  return std::max<std::int64_t>(r, 1);
}

/// Step-size branch that does not depend on the accuracy target.
inline double eta_stability_branch(double alpha, double smooth_L, double n) {
  return alpha / (16.0 * std::numbers::sqrt2 * smooth_L * smooth_L * n * std::sqrt(n));
}

/// Step-size branch proportional to the accuracy target.
inline double eta_accuracy_branch(double alpha, double smooth_L, double n, double dim_d,
                                  double eps) {
  return 3.0 * alpha * eps / (320.0 * dim_d * smooth_L * smooth_L * n);
}

/// Largest permissible step size and the matching number of updates for a
/// KL budget `eps`, with batch size and epoch length sqrt(n).
inline LangevinSchedule langevin_schedule(double alpha, double smooth_L, std::int64_t n,
                                          std::int64_t dim_d, double eps, double kl0_bound) {
  require_positive(alpha, "alpha");
  require_positive(smooth_L, "smooth_L");
  require(n >= 1, "n must be >= 1");
  require(dim_d >= 1, "dim_d must be >= 1");
  require_positive(eps, "eps");
  require_positive(kl0_bound, "kl0_bound");

  const double nd = static_cast<double>(n);
  LangevinSchedule s;
  s.eta = std::min(eta_stability_branch(alpha, smooth_L, nd),
                   eta_accuracy_branch(alpha, smooth_L, nd, static_cast<double>(dim_d), eps));
  s.gamma = nd;
  s.eps_target = eps;
  s.batch_B = s.epoch_m = ceil_sqrt(n);

  const double ratio = 2.0 * kl0_bound / eps;
  if (!(ratio > 1.0)) {
    s.steps_real = 0.0;
    s.steps_K = 1;
    s.steps_clamped = true;
    return s;
  }
  s.steps_real = nd / (alpha * s.eta) * std::log(ratio);
  require(s.steps_real < 9.0e18, "schedule step count overflows");
  s.steps_K = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(s.steps_real)));
  return s;
}

/// Per-datum gradient evaluations for K updates: ceil(K/m) epochs, each
/// costing n for the anchor gradient, plus 2B per inner update.
inline std::int64_t expected_grad_evals(std::int64_t n, std::int64_t steps_K, std::int64_t epoch_m,
                                        std::int64_t batch_B) {
  if (steps_K <= 0) return 0;
  const std::int64_t epochs = (steps_K + epoch_m - 1) / epoch_m;
  return epochs * n + 2 * batch_B * (steps_K - epochs);
}

/// Langevin noise sqrt(2*eta/gamma) * xi, xi ~ N(0, I).
inline void langevin_noise(Rng& rng, double eta, double gamma, Eigen::Ref<Vector> out) {
  fill_standard_normal(rng, out);
  out *= std::sqrt(2.0 * eta / gamma);
}

namespace detail {

/// out = grad F(theta) = -(1/n) grad log prior - (1/n) sum_i grad log lik(x_i).
template <LangevinModel M>
void full_gradient(const M& model, std::span<const typename M::Datum> data,
                   const ParamVector& theta, Vector& out) {
  const double inv_n = 1.0 / static_cast<double>(data.size());
  out.setZero();
  model.add_grad_log_prior(theta, -inv_n, out);
  for (const auto& x : data) model.add_grad_loglik(x, theta, -inv_n, out);
}

inline void check_finite(const Vector& theta, const Vector& v, std::int64_t step) {
  if (!theta.allFinite() || !v.allFinite()) {
    throw SamplerDivergence(step, theta.norm());
  }
}

}  // namespace detail

/// Runs SARAH-LD for `sched.steps_K` parameter updates starting at `init`.
///
/// Epoch s starts with the exact gradient of F at the current iterate; the
/// following m-1 updates use the recursion
///   v_k = (1/B) sum_{i in I_k} (grad f_i(theta_k) - grad f_i(theta_{k-1})) + v_{k-1}
/// with I_k drawn uniformly with replacement. The final epoch is truncated so
/// exactly K updates happen. Deterministic given `seed`.
template <LangevinModel M>
SampleResult sarah_ld(const M& model, std::span<const typename M::Datum> data,
                      const LangevinSchedule& sched, const ParamVector& init, std::uint64_t seed) {
  require(!data.empty(), "sarah_ld needs at least one datum");
  require(init.size() == static_cast<Eigen::Index>(model.dim()),
          "initial sample dimension does not match the model");
  require_positive(sched.eta, "eta");
  require_positive(sched.gamma, "gamma");
  require(sched.epoch_m >= 1 && sched.batch_B >= 1, "epoch length and batch size must be >= 1");
  require(sched.steps_K >= 0, "steps_K must be nonnegative");

  const auto n = static_cast<std::int64_t>(data.size());
  const Eigen::Index dim = init.size();
  const double inv_b = 1.0 / static_cast<double>(sched.batch_B);
  const double inv_n = 1.0 / static_cast<double>(n);

  Rng rng(seed);
  std::uniform_int_distribution<std::int64_t> pick(0, n - 1);

  SampleResult out{init, {}};
  out.stats.steps_clamped = sched.steps_clamped;
  ParamVector& theta = out.theta;
  ParamVector prev(dim);
  Vector v(dim), diff(dim), noise(dim);

  std::int64_t updates = 0;
  while (updates < sched.steps_K) {
    detail::full_gradient(model, data, theta, v);
    out.stats.grad_evals += n;

    langevin_noise(rng, sched.eta, sched.gamma, noise);
    prev = theta;
    theta += -sched.eta * v + noise;
    ++updates;
    detail::check_finite(theta, v, updates);

    for (std::int64_t l = 1; l < sched.epoch_m && updates < sched.steps_K; ++l) {
      diff.setZero();
      // The prior share of f_i is identical for every datum in the batch.
      model.add_grad_log_prior(theta, -inv_n * static_cast<double>(sched.batch_B), diff);
      model.add_grad_log_prior(prev, inv_n * static_cast<double>(sched.batch_B), diff);
      for (std::int64_t b = 0; b < sched.batch_B; ++b) {
        const auto& x = data[static_cast<std::size_t>(pick(rng))];
        model.add_grad_loglik(x, theta, -1.0, diff);
        model.add_grad_loglik(x, prev, 1.0, diff);
      }
      out.stats.grad_evals += 2 * sched.batch_B;
      v += inv_b * diff;

      langevin_noise(rng, sched.eta, sched.gamma, noise);
      prev = theta;
      theta += -sched.eta * v + noise;
      ++updates;
      detail::check_finite(theta, v, updates);
    }
    ++out.stats.epochs;
  }
  out.stats.wall_steps = updates;
  return out;
}

template <LangevinModel M>
SampleResult sarah_ld(const M& model, const std::vector<typename M::Datum>& data,
                      const LangevinSchedule& sched, const ParamVector& init, std::uint64_t seed) {
  return sarah_ld(model, std::span<const typename M::Datum>(data), sched, init, seed);
}

}  // namespace lapsrl
