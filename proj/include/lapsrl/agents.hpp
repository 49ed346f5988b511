#pragma once

// Posterior-sampling agents: PSRL with exact conjugate posteriors and
// LaPSRL, which draws each episode's model with SARAH-LD to a KL budget
// eps_l = g / (l * Delta_max^2).

#include "lapsrl/control.hpp"
#include "lapsrl/envs.hpp"
#include "lapsrl/models.hpp"
#include "lapsrl/sampler.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

namespace lapsrl {

enum class EpsMode { paper_alg2, corollary_g_squared };

inline EpsMode parse_eps_mode(std::string_view s) {
  if (s == "alg2" || s == "paper_alg2") return EpsMode::paper_alg2;
  if (s == "corollary" || s == "corollary_g_squared") return EpsMode::corollary_g_squared;
  throw ValidationError("unknown eps mode: " + std::string(s));
}

struct AgentConfig {
  /// Regret-order scale g(H, S, A). Non-positive selects Delta_max^2.
  double g_order = 0.0;
  /// Maximal per-episode regret. Non-positive selects the environment default.
  double delta_max = 0.0;
  EpsMode eps_mode = EpsMode::paper_alg2;
  bool chained = true;
  /// Upper bound on sampler updates per draw.
  std::optional<std::int64_t> step_cap;
  /// Replaces steps_K outright (tests use 0 to expose the initialization).
  std::optional<std::int64_t> force_steps;
  /// Replaces the KL(init || posterior) bound used in the step count.
  std::optional<double> kl0_bound;
  /// LQR state and action costs for the cart-pole policy.
  std::vector<double> lqr_q{1.0, 1.0, 10.0, 1.0};
  double lqr_r = 0.1;
  IcemConfig planner{};
};

/// Resolves the defaults of g and Delta_max for a given environment bound.
inline AgentConfig resolve(AgentConfig cfg, double env_delta_max) {
  if (!(cfg.delta_max > 0.0)) cfg.delta_max = env_delta_max;
  if (!(cfg.g_order > 0.0)) cfg.g_order = cfg.delta_max * cfg.delta_max;
  return cfg;
}

inline double epsilon_schedule(std::int64_t episode, const AgentConfig& cfg) {
  require(episode >= 1, "episode index starts at 1");
  require_positive(cfg.g_order, "g_order");
  require_positive(cfg.delta_max, "delta_max");
  const double g = cfg.eps_mode == EpsMode::paper_alg2 ? cfg.g_order : cfg.g_order * cfg.g_order;
  return g / (static_cast<double>(episode) * cfg.delta_max * cfg.delta_max);
}

struct EpisodeRecord {
  int episode = 0;
  double eps_l = 0.0;
  ParamVector theta;
  double episode_return = 0.0;
  double episode_regret = 0.0;
  /// Cumulative over the run so far.
  std::int64_t grad_evals = 0;
  bool chained = false;
  bool solved = false;
  /// Set once the sampler diverged; the model falls back to the prior mean.
  bool fallback = false;
};

// ---------------------------------------------------------------------------
// Default Delta_max per environment (Delta_max <= 2 H B_R)

inline double default_delta_max(const BanditEnv& env) {
  double lo = env.arms().front().mean, hi = lo, var = 0.0;
  for (const auto& a : env.arms()) {
    lo = std::min(lo, a.mean);
    hi = std::max(hi, a.mean);
    var = std::max(var, a.variance);
  }
  return env.batch() * ((hi - lo) + 4.0 * std::sqrt(var));
}

inline double default_delta_max(const CartpoleParams& p) { return p.horizon; }

inline double default_delta_max(const ReacherParams& p) {
  return p.horizon * (2.0 * p.reach() + p.action_cost * 2.0);
}

// ---------------------------------------------------------------------------
// Langevin posterior draws shared by every LaPSRL agent

/// Draws one model per call for a single parameter block, chaining the
/// Langevin chain across calls when configured.
template <LangevinModel M>
class LangevinDraw {
 public:
  LangevinDraw(const M& model, const AgentConfig& cfg) : model_(&model), cfg_(&cfg) {}

  ParamVector draw(std::span<const typename M::Datum> data, double eps, Rng& rng,
                   std::uint64_t seed) {
    const auto n = static_cast<std::int64_t>(data.size());
    if (n == 0) {
      // The posterior is the prior; sample it exactly.
      last_ = model_->sample_prior(rng);
      last_eps_ = 0.0;
      return *last_;
    }
    const bool reuse = cfg_->chained && last_.has_value();
    ParamVector init = reuse ? *last_ : model_->sample_prior(rng);
    double kl0 = reuse && last_eps_ > 0.0 ? last_eps_ : static_cast<double>(n);
    if (cfg_->kl0_bound) kl0 = *cfg_->kl0_bound;

    LangevinSchedule sched = langevin_schedule(model_->lsi_alpha(n), model_->smooth_L(n), n,
                                               model_->dim(), eps, kl0);
    if (cfg_->step_cap && sched.steps_K > *cfg_->step_cap) sched.steps_K = *cfg_->step_cap;
    if (cfg_->force_steps) sched.steps_K = *cfg_->force_steps;

    SampleResult res = sarah_ld(*model_, data, sched, init, seed);
    grad_evals_ += res.stats.grad_evals;
    last_ = res.theta;
    last_eps_ = eps;
    return res.theta;
  }

  std::int64_t grad_evals() const { return grad_evals_; }

 private:
  const M* model_;
  const AgentConfig* cfg_;
  std::optional<ParamVector> last_;
  double last_eps_ = 0.0;
  std::int64_t grad_evals_ = 0;
};

namespace detail {

inline std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

inline constexpr std::uint64_t kEnvStream = 1;
inline constexpr std::uint64_t kAgentStream = 2;
inline std::uint64_t sampler_stream(int episode, std::size_t block) {
  return 1000 + static_cast<std::uint64_t>(episode) * 64 + block;
}
inline std::uint64_t planner_stream(int episode, int step) {
  return (std::uint64_t{1} << 40) + static_cast<std::uint64_t>(episode) * 100000 +
         static_cast<std::uint64_t>(step);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Bandit agents

using BanditPrior = std::variant<GaussianPosterior, MixturePrior>;

/// Thompson sampling from exact per-arm posteriors.
inline std::vector<EpisodeRecord> psrl_exact_bandit(const BanditEnv& env, const BanditPrior& prior,
                                                    int episodes, std::uint64_t seed) {
  require(episodes >= 0, "episode count must be nonnegative");
  Rng env_rng(derive_seed(seed, detail::kEnvStream));
  Rng agent_rng(derive_seed(seed, detail::kAgentStream));
  std::vector<std::vector<double>> data(env.num_arms());
  std::vector<EpisodeRecord> out;
  for (int l = 1; l <= episodes; ++l) {
    std::vector<double> draws(env.num_arms());
    for (std::size_t a = 0; a < env.num_arms(); ++a) {
      const double var = env.arms()[a].variance;
      if (const auto* g = std::get_if<GaussianPosterior>(&prior)) {
        const auto post = gaussian_mean_conjugate(*g, data[a], var);
        draws[a] = std::normal_distribution<double>(post.mean, std::sqrt(post.variance))(agent_rng);
      } else {
        draws[a] = mixture_mean_conjugate(std::get<MixturePrior>(prior), data[a], var).sample(agent_rng);
      }
    }
    const std::size_t arm = detail::argmax(draws);
    const auto rewards = env.pull(arm, env_rng);
    data[arm].insert(data[arm].end(), rewards.begin(), rewards.end());

    EpisodeRecord rec;
    rec.episode = l;
    rec.theta = Eigen::Map<const ParamVector>(draws.data(), static_cast<Eigen::Index>(draws.size()));
    rec.episode_return = std::accumulate(rewards.begin(), rewards.end(), 0.0);
    rec.episode_regret = env.pull_regret(arm);
    out.push_back(std::move(rec));
  }
  return out;
}

/// Always pulls `arm`; a reference agent with known regret.
inline std::vector<EpisodeRecord> scripted_bandit(const BanditEnv& env, std::size_t arm, int episodes,
                                                  std::uint64_t seed) {
  Rng env_rng(derive_seed(seed, detail::kEnvStream));
  std::vector<EpisodeRecord> out;
  for (int l = 1; l <= episodes; ++l) {
    const auto rewards = env.pull(arm, env_rng);
    EpisodeRecord rec;
    rec.episode = l;
    rec.episode_return = std::accumulate(rewards.begin(), rewards.end(), 0.0);
    rec.episode_regret = env.pull_regret(arm);
    out.push_back(std::move(rec));
  }
  return out;
}

/// LaPSRL for the bandit: one Langevin chain per arm, argmax of the draws.
template <LangevinModel M>
std::vector<EpisodeRecord> lapsrl_bandit(const BanditEnv& env, const M& model, AgentConfig cfg,
                                         int episodes, std::uint64_t seed) {
  static_assert(std::is_same_v<typename M::Datum, double>, "bandit models observe scalar rewards");
  require(episodes >= 0, "episode count must be nonnegative");
  cfg = resolve(std::move(cfg), default_delta_max(env));
  Rng env_rng(derive_seed(seed, detail::kEnvStream));
  Rng agent_rng(derive_seed(seed, detail::kAgentStream));
  std::vector<std::vector<double>> data(env.num_arms());
  std::vector<LangevinDraw<M>> chains(env.num_arms(), LangevinDraw<M>(model, cfg));

  std::vector<EpisodeRecord> out;
  bool fallback = false;
  for (int l = 1; l <= episodes; ++l) {
    const double eps = epsilon_schedule(l, cfg);
    std::vector<double> draws(env.num_arms());
    for (std::size_t a = 0; a < env.num_arms(); ++a) {
      if (fallback) {
        draws[a] = model.prior_mean()[0];
        continue;
      }
      try {
        draws[a] = chains[a].draw(data[a], eps, agent_rng,
                                  derive_seed(seed, detail::sampler_stream(l, a)))[0];
      } catch (const SamplerDivergence&) {
        fallback = true;
        draws[a] = model.prior_mean()[0];
      }
    }
    const std::size_t arm = detail::argmax(draws);
    const auto rewards = env.pull(arm, env_rng);
    data[arm].insert(data[arm].end(), rewards.begin(), rewards.end());

    EpisodeRecord rec;
    rec.episode = l;
    rec.eps_l = eps;
    rec.theta = Eigen::Map<const ParamVector>(draws.data(), static_cast<Eigen::Index>(draws.size()));
    rec.episode_return = std::accumulate(rewards.begin(), rewards.end(), 0.0);
    rec.episode_regret = env.pull_regret(arm);
    for (const auto& c : chains) rec.grad_evals += c.grad_evals();
    rec.chained = cfg.chained;
    rec.fallback = fallback;
    out.push_back(std::move(rec));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cart-pole agents: sample (A, B), act with the LQR gain of the sample.

namespace detail {

/// LQR gain for a sampled model; a zero gain when the Riccati iteration fails.
inline Matrix lqr_gain(const Matrix& A, const Matrix& B, const AgentConfig& cfg) {
  const Matrix Q = Eigen::Map<const Vector>(cfg.lqr_q.data(), static_cast<Eigen::Index>(cfg.lqr_q.size()))
                       .asDiagonal();
  const Matrix R = Matrix::Constant(1, 1, cfg.lqr_r);
  try {
    return solve_dare(A, B, Q, R, 1e-8, 5000).K;
  } catch (const RunError&) {
    return Matrix::Zero(B.cols(), A.rows());
  }
}

struct CartpoleEpisode {
  std::vector<Transition> transitions;
  double ret = 0.0;
  bool solved = false;
};

inline CartpoleEpisode play_cartpole(CartpoleEnv& env, const Matrix& gain, Rng& env_rng) {
  CartpoleEpisode ep;
  Vector s = env.reset(env_rng);
  while (!env.done()) {
    const double a = std::clamp(-(gain * s)(0), -1.0, 1.0);
    const StepResult r = env.step(a);
    Vector z(5);
    z << s, a;
    ep.transitions.push_back({std::move(z), r.state});
    ep.ret += r.reward;
    s = r.state;
  }
  ep.solved = env.solved();
  return ep;
}

}  // namespace detail

struct BlrConfig {
  double prior_var = 1.0;
  double noise_var = 0.25;
};

/// PSRL with the exact Bayesian-linear-regression posterior over (A, B).
inline std::vector<EpisodeRecord> psrl_exact_cartpole(const CartpoleParams& params,
                                                      const BlrConfig& blr, AgentConfig cfg,
                                                      int episodes, std::uint64_t seed) {
  require(episodes >= 0, "episode count must be nonnegative");
  cfg = resolve(std::move(cfg), default_delta_max(params));
  CartpoleEnv env(params);
  Rng env_rng(derive_seed(seed, detail::kEnvStream));
  Rng agent_rng(derive_seed(seed, detail::kAgentStream));
  Matrix ztz = Matrix::Zero(5, 5), zty = Matrix::Zero(5, 4);

  std::vector<EpisodeRecord> out;
  for (int l = 1; l <= episodes; ++l) {
    // Sufficient statistics stand in for the full design matrix.
    BlrPosterior post;
    post.precision = Matrix::Identity(5, 5) / blr.prior_var + ztz / blr.noise_var;
    post.chol.compute(post.precision);
    post.mean = post.chol.solve(zty / blr.noise_var).transpose();
    const Matrix w = post.sample(agent_rng);
    const Matrix gain = detail::lqr_gain(w.leftCols(4), w.rightCols(1), cfg);
    const auto ep = detail::play_cartpole(env, gain, env_rng);
    for (const auto& t : ep.transitions) {
      ztz.noalias() += t.z * t.z.transpose();
      zty.noalias() += t.z * t.y.transpose();
    }
    EpisodeRecord rec;
    rec.episode = l;
    rec.theta = LinearDynamicsModel::flatten(w.leftCols(4), w.rightCols(1));
    rec.episode_return = ep.ret;
    rec.episode_regret = params.horizon - ep.ret;
    rec.solved = ep.solved;
    out.push_back(std::move(rec));
  }
  return out;
}

/// LaPSRL on cart-pole with a linear-Gaussian dynamics model.
inline std::vector<EpisodeRecord> lapsrl_cartpole(const CartpoleParams& params,
                                                  const LinearDynamicsModel& model, AgentConfig cfg,
                                                  int episodes, std::uint64_t seed) {
  require(episodes >= 0, "episode count must be nonnegative");
  require(model.state_dim() == 4 && model.action_dim() == 1, "cart-pole model must be 4x5");
  cfg = resolve(std::move(cfg), default_delta_max(params));
  CartpoleEnv env(params);
  Rng env_rng(derive_seed(seed, detail::kEnvStream));
  Rng agent_rng(derive_seed(seed, detail::kAgentStream));
  LangevinDraw<LinearDynamicsModel> chain(model, cfg);
  std::vector<Transition> data;

  std::vector<EpisodeRecord> out;
  bool fallback = false;
  for (int l = 1; l <= episodes; ++l) {
    const double eps = epsilon_schedule(l, cfg);
    ParamVector theta = model.prior_mean();
    if (!fallback) {
      try {
        theta = chain.draw(data, eps, agent_rng, derive_seed(seed, detail::sampler_stream(l, 0)));
      } catch (const SamplerDivergence&) {
        fallback = true;
        theta = model.prior_mean();
      }
    }
    const Matrix gain = detail::lqr_gain(model.A(theta), model.B(theta), cfg);
    auto ep = detail::play_cartpole(env, gain, env_rng);
    data.insert(data.end(), std::make_move_iterator(ep.transitions.begin()),
                std::make_move_iterator(ep.transitions.end()));

    EpisodeRecord rec;
    rec.episode = l;
    rec.eps_l = eps;
    rec.theta = std::move(theta);
    rec.episode_return = ep.ret;
    rec.episode_regret = params.horizon - ep.ret;
    rec.grad_evals = chain.grad_evals();
    rec.chained = cfg.chained;
    rec.solved = ep.solved;
    rec.fallback = fallback;
    out.push_back(std::move(rec));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reacher agent: MLP dynamics, iCEM planning against the known reward.

inline std::vector<EpisodeRecord> lapsrl_reacher(const ReacherParams& params,
                                                 const MlpDynamicsModel& model, AgentConfig cfg,
                                                 int episodes, std::uint64_t seed) {
  require(episodes >= 0, "episode count must be nonnegative");
  require(model.state_dim() == 4 && model.action_dim() == 2, "reacher model must map (4+2) -> 4");
  cfg = resolve(std::move(cfg), default_delta_max(params));
  cfg.planner.action_dim = 2;
  ReacherEnv env(params);
  Rng env_rng(derive_seed(seed, detail::kEnvStream));
  Rng agent_rng(derive_seed(seed, detail::kAgentStream));
  LangevinDraw<MlpDynamicsModel> chain(model, cfg);
  std::vector<Transition> data;

  std::vector<EpisodeRecord> out;
  bool fallback = false;
  for (int l = 1; l <= episodes; ++l) {
    const double eps = epsilon_schedule(l, cfg);
    ParamVector theta = model.prior_mean();
    if (!fallback) {
      try {
        theta = chain.draw(data, eps, agent_rng, derive_seed(seed, detail::sampler_stream(l, 0)));
      } catch (const SamplerDivergence&) {
        fallback = true;
        theta = model.prior_mean();
      }
    }

    env.reset(env_rng);
    const Eigen::Vector2d target = env.target();
    auto dyn = [&](const Vector& s, const Vector& a) { return model.predict(theta, s, a); };
    auto rew = [&](const Vector&, const Vector& a, const Vector& next) {
      return reacher_reward(params, next, a, target);
    };
    double ret = 0.0;
    while (!env.done()) {
      const Vector s = env.state();
      const auto plan = icem_plan(dyn, rew, s, cfg.planner,
                                  derive_seed(seed, detail::planner_stream(l, env.steps())));
      const Vector a = plan.actions.row(0).transpose().cwiseMax(-1.0).cwiseMin(1.0);
      const StepResult r = env.step(a);
      Vector z(6);
      z << s, a;
      data.push_back({std::move(z), r.state - s});
      ret += r.reward;
    }

    EpisodeRecord rec;
    rec.episode = l;
    rec.eps_l = eps;
    rec.theta = std::move(theta);
    rec.episode_return = ret;
    // Measured against the zero-cost ideal of sitting on the target.
    rec.episode_regret = -ret;
    rec.grad_evals = chain.grad_evals();
    rec.chained = cfg.chained;
    rec.fallback = fallback;
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace lapsrl
