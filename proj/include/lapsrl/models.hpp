#pragma once

// Bayesian models consumed by the Langevin sampler, conjugate posterior
// oracles, and log-Sobolev constant calculators.

#include "lapsrl/core.hpp"
#include "lapsrl/nn.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace lapsrl {

struct GaussianPosterior {
  double mean = 0.0;
  double variance = 1.0;
};

inline void validate(const GaussianPosterior& g) {
  require(std::isfinite(g.mean), "Gaussian mean must be finite");
  require_positive(g.variance, "Gaussian variance");
}

struct MixtureComponent {
  double weight = 1.0;
  double mean = 0.0;
  double variance = 1.0;
};

/// Univariate Gaussian mixture.
struct MixturePrior {
  std::vector<MixtureComponent> components;

  void validate() const {
    require(!components.empty(), "mixture needs at least one component");
    double total = 0.0;
    for (const auto& c : components) {
      require(c.weight > 0.0, "mixture weights must be positive");
      require_positive(c.variance, "mixture component variance");
      total += c.weight;
    }
    require(std::abs(total - 1.0) <= 1e-12, "mixture weights must sum to 1");
  }

  double log_density(double x) const {
    double hi = -std::numeric_limits<double>::infinity();
    std::vector<double> terms;
    terms.reserve(components.size());
    for (const auto& c : components) {
      const double d = x - c.mean;
      terms.push_back(std::log(c.weight) - 0.5 * std::log(2.0 * std::numbers::pi * c.variance) -
                      0.5 * d * d / c.variance);
      hi = std::max(hi, terms.back());
    }
    double s = 0.0;
    for (double t : terms) s += std::exp(t - hi);
    return hi + std::log(s);
  }

  /// d/dx log density.
  double grad_log_density(double x) const {
    // Responsibility-weighted component scores, computed stably.
    double hi = -std::numeric_limits<double>::infinity();
    std::vector<double> logw;
    logw.reserve(components.size());
    for (const auto& c : components) {
      const double d = x - c.mean;
      logw.push_back(std::log(c.weight) - 0.5 * std::log(c.variance) - 0.5 * d * d / c.variance);
      hi = std::max(hi, logw.back());
    }
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < components.size(); ++j) {
      const double w = std::exp(logw[j] - hi);
      num += w * (components[j].mean - x) / components[j].variance;
      den += w;
    }
    return num / den;
  }

  double mean() const {
    double m = 0.0;
    for (const auto& c : components) m += c.weight * c.mean;
    return m;
  }

  double sample(Rng& rng) const {
    std::vector<double> w;
    for (const auto& c : components) w.push_back(c.weight);
    std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
    const auto& c = components[pick(rng)];
    std::normal_distribution<double> normal(c.mean, std::sqrt(c.variance));
    return normal(rng);
  }
};

/// Exact posterior of a Gaussian mean with known observation variance.
inline GaussianPosterior gaussian_mean_conjugate(const GaussianPosterior& prior,
                                                 std::span<const double> data, double sigma2) {
  validate(prior);
  require_positive(sigma2, "sigma2");
  if (data.empty()) return prior;
  const double sum = std::accumulate(data.begin(), data.end(), 0.0);
  const double precision = 1.0 / prior.variance + static_cast<double>(data.size()) / sigma2;
  return {(prior.mean / prior.variance + sum / sigma2) / precision, 1.0 / precision};
}

/// Exact posterior of a Gaussian mean under a Gaussian-mixture prior: each
/// component updates conjugately and is reweighted by its marginal likelihood.
inline MixturePrior mixture_mean_conjugate(const MixturePrior& prior, std::span<const double> data,
                                           double sigma2) {
  prior.validate();
  require_positive(sigma2, "sigma2");
  if (data.empty()) return prior;
  MixturePrior post;
  std::vector<double> logw;
  for (const auto& c : prior.components) {
    const auto g = gaussian_mean_conjugate({c.mean, c.variance}, data, sigma2);
    // Terms common to every component are dropped.
    logw.push_back(std::log(c.weight) + 0.5 * std::log(g.variance / c.variance) +
                   0.5 * g.mean * g.mean / g.variance - 0.5 * c.mean * c.mean / c.variance);
    post.components.push_back({0.0, g.mean, g.variance});
  }
  const double hi = *std::max_element(logw.begin(), logw.end());
  double total = 0.0;
  for (std::size_t j = 0; j < logw.size(); ++j) total += (post.components[j].weight = std::exp(logw[j] - hi));
  for (auto& c : post.components) c.weight /= total;
  return post;
}

/// LSI constant of the Gaussian-mean posterior by Bakry-Emery: the negative
/// log-posterior Hessian is the constant 1/sigma0^2 + n/sigma^2.
inline double lsi_gaussian_mean(double sigma0_sq, double sigma_sq, std::int64_t n) {
  require_positive(sigma0_sq, "sigma0_sq");
  require_positive(sigma_sq, "sigma_sq");
  require(n >= 0, "n must be nonnegative");
  return 1.0 / sigma0_sq + static_cast<double>(n) / sigma_sq;
}

/// Lower bound on the LSI constant of a k-component mixture whose
/// components have LSI constants >= min_alpha and overlap delta.
inline double lsi_mixture_lower_bound(std::int64_t k, double min_p, double delta,
                                      double min_alpha) {
  require(k >= 1, "k must be >= 1");
  require(min_p > 0.0 && min_p <= 1.0, "min_p must lie in (0, 1]");
  require(delta > 0.0 && delta <= 1.0, "delta must lie in (0, 1]");
  require_positive(min_alpha, "min_alpha");
  return delta * min_p * min_alpha /
         (4.0 * static_cast<double>(k) * (1.0 - std::log(min_p)));
}

// ---------------------------------------------------------------------------
// Concrete models

/// Mean of one Gaussian bandit arm, Gaussian prior, known reward variance.
class GaussianArmModel {
 public:
  using Datum = double;

  GaussianArmModel(GaussianPosterior prior, double noise_var, double alpha_scale = 0.0)
      : prior_(prior), noise_var_(noise_var), alpha_scale_(alpha_scale) {
    validate(prior_);
    require_positive(noise_var_, "noise variance");
    require(alpha_scale_ >= 0.0, "alpha_scale must be nonnegative");
  }

  Eigen::Index dim() const { return 1; }
  const GaussianPosterior& prior() const { return prior_; }
  double noise_var() const { return noise_var_; }

  double log_prior(const ParamVector& th) const {
    const double d = th[0] - prior_.mean;
    return -0.5 * std::log(2.0 * std::numbers::pi * prior_.variance) - 0.5 * d * d / prior_.variance;
  }
  void add_grad_log_prior(const ParamVector& th, double scale, Vector& out) const {
    out[0] += scale * (prior_.mean - th[0]) / prior_.variance;
  }
  double loglik(Datum x, const ParamVector& th) const {
    const double d = x - th[0];
    return -0.5 * std::log(2.0 * std::numbers::pi * noise_var_) - 0.5 * d * d / noise_var_;
  }
  void add_grad_loglik(Datum x, const ParamVector& th, double scale, Vector& out) const {
    out[0] += scale * (x - th[0]) / noise_var_;
  }

  /// Bakry-Emery constant unless an explicit alpha = scale * n is configured.
  double lsi_alpha(std::int64_t n) const {
    if (alpha_scale_ > 0.0) return alpha_scale_ * static_cast<double>(std::max<std::int64_t>(n, 1));
    return lsi_gaussian_mean(prior_.variance, noise_var_, n);
  }
  double smooth_L(std::int64_t n) const {
    return lsi_alpha(n) / static_cast<double>(std::max<std::int64_t>(n, 1));
  }

  ParamVector sample_prior(Rng& rng) const {
    std::normal_distribution<double> normal(prior_.mean, std::sqrt(prior_.variance));
    return ParamVector::Constant(1, normal(rng));
  }
  ParamVector prior_mean() const { return ParamVector::Constant(1, prior_.mean); }

 private:
  GaussianPosterior prior_;
  double noise_var_;
  double alpha_scale_;
};

/// Mean of one Gaussian bandit arm under a Gaussian-mixture prior.
class MixtureArmModel {
 public:
  using Datum = double;

  MixtureArmModel(MixturePrior prior, double noise_var, double alpha_scale)
      : prior_(std::move(prior)), noise_var_(noise_var), alpha_scale_(alpha_scale) {
    prior_.validate();
    require_positive(noise_var_, "noise variance");
    require_positive(alpha_scale_, "alpha_scale");
  }

  Eigen::Index dim() const { return 1; }
  const MixturePrior& prior() const { return prior_; }
  double noise_var() const { return noise_var_; }

  double log_prior(const ParamVector& th) const { return prior_.log_density(th[0]); }
  void add_grad_log_prior(const ParamVector& th, double scale, Vector& out) const {
    out[0] += scale * prior_.grad_log_density(th[0]);
  }
  double loglik(Datum x, const ParamVector& th) const {
    const double d = x - th[0];
    return -0.5 * std::log(2.0 * std::numbers::pi * noise_var_) - 0.5 * d * d / noise_var_;
  }
  void add_grad_loglik(Datum x, const ParamVector& th, double scale, Vector& out) const {
    out[0] += scale * (x - th[0]) / noise_var_;
  }

  double lsi_alpha(std::int64_t n) const {
    return alpha_scale_ * static_cast<double>(std::max<std::int64_t>(n, 1));
  }
  double smooth_L(std::int64_t n) const {
    return lsi_alpha(n) / static_cast<double>(std::max<std::int64_t>(n, 1));
  }

  ParamVector sample_prior(Rng& rng) const { return ParamVector::Constant(1, prior_.sample(rng)); }
  ParamVector prior_mean() const { return ParamVector::Constant(1, prior_.mean()); }

 private:
  MixturePrior prior_;
  double noise_var_;
  double alpha_scale_;
};

/// One observed transition: regressor z = (s, a) and target y.
struct Transition {
  Vector z;
  Vector y;
};

/// Linear-Gaussian dynamics s' = A s + B a + noise with an i.i.d. Gaussian
/// prior on the entries of W = [A | B]; theta is W flattened row-major.
class LinearDynamicsModel {
 public:
  using Datum = Transition;

  LinearDynamicsModel(int state_dim, int action_dim, double prior_var, double noise_var,
                      double alpha_scale)
      : state_dim_(state_dim), action_dim_(action_dim), prior_var_(prior_var),
        noise_var_(noise_var), alpha_scale_(alpha_scale) {
    require(state_dim >= 1 && action_dim >= 0, "invalid dynamics dimensions");
    require_positive(prior_var_, "prior variance");
    require_positive(noise_var_, "noise variance");
    require_positive(alpha_scale_, "alpha_scale");
  }

  Eigen::Index dim() const { return static_cast<Eigen::Index>(state_dim_) * cols(); }
  int state_dim() const { return state_dim_; }
  int action_dim() const { return action_dim_; }
  int cols() const { return state_dim_ + action_dim_; }
  double prior_var() const { return prior_var_; }
  double noise_var() const { return noise_var_; }

  using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMajorMatrix> weights(const ParamVector& th) const {
    return Eigen::Map<const RowMajorMatrix>(th.data(), state_dim_, cols());
  }
  static ParamVector flatten(const Matrix& A, const Matrix& B) {
    RowMajorMatrix w(A.rows(), A.cols() + B.cols());
    w << A, B;
    return Eigen::Map<const ParamVector>(w.data(), w.size());
  }
  Matrix A(const ParamVector& th) const { return weights(th).leftCols(state_dim_); }
  Matrix B(const ParamVector& th) const { return weights(th).rightCols(action_dim_); }

  double log_prior(const ParamVector& th) const {
    return -0.5 * static_cast<double>(th.size()) * std::log(2.0 * std::numbers::pi * prior_var_) -
           0.5 * th.squaredNorm() / prior_var_;
  }
  void add_grad_log_prior(const ParamVector& th, double scale, Vector& out) const {
    out.noalias() -= (scale / prior_var_) * th;
  }
  double loglik(const Datum& x, const ParamVector& th) const {
    const Vector r = x.y - weights(th) * x.z;
    return -0.5 * static_cast<double>(state_dim_) * std::log(2.0 * std::numbers::pi * noise_var_) -
           0.5 * r.squaredNorm() / noise_var_;
  }
  void add_grad_loglik(const Datum& x, const ParamVector& th, double scale, Vector& out) const {
    const auto w = weights(th);
    const double c = scale / noise_var_;
    const int p = cols();
    for (int i = 0; i < state_dim_; ++i) {
      const double r = c * (x.y[i] - w.row(i).dot(x.z));
      out.segment(static_cast<Eigen::Index>(i) * p, p).noalias() += r * x.z;
    }
  }

  double lsi_alpha(std::int64_t n) const {
    return alpha_scale_ * static_cast<double>(std::max<std::int64_t>(n, 1));
  }
  double smooth_L(std::int64_t n) const {
    return lsi_alpha(n) / static_cast<double>(std::max<std::int64_t>(n, 1));
  }

  ParamVector sample_prior(Rng& rng) const {
    return std::sqrt(prior_var_) * standard_normal(rng, dim());
  }
  ParamVector prior_mean() const { return ParamVector::Zero(dim()); }

 private:
  int state_dim_;
  int action_dim_;
  double prior_var_;
  double noise_var_;
  double alpha_scale_;
};

/// MLP dynamics predicting the state delta s' - s from (s, a), with an
/// i.i.d. Gaussian prior on all weights and biases.
class MlpDynamicsModel {
 public:
  using Datum = Transition;

  MlpDynamicsModel(int state_dim, int action_dim, std::vector<int> hidden, double prior_var,
                   double noise_var, double alpha_scale)
      : shape_(layer_dims(state_dim, action_dim, hidden)), state_dim_(state_dim),
        action_dim_(action_dim), prior_var_(prior_var), noise_var_(noise_var),
        alpha_scale_(alpha_scale) {
    require_positive(prior_var_, "prior variance");
    require_positive(noise_var_, "noise variance");
    require_positive(alpha_scale_, "alpha_scale");
  }

  Eigen::Index dim() const { return shape_.num_params(); }
  const nn::MlpShape& shape() const { return shape_; }
  int state_dim() const { return state_dim_; }
  int action_dim() const { return action_dim_; }
  double noise_var() const { return noise_var_; }

  /// Predicted next state.
  Vector predict(const ParamVector& th, const Vector& state, const Vector& action) const {
    Vector z(state_dim_ + action_dim_);
    z << state, action;
    return state + nn::forward(shape_, th, z);
  }

  double log_prior(const ParamVector& th) const {
    return -0.5 * static_cast<double>(th.size()) * std::log(2.0 * std::numbers::pi * prior_var_) -
           0.5 * th.squaredNorm() / prior_var_;
  }
  void add_grad_log_prior(const ParamVector& th, double scale, Vector& out) const {
    out.noalias() -= (scale / prior_var_) * th;
  }
  double loglik(const Datum& x, const ParamVector& th) const {
    const Vector r = x.y - nn::forward(shape_, th, x.z);
    return -0.5 * static_cast<double>(state_dim_) * std::log(2.0 * std::numbers::pi * noise_var_) -
           0.5 * r.squaredNorm() / noise_var_;
  }
  void add_grad_loglik(const Datum& x, const ParamVector& th, double scale, Vector& out) const {
    thread_local nn::Tape tape;
    const Vector pred = nn::forward(shape_, th, x.z, tape);
    nn::add_vjp(shape_, th, tape, (x.y - pred) / noise_var_, scale, out);
  }

  double lsi_alpha(std::int64_t n) const {
    return alpha_scale_ * static_cast<double>(std::max<std::int64_t>(n, 1));
  }
  double smooth_L(std::int64_t n) const {
    return lsi_alpha(n) / static_cast<double>(std::max<std::int64_t>(n, 1));
  }

  ParamVector sample_prior(Rng& rng) const {
    return std::sqrt(prior_var_) * standard_normal(rng, dim());
  }
  ParamVector prior_mean() const { return ParamVector::Zero(dim()); }

 private:
  static std::vector<int> layer_dims(int state_dim, int action_dim, const std::vector<int>& hidden) {
    require(state_dim >= 1 && action_dim >= 1, "invalid dynamics dimensions");
    std::vector<int> dims{state_dim + action_dim};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(state_dim);
    return dims;
  }

  nn::MlpShape shape_;
  int state_dim_;
  int action_dim_;
  double prior_var_;
  double noise_var_;
  double alpha_scale_;
};

// ---------------------------------------------------------------------------
// Bayesian linear regression with isotropic prior; every output row of W
// shares the same design, so one precision matrix serves all rows.

struct BlrPosterior {
  Matrix mean;           // rows = outputs, cols = regressors
  Matrix precision;      // regressors x regressors
  Eigen::LLT<Matrix> chol;

  Matrix covariance() const { return chol.solve(Matrix::Identity(precision.rows(), precision.cols())); }

  /// Draws W ~ N(mean, cov) row by row.
  Matrix sample(Rng& rng) const {
    Matrix w = mean;
    const Matrix upper = chol.matrixU();
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      const Vector xi = standard_normal(rng, w.cols());
      w.row(i) += upper.triangularView<Eigen::Upper>().solve(xi).transpose();
    }
    return w;
  }
};

/// Z: N x p regressors, Y: N x q targets.
inline BlrPosterior blr_posterior(const Matrix& Z, const Matrix& Y, double prior_var,
                                  double noise_var) {
  require(Z.rows() == Y.rows(), "regressor and target row counts differ");
  require_positive(prior_var, "prior variance");
  require_positive(noise_var, "noise variance");
  BlrPosterior post;
  post.precision = Matrix::Identity(Z.cols(), Z.cols()) / prior_var;
  post.precision.noalias() += Z.transpose() * Z / noise_var;
  post.chol.compute(post.precision);
  require(post.chol.info() == Eigen::Success, "posterior precision is not positive definite");
  const Matrix rhs = Z.transpose() * Y / noise_var;
  post.mean = post.chol.solve(rhs).transpose();
  return post;
}

// ---------------------------------------------------------------------------
// Model factory

enum class ModelKind { gaussian_bandit_arm, mixture_prior_arm, linear_dynamics, mlp_dynamics };

inline ModelKind parse_model_kind(std::string_view s) {
  if (s == "gaussian_bandit_arm") return ModelKind::gaussian_bandit_arm;
  if (s == "mixture_prior_arm") return ModelKind::mixture_prior_arm;
  if (s == "linear_dynamics") return ModelKind::linear_dynamics;
  if (s == "mlp_dynamics") return ModelKind::mlp_dynamics;
  throw ValidationError("unknown model kind: " + std::string(s));
}

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::gaussian_bandit_arm: return "gaussian_bandit_arm";
    case ModelKind::mixture_prior_arm: return "mixture_prior_arm";
    case ModelKind::linear_dynamics: return "linear_dynamics";
    case ModelKind::mlp_dynamics: return "mlp_dynamics";
  }
  return "?";
}

struct ModelConfig {
  double prior_mean = 0.0;
  /// Defaults: 1 for arms and linear dynamics, 0.1 for the MLP.
  std::optional<double> prior_var;
  double noise_var = 0.25;
  MixturePrior mixture{{{0.5, 0.0, 0.25}, {0.5, 1.0, 1.0}}};
  /// alpha(n) = alpha_scale * n. Zero selects the model default: Bakry-Emery
  /// for the Gaussian arm, 1/noise_var for the mixture arm.
  double alpha_scale = 0.0;
  int state_dim = 4;
  int action_dim = 1;
  std::vector<int> hidden{128, 128};
};

using AnyModel = std::variant<GaussianArmModel, MixtureArmModel, LinearDynamicsModel, MlpDynamicsModel>;

inline AnyModel make_model(ModelKind kind, const ModelConfig& cfg) {
  switch (kind) {
    case ModelKind::gaussian_bandit_arm:
      return GaussianArmModel({cfg.prior_mean, cfg.prior_var.value_or(1.0)}, cfg.noise_var,
                              cfg.alpha_scale);
    case ModelKind::mixture_prior_arm:
      return MixtureArmModel(cfg.mixture, cfg.noise_var,
                             cfg.alpha_scale > 0.0 ? cfg.alpha_scale : 1.0 / cfg.noise_var);
    case ModelKind::linear_dynamics:
      require(cfg.alpha_scale > 0.0, "linear_dynamics needs alpha_scale > 0");
      return LinearDynamicsModel(cfg.state_dim, cfg.action_dim, cfg.prior_var.value_or(1.0),
                                 cfg.noise_var, cfg.alpha_scale);
    case ModelKind::mlp_dynamics:
      require(cfg.alpha_scale > 0.0, "mlp_dynamics needs alpha_scale > 0");
      return MlpDynamicsModel(cfg.state_dim, cfg.action_dim, cfg.hidden,
                              cfg.prior_var.value_or(0.1), cfg.noise_var, cfg.alpha_scale);
  }
  throw ValidationError("unknown model kind");
}

inline AnyModel make_model(std::string_view kind, const ModelConfig& cfg) {
  return make_model(parse_model_kind(kind), cfg);
}

}  // namespace lapsrl
