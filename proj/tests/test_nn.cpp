#include "lapsrl/nn.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

using namespace lapsrl;
using namespace lapsrl::nn;

namespace {

// Naive forward pass reading the flat layout (W row-major, then b, per layer)
// with explicit loops.
std::vector<double> naive_forward(const std::vector<int>& dims, const Vector& params, const Vector& input) {
  std::vector<double> act(input.data(), input.data() + input.size());
  Eigen::Index off = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int in = dims[l], out = dims[l + 1];
    std::vector<double> next(out, 0.0);
    for (int o = 0; o < out; ++o) {
      double z = 0.0;
      for (int i = 0; i < in; ++i) z += params[off + o * in + i] * act[i];
      next[o] = z;
    }
    off += static_cast<Eigen::Index>(in) * out;
    for (int o = 0; o < out; ++o) next[o] += params[off + o];
    off += out;
    if (l + 2 < dims.size())
      for (double& v : next) v = std::tanh(v);
    act = std::move(next);
  }
  return act;
}

Vector random_vec(Rng& rng, Eigen::Index n, double scale = 1.0) { return scale * standard_normal(rng, n); }

}  // namespace

TEST(Mlp, ParameterCount) {
  const MlpShape s({4, 128, 128, 4});
  EXPECT_EQ(s.num_params(), 5 * 128 + 129 * 128 + 129 * 4);
  EXPECT_THROW(MlpShape({4}), ValidationError);
}

TEST(Mlp, ZeroNetworkOutputsZero) {
  const auto net = Mlp::zeros({3, 8, 8, 2});
  Rng rng(1);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(net.forward(random_vec(rng, 3, 10.0)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Mlp, UnitScalarChainAtOrigin) {
  const Mlp net({1, 1, 1, 1}, ParamVector::Map(std::vector<double>{1, 0, 1, 0, 1, 0}.data(), 6));
  EXPECT_EQ(net.forward(Vector::Zero(1))[0], 0.0);
}

TEST(Mlp, ForwardMatchesNaiveImplementation) {
  const std::vector<int> dims{4, 128, 128, 4};
  Rng rng(7);
  const MlpShape shape(dims);
  for (int t = 0; t < 5; ++t) {
    const Vector p = random_vec(rng, shape.num_params(), 0.3);
    const Vector x = random_vec(rng, 4);
    const auto want = naive_forward(dims, p, x);
    const Vector got = forward(shape, p, x);
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(Mlp, ScalarNetworkHandDerivedGradient) {
  // y = w3 tanh(w2 tanh(w1 x + b1) + b2) + b3
  const double w1 = 0.7, b1 = -0.2, w2 = -1.3, b2 = 0.4, w3 = 0.9, b3 = 0.1, x = 0.55;
  const Mlp net({1, 1, 1, 1}, ParamVector::Map(std::vector<double>{w1, b1, w2, b2, w3, b3}.data(), 6));
  const double h1 = std::tanh(w1 * x + b1), h2 = std::tanh(w2 * h1 + b2);
  EXPECT_NEAR(net.forward(Vector::Constant(1, x))[0], w3 * h2 + b3, 1e-15);
  const double d2 = w3 * (1 - h2 * h2), d1 = d2 * w2 * (1 - h1 * h1);
  const std::vector<double> want{d1 * x, d1, d2 * h1, d2, h2, 1.0};
  const ParamVector g = net.grad_params(Vector::Constant(1, x), Vector::Ones(1));
  for (int i = 0; i < 6; ++i) EXPECT_NEAR(g[i], want[i], 1e-14) << i;
}

TEST(Mlp, GradientMatchesFiniteDifferences) {
  Rng rng(21);
  for (int t = 0; t < 50; ++t) {
    const std::vector<int> dims{3 + t % 3, 6 + t % 5, 5, 2 + t % 2};
    const MlpShape shape(dims);
    Mlp net(dims, random_vec(rng, shape.num_params(), 0.5));
    const Vector x = random_vec(rng, dims.front());
    const Vector c = random_vec(rng, dims.back());
    const ParamVector g = net.grad_params(x, c);
    for (Eigen::Index j = 0; j < shape.num_params(); ++j) {
      const double h = 1e-6 * (1.0 + std::abs(net.params()[j]));
      Mlp up = net, dn = net;
      up.params()[j] += h;
      dn.params()[j] -= h;
      const double fd = (c.dot(up.forward(x)) - c.dot(dn.forward(x))) / (2 * h);
      const double denom = std::max({std::abs(fd), std::abs(g[j]), 1e-2});
      EXPECT_LT(std::abs(fd - g[j]) / denom, 1e-4) << "net " << t << " param " << j;
    }
  }
}

TEST(Mlp, GradientIsLinearInCotangent) {
  Rng rng(5);
  const std::vector<int> dims{4, 16, 16, 3};
  const MlpShape shape(dims);
  const Mlp net(dims, random_vec(rng, shape.num_params(), 0.4));
  const Vector x = random_vec(rng, 4);
  EXPECT_EQ(net.grad_params(x, Vector::Zero(3)).cwiseAbs().maxCoeff(), 0.0);
  for (int t = 0; t < 20; ++t) {
    const Vector c1 = random_vec(rng, 3), c2 = random_vec(rng, 3);
    const double a = 1.7, b = -0.4;
    const ParamVector lhs = net.grad_params(x, a * c1 + b * c2);
    const ParamVector rhs = a * net.grad_params(x, c1) + b * net.grad_params(x, c2);
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Mlp, AccumulatesIntoBuffer) {
  Rng rng(6);
  const MlpShape shape({2, 4, 1});
  const Vector p = random_vec(rng, shape.num_params());
  Tape tape;
  forward(shape, p, random_vec(rng, 2), tape);
  ParamVector g = ParamVector::Ones(shape.num_params());
  ParamVector g0 = ParamVector::Zero(shape.num_params());
  add_vjp(shape, p, tape, Vector::Ones(1), 2.0, g);
  add_vjp(shape, p, tape, Vector::Ones(1), 1.0, g0);
  EXPECT_LT((g - (ParamVector::Ones(shape.num_params()) + 2.0 * g0)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Mlp, DimensionMismatchRejected) {
  const auto net = Mlp::zeros({3, 4, 2});
  EXPECT_THROW(net.forward(Vector::Zero(2)), ValidationError);
  EXPECT_THROW(net.grad_params(Vector::Zero(3), Vector::Zero(3)), ValidationError);
  EXPECT_THROW(Mlp({3, 4, 2}, ParamVector::Zero(5)), ValidationError);
}
