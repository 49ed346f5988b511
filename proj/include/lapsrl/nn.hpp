#pragma once

// Dense tanh MLP with exact reverse-mode parameter gradients. Parameters are
// stored flat, layer by layer: W1 (row-major, out x in), b1, W2, b2, ...

#include "lapsrl/core.hpp"

#include <cstddef>
#include <utility>
#include <vector>

namespace lapsrl::nn {

class MlpShape {
 public:
  MlpShape() = default;

  explicit MlpShape(std::vector<int> layer_dims) : dims_(std::move(layer_dims)) {
    require(dims_.size() >= 2, "an MLP needs at least input and output layers");
    for (int d : dims_) require(d >= 1, "MLP layer widths must be >= 1");
    Eigen::Index offset = 0;
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      weight_offset_.push_back(offset);
      offset += static_cast<Eigen::Index>(dims_[l]) * dims_[l + 1];
      bias_offset_.push_back(offset);
      offset += dims_[l + 1];
    }
    num_params_ = offset;
  }

  const std::vector<int>& dims() const { return dims_; }
  std::size_t num_layers() const { return dims_.size() - 1; }
  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  Eigen::Index num_params() const { return num_params_; }

  using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using ConstWeights = Eigen::Map<const RowMajorMatrix>;
  using Weights = Eigen::Map<RowMajorMatrix>;

  ConstWeights weights(const Eigen::Ref<const Vector>& params, std::size_t layer) const {
    return ConstWeights(params.data() + weight_offset_[layer], dims_[layer + 1], dims_[layer]);
  }
  Weights weights(Eigen::Ref<Vector> params, std::size_t layer) const {
    return Weights(params.data() + weight_offset_[layer], dims_[layer + 1], dims_[layer]);
  }
  Eigen::Map<const Vector> bias(const Eigen::Ref<const Vector>& params, std::size_t layer) const {
    return Eigen::Map<const Vector>(params.data() + bias_offset_[layer], dims_[layer + 1]);
  }
  Eigen::Map<Vector> bias(Eigen::Ref<Vector> params, std::size_t layer) const {
    return Eigen::Map<Vector>(params.data() + bias_offset_[layer], dims_[layer + 1]);
  }

 private:
  std::vector<int> dims_;
  std::vector<Eigen::Index> weight_offset_;
  std::vector<Eigen::Index> bias_offset_;
  Eigen::Index num_params_ = 0;
};

/// Activations recorded by a forward pass; `act[0]` is the input.
struct Tape {
  std::vector<Vector> act;
};

inline Vector forward(const MlpShape& shape, const Eigen::Ref<const Vector>& params,
                      const Eigen::Ref<const Vector>& input, Tape& tape) {
  require(params.size() == shape.num_params(), "MLP parameter length mismatch");
  require(input.size() == shape.input_dim(), "MLP input dimension mismatch");
  const std::size_t layers = shape.num_layers();
  tape.act.resize(layers + 1);
  tape.act[0] = input;
  for (std::size_t l = 0; l < layers; ++l) {
    Vector z = shape.weights(params, l) * tape.act[l] + shape.bias(params, l);
    if (l + 1 < layers) z = z.array().tanh();
    tape.act[l + 1] = std::move(z);
  }
  return tape.act[layers];
}

inline Vector forward(const MlpShape& shape, const Eigen::Ref<const Vector>& params,
                      const Eigen::Ref<const Vector>& input) {
  Tape tape;
  return forward(shape, params, input, tape);
}

/// out += scale * J_params^T cotangent, using the activations in `tape`.
inline void add_vjp(const MlpShape& shape, const Eigen::Ref<const Vector>& params,
                    const Tape& tape, const Eigen::Ref<const Vector>& cotangent, double scale,
                    Eigen::Ref<Vector> out) {
  require(cotangent.size() == shape.output_dim(), "MLP cotangent dimension mismatch");
  require(out.size() == shape.num_params(), "MLP gradient buffer length mismatch");
  Vector g = scale * cotangent;
  for (std::size_t l = shape.num_layers(); l-- > 0;) {
    shape.weights(out, l).noalias() += g * tape.act[l].transpose();
    shape.bias(out, l) += g;
    if (l > 0) {
      Vector back = shape.weights(params, l).transpose() * g;
      g = back.array() * (1.0 - tape.act[l].array().square());
    }
  }
}

/// Dense MLP with tanh hidden layers and an affine output layer.
class Mlp {
 public:
  Mlp(std::vector<int> layer_dims, ParamVector params)
      : shape_(std::move(layer_dims)), params_(std::move(params)) {
    require(params_.size() == shape_.num_params(), "MLP parameter length mismatch");
  }

  static Mlp zeros(std::vector<int> layer_dims) {
    MlpShape shape(layer_dims);
    return Mlp(std::move(layer_dims), ParamVector::Zero(shape.num_params()));
  }

  const MlpShape& shape() const { return shape_; }
  const ParamVector& params() const { return params_; }
  ParamVector& params() { return params_; }

  Vector forward(const Eigen::Ref<const Vector>& input) const {
    return nn::forward(shape_, params_, input);
  }

  /// Vector-Jacobian product of the output with respect to the parameters.
  ParamVector grad_params(const Eigen::Ref<const Vector>& input,
                          const Eigen::Ref<const Vector>& cotangent) const {
    Tape tape;
    nn::forward(shape_, params_, input, tape);
    ParamVector g = ParamVector::Zero(shape_.num_params());
    add_vjp(shape_, params_, tape, cotangent, 1.0, g);
    return g;
  }

 private:
  MlpShape shape_;
  ParamVector params_;
};

}  // namespace lapsrl::nn
