// Copyright 2026 The ECCT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

// Dense multi-layer perceptron with explicit analytic gradients.
//
// Batches are row-major in the sense that each row is one sample: a batch is
// a [B x in] matrix and a layer maps it to [B x out] via X * W^T + 1 b^T.
// Every type is templated on the scalar so gradient oracles can run the same
// network in extended precision.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ecct/errors.hpp"

namespace ecct::nn {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

enum class Activation { kRelu, kIdentity };

inline const char* to_string(Activation a) { return a == Activation::kRelu ? "relu" : "identity"; }

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "identity") return Activation::kIdentity;
  throw InputError("unknown activation '" + s + "'");
}

struct LayerSpec {
  Index out;
  Activation activation;
};

template <typename Scalar>
struct DenseLayer {
  Matrix<Scalar> weight;  // [out x in]
  Vector<Scalar> bias;    // [out]
  Activation activation = Activation::kIdentity;

  Index in() const { return weight.cols(); }
  Index out() const { return weight.rows(); }
};

template <typename Scalar>
struct LayerGradient {
  Matrix<Scalar> weight;
  Vector<Scalar> bias;
};

/// Per-layer parameter gradients, congruent with the network they came from.
template <typename Scalar>
struct GradientSet {
  std::vector<LayerGradient<Scalar>> layers;

  GradientSet& operator+=(const GradientSet& other) {
    if (other.layers.size() != layers.size()) throw ShapeError("gradient sets differ in depth");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (layers[i].weight.rows() != other.layers[i].weight.rows() ||
          layers[i].weight.cols() != other.layers[i].weight.cols())
        throw ShapeError("gradient sets differ in layer shape");
      layers[i].weight += other.layers[i].weight;
      layers[i].bias += other.layers[i].bias;
    }
    return *this;
  }

  bool is_zero() const {
    for (const auto& l : layers)
      if (!l.weight.isZero(0) || !l.bias.isZero(0)) return false;
    return true;
  }
};

template <typename Scalar>
struct BackwardResult {
  GradientSet<Scalar> grads;
  Matrix<Scalar> input_gradient;  // [B x input_dim]
};

template <typename Scalar>
class DenseNet {
 public:
  DenseNet() = default;

  /// Builds a network with all parameters zero.
  DenseNet(Index input_dim, const std::vector<LayerSpec>& specs) : input_dim_(input_dim) {
    if (input_dim <= 0) throw ShapeError("input_dim must be positive");
    if (specs.empty()) throw ShapeError("network needs at least one layer");
    Index in = input_dim;
    for (const auto& s : specs) {
      if (s.out <= 0) throw ShapeError("layer width must be positive");
      layers_.push_back({Matrix<Scalar>::Zero(s.out, in), Vector<Scalar>::Zero(s.out), s.activation});
      in = s.out;
    }
  }

  /// Relu hidden layers of the given widths followed by an output layer.
  static DenseNet mlp(Index input_dim, const std::vector<Index>& hidden, Index output_dim,
                      Activation output_activation = Activation::kIdentity) {
    std::vector<LayerSpec> specs;
    for (Index w : hidden) specs.push_back({w, Activation::kRelu});
    specs.push_back({output_dim, output_activation});
    return DenseNet(input_dim, specs);
  }

  /// He-uniform weights for relu layers, Xavier-uniform for identity layers,
  /// zero biases.
  template <typename Urbg>
  void initialize(Urbg& rng) {
    for (auto& l : layers_) {
      const double fan_in = static_cast<double>(l.in());
      const double fan_out = static_cast<double>(l.out());
      const double limit = l.activation == Activation::kRelu ? std::sqrt(6.0 / fan_in)
                                                             : std::sqrt(6.0 / (fan_in + fan_out));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (Index r = 0; r < l.weight.rows(); ++r)
        for (Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = static_cast<Scalar>(dist(rng));
      l.bias.setZero();
    }
    clear_cache();
  }

  Index input_dim() const { return input_dim_; }
  Index output_dim() const { return layers_.empty() ? 0 : layers_.back().out(); }
  std::size_t depth() const { return layers_.size(); }
  const std::vector<DenseLayer<Scalar>>& layers() const { return layers_; }
  std::vector<DenseLayer<Scalar>>& mutable_layers() { return layers_; }

  Index parameter_count() const {
    Index n = 0;
    for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
  }

  /// Forward pass that records the activations needed by backward().
  Matrix<Scalar> forward(const Eigen::Ref<const Matrix<Scalar>>& batch) {
    check_input(batch);
    inputs_.resize(layers_.size());
    pre_.resize(layers_.size());
    Matrix<Scalar> x = batch;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = layers_[i];
      Matrix<Scalar> z(x.rows(), l.out());
      z.noalias() = x * l.weight.transpose();
      z.rowwise() += l.bias.transpose();
      inputs_[i] = std::move(x);
      x = activate(z, l.activation);
      pre_[i] = std::move(z);
    }
    cached_rows_ = batch.rows();
    return x;
  }

  /// Forward pass without touching the backward cache.
  Matrix<Scalar> predict(const Eigen::Ref<const Matrix<Scalar>>& batch) const {
    check_input(batch);
    Matrix<Scalar> x = batch;
    for (const auto& l : layers_) {
      Matrix<Scalar> z(x.rows(), l.out());
      z.noalias() = x * l.weight.transpose();
      z.rowwise() += l.bias.transpose();
      x = activate(z, l.activation);
    }
    return x;
  }

  /// Gradients of sum(upstream .* forward(batch)) for the most recent forward batch.
  BackwardResult<Scalar> backward(const Eigen::Ref<const Matrix<Scalar>>& upstream) const {
    if (cached_rows_ < 0) throw StateError("backward called without a preceding forward");
    if (upstream.rows() != cached_rows_ || upstream.cols() != output_dim())
      throw ShapeError("upstream gradient shape does not match the last forward output");
    BackwardResult<Scalar> result;
    result.grads.layers.resize(layers_.size());
    Matrix<Scalar> delta = upstream;
    for (std::size_t k = layers_.size(); k-- > 0;) {
      const auto& l = layers_[k];
      if (l.activation == Activation::kRelu)
        delta = (pre_[k].array() > Scalar(0)).select(delta, Scalar(0));
      auto& g = result.grads.layers[k];
      g.weight.noalias() = delta.transpose() * inputs_[k];
      g.bias = delta.colwise().sum().transpose();
      Matrix<Scalar> next(delta.rows(), l.in());
      next.noalias() = delta * l.weight;
      delta = std::move(next);
    }
    result.input_gradient = std::move(delta);
    return result;
  }

  void clear_cache() {
    inputs_.clear();
    pre_.clear();
    cached_rows_ = -1;
  }

  /// Canonical flat layout: layer-major; row-major weights, then bias.
  Vector<Scalar> serialize_params() const {
    Vector<Scalar> flat(parameter_count());
    Index pos = 0;
    for (const auto& l : layers_) {
      for (Index r = 0; r < l.weight.rows(); ++r)
        for (Index c = 0; c < l.weight.cols(); ++c) flat(pos++) = l.weight(r, c);
      for (Index r = 0; r < l.bias.size(); ++r) flat(pos++) = l.bias(r);
    }
    return flat;
  }

  void deserialize_params(std::span<const Scalar> flat) {
    if (static_cast<Index>(flat.size()) != parameter_count())
      throw ShapeError("parameter vector length " + std::to_string(flat.size()) + " does not match " +
                       std::to_string(parameter_count()));
    std::size_t pos = 0;
    for (auto& l : layers_) {
      for (Index r = 0; r < l.weight.rows(); ++r)
        for (Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = flat[pos++];
      for (Index r = 0; r < l.bias.size(); ++r) l.bias(r) = flat[pos++];
    }
    clear_cache();
  }

  bool same_architecture(const DenseNet& other) const {
    if (input_dim_ != other.input_dim_ || layers_.size() != other.layers_.size()) return false;
    for (std::size_t i = 0; i < layers_.size(); ++i)
      if (layers_[i].out() != other.layers_[i].out() ||
          layers_[i].activation != other.layers_[i].activation)
        return false;
    return true;
  }

  bool all_finite() const {
    for (const auto& l : layers_)
      if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    return true;
  }

  GradientSet<Scalar> zero_gradients() const {
    GradientSet<Scalar> g;
    for (const auto& l : layers_)
      g.layers.push_back({Matrix<Scalar>::Zero(l.out(), l.in()), Vector<Scalar>::Zero(l.out())});
    return g;
  }

 private:
  void check_input(const Eigen::Ref<const Matrix<Scalar>>& batch) const {
    if (batch.cols() != input_dim_)
      throw ShapeError("batch has " + std::to_string(batch.cols()) + " columns, network expects " +
                       std::to_string(input_dim_));
    if (!batch.allFinite()) throw InputError("batch contains non-finite values");
  }

  static Matrix<Scalar> activate(const Matrix<Scalar>& z, Activation a) {
    if (a == Activation::kRelu) return z.cwiseMax(Scalar(0));
    return z;
  }

  Index input_dim_ = 0;
  std::vector<DenseLayer<Scalar>> layers_;
  std::vector<Matrix<Scalar>> inputs_;
  std::vector<Matrix<Scalar>> pre_;
  Index cached_rows_ = -1;
};

enum class OptimizerKind { kSgd, kSgdMomentum, kAdam };

inline const char* to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::kSgd: return "sgd";
    case OptimizerKind::kSgdMomentum: return "sgd_momentum";
    case OptimizerKind::kAdam: return "adam";
  }
  return "?";
}

inline OptimizerKind optimizer_kind_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerKind::kSgd;
  if (s == "sgd_momentum") return OptimizerKind::kSgdMomentum;
  if (s == "adam") return OptimizerKind::kAdam;
  throw ConfigError("unknown optimizer '" + s + "'");
}

struct OptimizerSettings {
  OptimizerKind kind = OptimizerKind::kAdam;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename Scalar>
class Optimizer {
 public:
  Optimizer() = default;
  explicit Optimizer(OptimizerSettings settings) : settings_(settings) {
    if (!(settings.learning_rate > 0)) throw ConfigError("learning rate must be positive");
  }

  const OptimizerSettings& settings() const { return settings_; }
  std::uint64_t step_count() const { return steps_; }

  void step(DenseNet<Scalar>& net, const GradientSet<Scalar>& grads) {
    check_congruent(net, grads);
    if (first_.layers.empty() && settings_.kind != OptimizerKind::kSgd) {
      first_ = net.zero_gradients();
      if (settings_.kind == OptimizerKind::kAdam) second_ = net.zero_gradients();
    }
    ++steps_;
    const Scalar lr = static_cast<Scalar>(settings_.learning_rate);
    auto& layers = net.mutable_layers();
    switch (settings_.kind) {
      case OptimizerKind::kSgd:
        for (std::size_t i = 0; i < layers.size(); ++i) {
          layers[i].weight -= lr * grads.layers[i].weight;
          layers[i].bias -= lr * grads.layers[i].bias;
        }
        break;
      case OptimizerKind::kSgdMomentum: {
        const Scalar mu = static_cast<Scalar>(settings_.momentum);
        for (std::size_t i = 0; i < layers.size(); ++i) {
          auto& v = first_.layers[i];
          v.weight = mu * v.weight + grads.layers[i].weight;
          v.bias = mu * v.bias + grads.layers[i].bias;
          layers[i].weight -= lr * v.weight;
          layers[i].bias -= lr * v.bias;
        }
        break;
      }
      case OptimizerKind::kAdam: {
        const Scalar b1 = static_cast<Scalar>(settings_.beta1);
        const Scalar b2 = static_cast<Scalar>(settings_.beta2);
        const Scalar eps = static_cast<Scalar>(settings_.epsilon);
        const Scalar t = static_cast<Scalar>(steps_);
        const Scalar c1 = Scalar(1) - std::pow(b1, t);
        const Scalar c2 = Scalar(1) - std::pow(b2, t);
        auto adam = [&](auto& param, auto& m, auto& v, const auto& g) {
          m = b1 * m + (Scalar(1) - b1) * g;
          v = b2 * v + (Scalar(1) - b2) * g.cwiseProduct(g);
          param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
        };
        for (std::size_t i = 0; i < layers.size(); ++i) {
          adam(layers[i].weight, first_.layers[i].weight, second_.layers[i].weight, grads.layers[i].weight);
          adam(layers[i].bias, first_.layers[i].bias, second_.layers[i].bias, grads.layers[i].bias);
        }
        break;
      }
    }
    net.clear_cache();
    if (!net.all_finite()) throw StateError("optimizer step produced non-finite parameters");
  }

 private:
  static void check_congruent(const DenseNet<Scalar>& net, const GradientSet<Scalar>& grads) {
    const auto& layers = net.layers();
    if (grads.layers.size() != layers.size()) throw ShapeError("gradient depth does not match network");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (grads.layers[i].weight.rows() != layers[i].out() || grads.layers[i].weight.cols() != layers[i].in() ||
          grads.layers[i].bias.size() != layers[i].out())
        throw ShapeError("gradient shape does not match layer " + std::to_string(i));
    }
  }

  OptimizerSettings settings_;
  GradientSet<Scalar> first_;
  GradientSet<Scalar> second_;
  std::uint64_t steps_ = 0;
};

// Free-function surface.

template <typename Scalar>
Matrix<Scalar> forward(DenseNet<Scalar>& net, const Eigen::Ref<const Matrix<Scalar>>& batch) {
  return net.forward(batch);
}

template <typename Scalar>
BackwardResult<Scalar> backward(const DenseNet<Scalar>& net, const Eigen::Ref<const Matrix<Scalar>>& upstream) {
  return net.backward(upstream);
}

template <typename Scalar>
void apply_update(DenseNet<Scalar>& net, const GradientSet<Scalar>& grads, Optimizer<Scalar>& opt) {
  opt.step(net, grads);
}

template <typename Scalar>
Vector<Scalar> serialize_params(const DenseNet<Scalar>& net) {
  return net.serialize_params();
}

template <typename Scalar>
void deserialize_params(DenseNet<Scalar>& net, std::span<const Scalar> flat) {
  net.deserialize_params(flat);
}

template <typename Scalar>
void deserialize_params(DenseNet<Scalar>& net, const Vector<Scalar>& flat) {
  net.deserialize_params(std::span<const Scalar>(flat.data(), static_cast<std::size_t>(flat.size())));
}

using DenseNetd = DenseNet<double>;
using GradientSetd = GradientSet<double>;
using Optimizerd = Optimizer<double>;
using MatrixXd = Matrix<double>;
using VectorXd = Vector<double>;

}  // namespace ecct::nn
