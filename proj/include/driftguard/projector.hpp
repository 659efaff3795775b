#pragma once

// Trainable projection network: a chain of affine maps with tanh between
// them and an identity output layer, plus the hypersphere center.

#include "driftguard/core.hpp"
#include "driftguard/random.hpp"

#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

namespace driftguard {

enum class Activation { tanh, identity };

template <typename Scalar>
struct Layer {
  MatrixX<Scalar> weight;  // out x in
  VectorX<Scalar> bias;    // out
  Activation activation = Activation::tanh;

  Eigen::Index in() const { return weight.cols(); }
  Eigen::Index out() const { return weight.rows(); }
};

template <typename Scalar>
class ProjectionNetwork {
 public:
  std::vector<Layer<Scalar>> layers;
  std::optional<VectorX<Scalar>> center;
  /// When false, biases stay at zero and receive no updates.
  bool use_bias = true;

  Eigen::Index input_dim() const { return layers.front().in(); }
  Eigen::Index output_dim() const { return layers.back().out(); }

  Eigen::Index parameter_count() const {
    Eigen::Index n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
  }

  /// Bumped on every parameter update; forward caches remember the value
  /// they were computed at.
  std::uint64_t version() const { return version_; }
  void touch() { ++version_; }

  /// Throws DataError when the layer chain or parameters are invalid.
  void validate() const {
    if (layers.empty()) throw DataError("network has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& layer = layers[l];
      if (layer.bias.size() != layer.out()) throw DataError("bias size does not match layer output");
      if (l + 1 < layers.size() && layer.out() != layers[l + 1].in())
        throw DataError("layer dimensions do not chain");
      if (!layer.weight.allFinite() || !layer.bias.allFinite()) throw DataError("non-finite parameter");
    }
    if (layers.back().activation != Activation::identity)
      throw DataError("final layer must be linear");
    if (center && (center->size() != output_dim() || !center->allFinite()))
      throw DataError("invalid center");
  }

  template <typename Other>
  ProjectionNetwork<Other> cast() const {
    ProjectionNetwork<Other> net;
    net.use_bias = use_bias;
    for (const auto& l : layers)
      net.layers.push_back({l.weight.template cast<Other>(), l.bias.template cast<Other>(), l.activation});
    if (center) net.center = center->template cast<Other>();
    return net;
  }

 private:
  std::uint64_t version_ = 0;
};

template <typename Scalar>
bool parameters_equal(const ProjectionNetwork<Scalar>& a, const ProjectionNetwork<Scalar>& b) {
  if (a.layers.size() != b.layers.size() || a.center.has_value() != b.center.has_value()) return false;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    const auto& la = a.layers[l];
    const auto& lb = b.layers[l];
    if (la.weight.rows() != lb.weight.rows() || la.weight.cols() != lb.weight.cols()) return false;
    if (la.weight != lb.weight || la.bias != lb.bias || la.activation != lb.activation) return false;
  }
  return !a.center || *a.center == *b.center;
}

/// Weights are uniform with variance `gain / fan_in`; biases start at zero.
template <typename Scalar = double>
ProjectionNetwork<Scalar> init_network(Eigen::Index input_dim, const std::vector<Eigen::Index>& hidden_dims,
                                       Eigen::Index output_dim, std::uint64_t seed, bool use_bias = true,
                                       double gain = 1.0) {
  if (input_dim < 1 || output_dim < 1) throw ConfigError("network dimensions must be >= 1");
  std::vector<Eigen::Index> dims{input_dim};
  for (auto h : hidden_dims) {
    if (h < 1) throw ConfigError("hidden dimensions must be >= 1");
    dims.push_back(h);
  }
  dims.push_back(output_dim);

  Rng rng(seed);
  ProjectionNetwork<Scalar> net;
  net.use_bias = use_bias;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const double bound = std::sqrt(3.0 * gain / static_cast<double>(dims[l]));
    Layer<Scalar> layer;
    layer.weight.resize(dims[l + 1], dims[l]);
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i)
      layer.weight.data()[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
    layer.bias = VectorX<Scalar>::Zero(dims[l + 1]);
    layer.activation = (l + 2 == dims.size()) ? Activation::identity : Activation::tanh;
    net.layers.push_back(std::move(layer));
  }
  return net;
}

/// Intermediate activations of one forward pass, needed by `backward`.
template <typename Scalar>
struct ForwardCache {
  std::vector<MatrixX<Scalar>> inputs;  // input of layer l
  std::vector<MatrixX<Scalar>> outputs; // post-activation output of layer l
  std::uint64_t version = 0;
  bool valid = false;

  const MatrixX<Scalar>& result() const { return outputs.back(); }
};

namespace detail {

template <typename Scalar, typename Derived>
MatrixX<Scalar> apply_layer(const Layer<Scalar>& layer, const Eigen::MatrixBase<Derived>& x) {
  MatrixX<Scalar> z = x * layer.weight.transpose();
  z.rowwise() += layer.bias.transpose();
  if (layer.activation == Activation::tanh) z = z.array().tanh().matrix();
  return z;
}

}  // namespace detail

template <typename Scalar, typename Derived>
MatrixX<Scalar> forward(const ProjectionNetwork<Scalar>& net, const Eigen::MatrixBase<Derived>& batch) {
  if (batch.cols() != net.input_dim())
    throw DimensionError("batch has " + std::to_string(batch.cols()) + " columns, network expects " +
                         std::to_string(net.input_dim()));
  MatrixX<Scalar> x = batch.template cast<Scalar>();
  for (const auto& layer : net.layers) x = detail::apply_layer(layer, x);
  return x;
}

template <typename Scalar, typename Derived>
const MatrixX<Scalar>& forward(const ProjectionNetwork<Scalar>& net, const Eigen::MatrixBase<Derived>& batch,
                               ForwardCache<Scalar>& cache) {
  if (batch.cols() != net.input_dim())
    throw DimensionError("batch has " + std::to_string(batch.cols()) + " columns, network expects " +
                         std::to_string(net.input_dim()));
  cache.inputs.clear();
  cache.outputs.clear();
  MatrixX<Scalar> x = batch.template cast<Scalar>();
  for (const auto& layer : net.layers) {
    cache.inputs.push_back(x);
    x = detail::apply_layer(layer, x);
    cache.outputs.push_back(x);
  }
  cache.version = net.version();
  cache.valid = true;
  return cache.outputs.back();
}

/// Per-parameter gradients, shaped like the network's layers.
template <typename Scalar>
struct GradientBundle {
  std::vector<MatrixX<Scalar>> weight;
  std::vector<VectorX<Scalar>> bias;

  static GradientBundle zeros_like(const ProjectionNetwork<Scalar>& net) {
    GradientBundle g;
    for (const auto& l : net.layers) {
      g.weight.push_back(MatrixX<Scalar>::Zero(l.out(), l.in()));
      g.bias.push_back(VectorX<Scalar>::Zero(l.out()));
    }
    return g;
  }

  GradientBundle& operator+=(const GradientBundle& other) {
    for (std::size_t l = 0; l < weight.size(); ++l) {
      weight[l] += other.weight[l];
      bias[l] += other.bias[l];
    }
    return *this;
  }

  bool all_finite() const {
    for (std::size_t l = 0; l < weight.size(); ++l)
      if (!weight[l].allFinite() || !bias[l].allFinite()) return false;
    return true;
  }

  bool matches(const ProjectionNetwork<Scalar>& net) const {
    if (weight.size() != net.layers.size() || bias.size() != net.layers.size()) return false;
    for (std::size_t l = 0; l < weight.size(); ++l) {
      if (weight[l].rows() != net.layers[l].out() || weight[l].cols() != net.layers[l].in()) return false;
      if (bias[l].size() != net.layers[l].out()) return false;
    }
    return true;
  }
};

/// Reverse pass: gradients of a loss L w.r.t. every parameter, given
/// dL/d(output) for the batch stored in `cache`.
template <typename Scalar, typename Derived>
GradientBundle<Scalar> backward(const ProjectionNetwork<Scalar>& net, const ForwardCache<Scalar>& cache,
                                const Eigen::MatrixBase<Derived>& upstream_grad) {
  if (!cache.valid || cache.outputs.size() != net.layers.size())
    throw TrainingError("backward called without a forward cache");
  if (cache.version != net.version()) throw TrainingError("forward cache is stale (parameters changed)");
  const auto& out = cache.outputs.back();
  if (upstream_grad.rows() != out.rows() || upstream_grad.cols() != out.cols())
    throw DimensionError("upstream gradient shape does not match network output");

  GradientBundle<Scalar> g;
  g.weight.resize(net.layers.size());
  g.bias.resize(net.layers.size());
  MatrixX<Scalar> delta = upstream_grad;
  for (std::size_t l = net.layers.size(); l-- > 0;) {
    const auto& layer = net.layers[l];
    if (layer.activation == Activation::tanh)
      delta.array() *= (Scalar(1) - cache.outputs[l].array().square());
    g.weight[l] = delta.transpose() * cache.inputs[l];
    g.bias[l] = net.use_bias ? VectorX<Scalar>(delta.colwise().sum().transpose())
                             : VectorX<Scalar>::Zero(layer.out());
    if (l > 0) delta = delta * layer.weight;
  }
  return g;
}

/// SGD state. Weight decay enters as an L2 term added to the gradient; the
/// learning rate follows a cosine annealing curve over `total_steps`.
struct OptimizerState {
  double base_lr = 1e-3;
  double weight_decay = 5e-7;
  double momentum = 0.0;
  std::int64_t total_steps = 1;
  std::int64_t step_count = 0;

  /// lr = base_lr * 0.5 * (1 + cos(pi * step / total)), clamped at the end.
  double lr_at(std::int64_t step) const {
    if (total_steps <= 0) return base_lr;
    const double t = std::min<double>(static_cast<double>(step), static_cast<double>(total_steps));
    return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t / static_cast<double>(total_steps)));
  }
  double current_lr() const { return lr_at(step_count); }
};

template <typename Scalar>
struct MomentumBuffer {
  std::optional<GradientBundle<Scalar>> velocity;
};

template <typename Scalar>
void sgd_step(ProjectionNetwork<Scalar>& net, const GradientBundle<Scalar>& grads, OptimizerState& opt,
              MomentumBuffer<Scalar>* buffer = nullptr) {
  if (!grads.matches(net)) throw DimensionError("gradient bundle does not match network shape");
  if (!grads.all_finite()) throw TrainingError("non-finite gradient at step " + std::to_string(opt.step_count));
  const auto lr = static_cast<Scalar>(opt.current_lr());
  const auto wd = static_cast<Scalar>(opt.weight_decay);
  const bool use_momentum = opt.momentum > 0.0 && buffer != nullptr;
  if (use_momentum && !buffer->velocity) buffer->velocity = GradientBundle<Scalar>::zeros_like(net);
  const auto mu = static_cast<Scalar>(opt.momentum);

  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    auto& layer = net.layers[l];
    MatrixX<Scalar> dw = grads.weight[l];
    if (wd != Scalar(0)) dw += wd * layer.weight;
    VectorX<Scalar> db = grads.bias[l];
    if (wd != Scalar(0)) db += wd * layer.bias;
    if (use_momentum) {
      auto& v = *buffer->velocity;
      v.weight[l] = mu * v.weight[l] + dw;
      v.bias[l] = mu * v.bias[l] + db;
      dw = v.weight[l];
      db = v.bias[l];
    }
    layer.weight -= lr * dw;
    if (net.use_bias) layer.bias -= lr * db;
  }
  ++opt.step_count;
  net.touch();
}

/// Center = mean of the network's features over the source rows.
template <typename Scalar, typename Derived>
void set_center(ProjectionNetwork<Scalar>& net, const Eigen::MatrixBase<Derived>& source) {
  if (source.rows() < 1) throw DataError("cannot set center from an empty source");
  const MatrixX<Scalar> feats = forward(net, source);
  VectorX<Scalar> c = feats.colwise().mean().transpose();
  if (!c.allFinite()) throw TrainingError("non-finite hypersphere center");
  net.center = std::move(c);
}

/// Squared distance of each row's feature to the center.
template <typename Scalar, typename Derived>
VectorX<Scalar> hypersphere_scores(const ProjectionNetwork<Scalar>& net, const Eigen::MatrixBase<Derived>& batch) {
  if (!net.center) throw TrainingError("network has no center");
  const MatrixX<Scalar> feats = forward(net, batch);
  return (feats.rowwise() - net.center->transpose()).rowwise().squaredNorm();
}

}  // namespace driftguard
