#pragma once

// Small dense feed-forward networks with hand-written backpropagation,
// sigmoid-BCE and squared-error losses, Adam, and a finite-difference
// gradient checker. Batches are column-major: one sample per column.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "drs/error.hpp"
#include "drs/random.hpp"

namespace drs {

enum class Activation { relu, tanh };

inline std::string to_string(Activation a) {
  return a == Activation::relu ? "relu" : "tanh";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + s + "'");
}

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

/// Parameter-shaped storage, used for gradients and Adam moments.
using LayerParams = std::vector<DenseLayer>;

class DenseNet {
 public:
  DenseNet() = default;

  /// Glorot-uniform weights, zero biases. Deterministic in `seed`.
  DenseNet(std::vector<int> layer_sizes, Activation hidden, std::uint64_t seed)
      : sizes_(std::move(layer_sizes)), hidden_(hidden) {
    validate_sizes(sizes_);
    Rng rng(derive_seed(seed, 0x6e6574));
    layers_.reserve(sizes_.size() - 1);
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      const int fan_in = sizes_[l];
      const int fan_out = sizes_[l + 1];
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      DenseLayer layer{Eigen::MatrixXd(fan_out, fan_in), Eigen::VectorXd::Zero(fan_out)};
      // Row-major fill order so the draw sequence matches the on-disk layout.
      for (int r = 0; r < fan_out; ++r)
        for (int c = 0; c < fan_in; ++c) layer.weight(r, c) = uniform_real(rng, -limit, limit);
      layers_.push_back(std::move(layer));
    }
  }

  /// Network with the given shape and every parameter zero.
  static DenseNet zeros(std::vector<int> layer_sizes, Activation hidden) {
    validate_sizes(layer_sizes);
    DenseNet net;
    net.sizes_ = std::move(layer_sizes);
    net.hidden_ = hidden;
    net.layers_ = zero_like_sizes(net.sizes_);
    return net;
  }

  static void validate_sizes(const std::vector<int>& sizes) {
    if (sizes.size() < 2)
      throw ConfigError("layer_sizes needs at least an input and an output size");
    for (int s : sizes)
      if (s < 1) throw ConfigError("layer sizes must be positive");
  }

  const std::vector<int>& layer_sizes() const { return sizes_; }
  Activation hidden_activation() const { return hidden_; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  std::size_t layer_count() const { return layers_.size(); }
  const DenseLayer& layer(std::size_t i) const { return layers_[i]; }
  DenseLayer& layer(std::size_t i) { return layers_[i]; }
  const LayerParams& layers() const { return layers_; }
  LayerParams& layers() { return layers_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
  }

  Eigen::VectorXd forward(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != input_size())
      throw ShapeError("forward: expected input of length " + std::to_string(input_size()) +
                       ", got " + std::to_string(x.size()));
    Eigen::Map<const Eigen::VectorXd> in(x.data(), static_cast<Eigen::Index>(x.size()));
    return forward_batch(in);
  }

  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& inputs) const {
    if (inputs.rows() != input_size())
      throw ShapeError("forward: expected " + std::to_string(input_size()) + " input rows, got " +
                       std::to_string(inputs.rows()));
    Eigen::MatrixXd a = inputs;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Eigen::MatrixXd z = layers_[l].weight * a;
      z.colwise() += layers_[l].bias;
      if (l + 1 < layers_.size()) activate(z);
      a = std::move(z);
    }
    return a;
  }

  /// Forward pass keeping every layer's post-activation output, for backprop.
  /// acts[0] is the input; acts.back() is the raw output.
  std::vector<Eigen::MatrixXd> forward_trace(const Eigen::MatrixXd& inputs) const {
    if (inputs.rows() != input_size())
      throw ShapeError("forward: expected " + std::to_string(input_size()) + " input rows, got " +
                       std::to_string(inputs.rows()));
    std::vector<Eigen::MatrixXd> acts;
    acts.reserve(layers_.size() + 1);
    acts.push_back(inputs);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Eigen::MatrixXd z = layers_[l].weight * acts.back();
      z.colwise() += layers_[l].bias;
      if (l + 1 < layers_.size()) activate(z);
      acts.push_back(std::move(z));
    }
    return acts;
  }

  /// Gradients of a scalar loss given d(loss)/d(output) for each sample.
  LayerParams backward(const std::vector<Eigen::MatrixXd>& acts,
                       const Eigen::MatrixXd& output_grad) const {
    LayerParams grads(layers_.size());
    Eigen::MatrixXd delta = output_grad;
    for (std::size_t l = layers_.size(); l-- > 0;) {
      grads[l].weight = delta * acts[l].transpose();
      grads[l].bias = delta.rowwise().sum();
      if (l == 0) break;
      Eigen::MatrixXd upstream = layers_[l].weight.transpose() * delta;
      const Eigen::MatrixXd& h = acts[l];
      if (hidden_ == Activation::relu)
        delta = upstream.array() * (h.array() > 0.0).cast<double>();
      else
        delta = upstream.array() * (1.0 - h.array().square());
    }
    return grads;
  }

  bool all_finite() const {
    for (const auto& l : layers_)
      if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    return true;
  }

  friend bool operator==(const DenseNet& a, const DenseNet& b) {
    if (a.sizes_ != b.sizes_ || a.hidden_ != b.hidden_) return false;
    for (std::size_t l = 0; l < a.layers_.size(); ++l)
      if (a.layers_[l].weight != b.layers_[l].weight || a.layers_[l].bias != b.layers_[l].bias)
        return false;
    return true;
  }

  static LayerParams zero_like_sizes(const std::vector<int>& sizes) {
    LayerParams p;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l)
      p.push_back({Eigen::MatrixXd::Zero(sizes[l + 1], sizes[l]), Eigen::VectorXd::Zero(sizes[l + 1])});
    return p;
  }

 private:
  void activate(Eigen::MatrixXd& z) const {
    if (hidden_ == Activation::relu)
      z = z.cwiseMax(0.0);
    else
      z = z.array().tanh();
  }

  std::vector<int> sizes_;
  Activation hidden_ = Activation::tanh;
  LayerParams layers_;
};

// ---------------------------------------------------------------------------
// Losses

enum class LossKind { bce, mse };

/// Targets for a batch. `values` has the output's shape. For BCE the values
/// are labels in {0, 1}. `mask` (same shape, 0/1) restricts which entries
/// contribute; an empty mask means all entries. The loss is the mean over
/// contributing entries.
struct LossTargets {
  LossKind kind = LossKind::mse;
  Eigen::MatrixXd values;
  Eigen::MatrixXd mask;
};

namespace detail {

inline double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }
inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace detail

/// Mean loss and d(loss)/d(output) for raw outputs `out`.
inline double loss_and_output_grad(const Eigen::MatrixXd& out, const LossTargets& t,
                                   Eigen::MatrixXd* grad) {
  if (t.values.rows() != out.rows() || t.values.cols() != out.cols())
    throw ShapeError("loss: target shape " + std::to_string(t.values.rows()) + "x" +
                     std::to_string(t.values.cols()) + " does not match output shape " +
                     std::to_string(out.rows()) + "x" + std::to_string(out.cols()));
  const bool masked = t.mask.size() != 0;
  if (masked && (t.mask.rows() != out.rows() || t.mask.cols() != out.cols()))
    throw ShapeError("loss: mask shape does not match output shape");
  const double count = masked ? t.mask.sum() : static_cast<double>(out.size());
  if (count <= 0) throw UsageError("loss: no contributing entries");

  if (grad) grad->setZero(out.rows(), out.cols());
  double total = 0.0;
  for (Eigen::Index c = 0; c < out.cols(); ++c) {
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
      if (masked && t.mask(r, c) == 0.0) continue;
      const double z = out(r, c);
      const double y = t.values(r, c);
      if (t.kind == LossKind::bce) {
        // softplus(z) - y z, i.e. -[y log s(z) + (1-y) log(1-s(z))] without forming s(z).
        total += detail::softplus(z) - y * z;
        if (grad) (*grad)(r, c) = (detail::sigmoid(z) - y) / count;
      } else {
        const double d = z - y;
        total += d * d;
        if (grad) (*grad)(r, c) = 2.0 * d / count;
      }
    }
  }
  return total / count;
}

inline double evaluate_loss(const DenseNet& net, const Eigen::MatrixXd& inputs, const LossTargets& t) {
  return loss_and_output_grad(net.forward_batch(inputs), t, nullptr);
}

/// Loss plus analytic parameter gradients.
inline double loss_and_gradients(const DenseNet& net, const Eigen::MatrixXd& inputs,
                                 const LossTargets& t, LayerParams& grads) {
  auto acts = net.forward_trace(inputs);
  Eigen::MatrixXd out_grad;
  const double loss = loss_and_output_grad(acts.back(), t, &out_grad);
  grads = net.backward(acts, out_grad);
  return loss;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  LayerParams m;
  LayerParams v;

  AdamState() = default;
  AdamState(const DenseNet& net, double learning_rate) : lr(learning_rate) {
    if (!(learning_rate > 0)) throw ConfigError("Adam learning rate must be positive");
    m = DenseNet::zero_like_sizes(net.layer_sizes());
    v = m;
  }

  void apply(DenseNet& net, const LayerParams& grads) {
    if (m.size() != net.layer_count() || grads.size() != net.layer_count())
      throw ShapeError("Adam: state does not match network shape");
    ++step;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    auto update = [&](auto& param, const auto& g, auto& mom1, auto& mom2) {
      mom1 = beta1 * mom1 + (1.0 - beta1) * g;
      mom2 = beta2 * mom2 + (1.0 - beta2) * g.cwiseProduct(g);
      param.array() -= lr * (mom1.array() / c1) / ((mom2.array() / c2).sqrt() + eps);
    };
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
      auto& layer = net.layer(l);
      if (layer.weight.rows() != m[l].weight.rows() || layer.weight.cols() != m[l].weight.cols())
        throw ShapeError("Adam: state does not match network shape");
      update(layer.weight, grads[l].weight, m[l].weight, v[l].weight);
      update(layer.bias, grads[l].bias, m[l].bias, v[l].bias);
    }
    if (!net.all_finite()) throw NumericError("Adam step produced non-finite parameters");
  }
};

/// One Adam step on `targets`; returns the loss before the update.
inline double train_step(DenseNet& net, AdamState& adam, const Eigen::MatrixXd& inputs,
                         const LossTargets& targets) {
  if (inputs.cols() == 0) throw UsageError("train_step: empty batch");
  LayerParams grads;
  const double loss = loss_and_gradients(net, inputs, targets, grads);
  adam.apply(net, grads);
  return loss;
}

/// Mean sigmoid-BCE step on raw logits. Labels must be 0 or 1.
inline double train_step_bce(DenseNet& net, AdamState& adam, const Eigen::MatrixXd& inputs,
                             const Eigen::MatrixXd& labels) {
  if (inputs.cols() == 0) throw UsageError("train_step_bce: empty batch");
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    const double y = labels.data()[i];
    if (y != 0.0 && y != 1.0)
      throw UsageError("train_step_bce: labels must be 0 or 1, got " + std::to_string(y));
  }
  return train_step(net, adam, inputs, {LossKind::bce, labels, {}});
}

inline double train_step_mse(DenseNet& net, AdamState& adam, const Eigen::MatrixXd& inputs,
                             const Eigen::MatrixXd& targets) {
  if (inputs.cols() == 0) throw UsageError("train_step_mse: empty batch");
  return train_step(net, adam, inputs, {LossKind::mse, targets, {}});
}

// ---------------------------------------------------------------------------
// Finite-difference verification

inline constexpr double kFiniteDifferenceStep = 1e-5;
inline constexpr double kRelativeErrorGuard = 1e-8;

/// Max over all parameters of |analytic - numeric| / (|analytic| + |numeric| + 1e-8),
/// numeric gradients from central differences with step 1e-5.
inline double gradient_check(const DenseNet& net, const Eigen::MatrixXd& inputs, const LossTargets& t) {
  LayerParams analytic;
  loss_and_gradients(net, inputs, t, analytic);
  DenseNet probe = net;
  double worst = 0.0;
  auto check = [&](double& param, double g) {
    const double saved = param;
    param = saved + kFiniteDifferenceStep;
    const double up = evaluate_loss(probe, inputs, t);
    param = saved - kFiniteDifferenceStep;
    const double down = evaluate_loss(probe, inputs, t);
    param = saved;
    const double numeric = (up - down) / (2.0 * kFiniteDifferenceStep);
    const double rel = std::abs(g - numeric) / (std::abs(g) + std::abs(numeric) + kRelativeErrorGuard);
    worst = std::max(worst, rel);
  };
  for (std::size_t l = 0; l < probe.layer_count(); ++l) {
    auto& layer = probe.layer(l);
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i)
      check(layer.weight.data()[i], analytic[l].weight.data()[i]);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) check(layer.bias.data()[i], analytic[l].bias.data()[i]);
  }
  return worst;
}

}  // namespace drs
