#pragma once

#include <vector>

#include "reptrain/nn/propagation.hpp"

namespace reptrain {

// SGD with classical momentum:
//   v <- momentum * v - lr * g
//   w <- w + v
// Velocity buffers are created lazily per layer. Frozen layers and layers
// without gradient entries are left untouched.
template <typename Scalar>
class BasicSgd {
 public:
  BasicSgd(double lr, double momentum) : lr_(lr), momentum_(momentum) {
    if (!(lr >= 0.0)) throw ConfigError("learning rate must be non-negative");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  }

  double lr() const { return lr_; }
  double momentum() const { return momentum_; }

  void step(BasicNetwork<Scalar>& net, const BasicGradients<Scalar>& grads) {
    if (grads.layers.size() != net.num_layers()) throw ShapeError("sgd_step: gradient list does not match network");
    velocity_.resize(net.num_layers());
    const auto lr = static_cast<Scalar>(lr_);
    const auto mu = static_cast<Scalar>(momentum_);
    for (size_t li = 0; li < net.num_layers(); ++li) {
      const auto& g = grads.layers[li];
      if (!net.trainable(li) || g.empty()) continue;
      auto& p = net.params(li);
      if (g.weight.shape() != p.weight.shape() || g.bias.shape() != p.bias.shape())
        throw ShapeError("sgd_step: gradient shape mismatch at layer " + std::to_string(li));
      auto& v = velocity_[li];
      if (v.empty()) v = {BasicTensor<Scalar>(p.weight.shape()), BasicTensor<Scalar>(p.bias.shape())};
      v.weight.values() = mu * v.weight.values() - lr * g.weight.values();
      v.bias.values() = mu * v.bias.values() - lr * g.bias.values();
      p.weight.values() += v.weight.values();
      p.bias.values() += v.bias.values();
    }
  }

 private:
  double lr_;
  double momentum_;
  std::vector<LayerParams<Scalar>> velocity_;
};

using Sgd = BasicSgd<float>;

// One SGD step with the optimizer's state; returns the updated network.
template <typename Scalar>
BasicNetwork<Scalar> sgd_step(BasicNetwork<Scalar> net, const BasicGradients<Scalar>& grads, BasicSgd<Scalar>& opt) {
  opt.step(net, grads);
  return net;
}

}  // namespace reptrain
