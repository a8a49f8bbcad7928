#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "reptrain/nn/layer_spec.hpp"
#include "reptrain/nn/tensor.hpp"

namespace reptrain {

// Weight and bias of one layer. Both are empty for parameter-free layers.
//   Conv:  weight [out, in, k, k], bias [out]
//   Dense: weight [out, in],       bias [out]
template <typename Scalar>
struct LayerParams {
  BasicTensor<Scalar> weight;
  BasicTensor<Scalar> bias;

  bool empty() const { return weight.empty() && bias.empty(); }

  template <typename Other>
  LayerParams<Other> cast() const {
    LayerParams<Other> out;
    if (!weight.empty()) out.weight = weight.template cast<Other>();
    if (!bias.empty()) out.bias = bias.template cast<Other>();
    return out;
  }
};

namespace detail {

inline std::string pair_name(const std::vector<LayerSpec>& specs, size_t i) {
  std::string here = "layer " + std::to_string(i) + " (" + layer_name(specs[i].kind) + ")";
  std::string prev = i == 0 ? std::string("input")
                            : "layer " + std::to_string(i - 1) + " (" + layer_name(specs[i - 1].kind) + ")";
  return here + " is incompatible with " + prev;
}

// Per-sample output shape of specs[i] given its input shape.
inline Shape layer_output_shape(const std::vector<LayerSpec>& specs, size_t i, const Shape& in) {
  auto fail = [&](const std::string& why) { throw ShapeError(pair_name(specs, i) + ": " + why); };
  const LayerKind& kind = specs[i].kind;
  if (const auto* c = std::get_if<Conv>(&kind)) {
    if (c->in_channels < 1 || c->out_channels < 1 || c->kernel_size < 1 || c->stride < 1 || c->padding < 0)
      fail("conv dimensions must be >= 1 and padding >= 0");
    if (in.size() != 3) fail("expected a C x H x W input, got " + shape_string(in));
    if (in[0] != c->in_channels)
      fail("expected " + std::to_string(c->in_channels) + " input channels, got " + std::to_string(in[0]));
    if (in[1] + 2 * c->padding < c->kernel_size || in[2] + 2 * c->padding < c->kernel_size)
      fail("kernel larger than padded input " + shape_string(in));
    return {c->out_channels, (in[1] + 2 * c->padding - c->kernel_size) / c->stride + 1,
            (in[2] + 2 * c->padding - c->kernel_size) / c->stride + 1};
  }
  if (const auto* p = std::get_if<MaxPool>(&kind)) {
    if (p->window < 1 || p->stride < 1) fail("pool window and stride must be >= 1");
    if (in.size() != 3) fail("expected a C x H x W input, got " + shape_string(in));
    if (in[1] < p->window || in[2] < p->window) fail("pool window larger than input " + shape_string(in));
    return {in[0], (in[1] - p->window) / p->stride + 1, (in[2] - p->window) / p->stride + 1};
  }
  if (std::holds_alternative<ReLU>(kind)) return in;
  if (std::holds_alternative<Flatten>(kind)) return {shape_size(in)};
  const auto& d = std::get<Dense>(kind);
  if (d.in_features < 1 || d.out_features < 1) fail("dense dimensions must be >= 1");
  if (in.size() != 1) fail("dense layer needs a flat input, got " + shape_string(in));
  if (in[0] != d.in_features)
    fail("expected " + std::to_string(d.in_features) + " input features, got " + std::to_string(in[0]));
  return {d.out_features};
}

}  // namespace detail

template <typename Scalar>
class BasicNetwork {
 public:
  using Params = LayerParams<Scalar>;

  BasicNetwork(InputShape input, std::vector<LayerSpec> layers, std::vector<int> class_scores,
               std::vector<Params> params)
      : input_(input), layers_(std::move(layers)), class_scores_(std::move(class_scores)), params_(std::move(params)) {
    validate();
  }

  const InputShape& input_shape() const { return input_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  const std::vector<int>& class_scores() const { return class_scores_; }
  Index num_classes() const { return static_cast<Index>(class_scores_.size()); }
  size_t num_layers() const { return layers_.size(); }

  const std::vector<Params>& params() const { return params_; }
  Params& params(size_t layer) { return params_.at(layer); }
  const Params& params(size_t layer) const { return params_.at(layer); }

  // Per-sample output shape after each layer.
  const std::vector<Shape>& output_shapes() const { return shapes_; }
  Shape sample_shape() const { return {input_.channels, input_.height, input_.width}; }

  bool trainable(size_t layer) const { return layers_.at(layer).trainable; }
  void set_trainable(size_t layer, bool on) { layers_.at(layer).trainable = on; }

  // Freezes (or unfreezes) every Conv layer.
  void set_conv_trainable(bool on) {
    for (auto& spec : layers_)
      if (std::holds_alternative<Conv>(spec.kind)) spec.trainable = on;
  }

  Index parameter_count() const {
    Index n = 0;
    for (const auto& p : params_) n += p.weight.size() + p.bias.size();
    return n;
  }

  template <typename Other>
  BasicNetwork<Other> cast() const {
    std::vector<LayerParams<Other>> params;
    params.reserve(params_.size());
    for (const auto& p : params_) params.push_back(p.template cast<Other>());
    return BasicNetwork<Other>(input_, layers_, class_scores_, std::move(params));
  }

  // Bitwise equality of architecture, metadata and every parameter.
  bool identical(const BasicNetwork& other) const {
    if (!(input_ == other.input_) || layers_ != other.layers_ || class_scores_ != other.class_scores_) return false;
    for (size_t i = 0; i < params_.size(); ++i) {
      if (!params_[i].weight.identical(other.params_[i].weight)) return false;
      if (!params_[i].bias.identical(other.params_[i].bias)) return false;
    }
    return true;
  }

 private:
  void validate() {
    if (class_scores_.size() < 2) throw ConfigError("a network needs at least 2 classes");
    for (size_t i = 1; i < class_scores_.size(); ++i)
      if (class_scores_[i] <= class_scores_[i - 1]) throw ConfigError("class_scores not strictly increasing");
    if (layers_.empty()) throw ShapeError("network has no layers");
    if (input_.channels < 1 || input_.height < 1 || input_.width < 1)
      throw ShapeError("input dimensions must be positive");

    shapes_.clear();
    Shape shape = sample_shape();
    for (size_t i = 0; i < layers_.size(); ++i) {
      shape = detail::layer_output_shape(layers_, i, shape);
      shapes_.push_back(shape);
    }
    const auto* head = std::get_if<Dense>(&layers_.back().kind);
    if (!head) throw ShapeError("the final layer must be Dense");
    if (head->out_features != num_classes())
      throw ShapeError("final Dense has " + std::to_string(head->out_features) + " outputs but " +
                       std::to_string(num_classes()) + " class scores were given");

    if (params_.size() != layers_.size()) throw ShapeError("parameter list does not match layer list");
    for (size_t i = 0; i < layers_.size(); ++i) {
      const auto [w, b] = expected_param_shapes(layers_[i].kind);
      if (w.empty()) {
        if (!params_[i].empty()) throw ShapeError("layer " + std::to_string(i) + " takes no parameters");
        continue;
      }
      if (params_[i].weight.shape() != w || params_[i].bias.shape() != b)
        throw ShapeError("layer " + std::to_string(i) + " parameters have shape " +
                         shape_string(params_[i].weight.shape()) + "/" + shape_string(params_[i].bias.shape()) +
                         ", expected " + shape_string(w) + "/" + shape_string(b));
    }
  }

 public:
  static std::pair<Shape, Shape> expected_param_shapes(const LayerKind& kind) {
    if (const auto* c = std::get_if<Conv>(&kind))
      return {{c->out_channels, c->in_channels, c->kernel_size, c->kernel_size}, {c->out_channels}};
    if (const auto* d = std::get_if<Dense>(&kind)) return {{d->out_features, d->in_features}, {d->out_features}};
    return {};
  }

 private:
  InputShape input_;
  std::vector<LayerSpec> layers_;
  std::vector<int> class_scores_;
  std::vector<Params> params_;
  std::vector<Shape> shapes_;
};

using Network = BasicNetwork<float>;

namespace detail {

// He fan-in initialization: weights ~ N(0, 2 / fan_in), zero bias.
template <typename Scalar>
LayerParams<Scalar> he_init(const LayerKind& kind, std::mt19937_64& rng) {
  auto [wshape, bshape] = BasicNetwork<Scalar>::expected_param_shapes(kind);
  LayerParams<Scalar> p;
  if (wshape.empty()) return p;
  const Index fan_in = shape_size(wshape) / wshape[0];
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  p.weight = BasicTensor<Scalar>(wshape);
  for (Index i = 0; i < p.weight.size(); ++i) p.weight[i] = static_cast<Scalar>(normal(rng));
  p.bias = BasicTensor<Scalar>(bshape);
  return p;
}

}  // namespace detail

// Builds a network with seeded He initialization. Identical arguments give
// bit-identical parameters.
template <typename Scalar = float>
BasicNetwork<Scalar> build_network(InputShape input, std::vector<LayerSpec> specs, std::vector<int> class_scores,
                                   std::uint64_t seed) {
  // Validate the architecture before drawing any random numbers.
  std::vector<LayerParams<Scalar>> zero;
  for (const auto& s : specs) {
    auto [w, b] = BasicNetwork<Scalar>::expected_param_shapes(s.kind);
    LayerParams<Scalar> p;
    if (!w.empty()) {
      bool ok = true;
      for (Index d : w) ok = ok && d >= 1;
      for (Index d : b) ok = ok && d >= 1;
      if (ok) {
        p.weight = BasicTensor<Scalar>(w);
        p.bias = BasicTensor<Scalar>(b);
      }
    }
    zero.push_back(std::move(p));
  }
  BasicNetwork<Scalar> net(input, specs, class_scores, std::move(zero));

  std::mt19937_64 rng(seed);
  for (size_t i = 0; i < specs.size(); ++i) net.params(i) = detail::he_init<Scalar>(specs[i].kind, rng);
  return net;
}

// Swaps the final Dense layer for a freshly initialized one sized to
// new_class_scores. Every earlier parameter is copied unchanged.
template <typename Scalar>
BasicNetwork<Scalar> replace_head(const BasicNetwork<Scalar>& net, std::vector<int> new_class_scores,
                                  std::uint64_t seed) {
  std::vector<LayerSpec> layers = net.layers();
  auto& head = std::get<Dense>(layers.back().kind);
  head.out_features = static_cast<Index>(new_class_scores.size());
  layers.back().trainable = true;

  std::vector<LayerParams<Scalar>> params = net.params();
  std::mt19937_64 rng(seed);
  params.back() = detail::he_init<Scalar>(layers.back().kind, rng);
  return BasicNetwork<Scalar>(net.input_shape(), std::move(layers), std::move(new_class_scores), std::move(params));
}

}  // namespace reptrain
