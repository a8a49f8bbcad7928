#pragma once

#include <cmath>
#include <vector>

#include "reptrain/nn/propagation.hpp"

namespace reptrain {

// How per-class likelihoods are read off the head.
enum class LikelihoodMode {
  Sigmoid,  // sigmoid of each pre-softmax logit (default)
  Softmax,  // softmax probability
};

// Converts an H x W x C image into a single-sample [1, C, H, W] batch.
template <typename Scalar>
BasicTensor<Scalar> image_to_batch(const BasicTensor<Scalar>& image) {
  if (image.rank() != 3) throw ShapeError("expected an H x W x C image, got " + shape_string(image.shape()));
  const Index h = image.dim(0), w = image.dim(1), c = image.dim(2);
  BasicTensor<Scalar> batch({1, c, h, w});
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x)
      for (Index ch = 0; ch < c; ++ch) batch[(ch * h + y) * w + x] = image(y, x, ch);
  return batch;
}

// Copies H x W x C images into slots of an existing [B, C, H, W] batch.
template <typename Scalar>
void write_batch_slot(BasicTensor<Scalar>& batch, Index slot, const BasicTensor<Scalar>& image) {
  const Index h = image.dim(0), w = image.dim(1), c = image.dim(2);
  if (batch.dim(1) != c || batch.dim(2) != h || batch.dim(3) != w)
    throw ShapeError("image " + shape_string(image.shape()) + " does not fit batch " + shape_string(batch.shape()));
  Scalar* out = batch.data() + slot * c * h * w;
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x)
      for (Index ch = 0; ch < c; ++ch) out[(ch * h + y) * w + x] = image(y, x, ch);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Output maps of the first Conv layer for one image, one [H, W] tensor per
// channel. With post_activation the following ReLU (if any) is applied.
template <typename Scalar>
std::vector<BasicTensor<Scalar>> conv1_feature_maps(const BasicNetwork<Scalar>& net, const BasicTensor<Scalar>& image,
                                                    bool post_activation = true) {
  size_t conv = net.num_layers();
  for (size_t i = 0; i < net.num_layers(); ++i)
    if (std::holds_alternative<Conv>(net.layers()[i].kind)) {
      conv = i;
      break;
    }
  if (conv == net.num_layers()) throw ShapeError("network has no Conv layer");

  auto acts = forward(net, image_to_batch(image));
  size_t pick = conv;
  if (post_activation && conv + 1 < net.num_layers() && std::holds_alternative<ReLU>(net.layers()[conv + 1].kind))
    pick = conv + 1;
  const auto& out = acts.outputs[pick];
  const Index channels = out.dim(1), h = out.dim(2), w = out.dim(3);
  std::vector<BasicTensor<Scalar>> maps;
  maps.reserve(static_cast<size_t>(channels));
  for (Index ch = 0; ch < channels; ++ch)
    maps.emplace_back(Shape{h, w}, out.values().segment(ch * h * w, h * w));
  return maps;
}

// Per-class likelihoods for a single image: values in (0, 1), one per class.
template <typename Scalar>
std::vector<double> fc_likelihoods(const BasicNetwork<Scalar>& net, const BasicTensor<Scalar>& image,
                                   LikelihoodMode mode = LikelihoodMode::Sigmoid) {
  auto acts = forward(net, image_to_batch(image));
  std::vector<double> out(static_cast<size_t>(net.num_classes()));
  for (Index n = 0; n < net.num_classes(); ++n)
    out[static_cast<size_t>(n)] = mode == LikelihoodMode::Sigmoid ? sigmoid(acts.logits()(0, n))
                                                                  : static_cast<double>(acts.probabilities(0, n));
  return out;
}

// Index of the largest softmax probability in row r; ties go to the lowest index.
template <typename Scalar>
Index argmax_row(const BasicTensor<Scalar>& probs, Index r) {
  Index best = 0;
  for (Index c = 1; c < probs.dim(1); ++c)
    if (probs(r, c) > probs(r, best)) best = c;
  return best;
}

}  // namespace reptrain
