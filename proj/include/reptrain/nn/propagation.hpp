#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "reptrain/nn/network.hpp"

namespace reptrain {

// Everything a forward pass produced: the input batch, one output tensor per
// layer (batch-major), the softmax probabilities, and the max-pool routing
// needed by backward.
template <typename Scalar>
struct BasicActivations {
  BasicTensor<Scalar> input;
  std::vector<BasicTensor<Scalar>> outputs;
  BasicTensor<Scalar> probabilities;  // [B, N]
  std::vector<std::vector<Index>> pool_argmax;

  Index batch_size() const { return input.dim(0); }
  const BasicTensor<Scalar>& logits() const { return outputs.back(); }
};

template <typename Scalar>
struct BasicGradients {
  // Empty entries for frozen or parameter-free layers.
  std::vector<LayerParams<Scalar>> layers;
  double loss = 0.0;
};

using Activations = BasicActivations<float>;
using Gradients = BasicGradients<float>;

namespace detail {

template <typename Scalar>
using ColMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using MatrixMap = Eigen::Map<ColMatrix<Scalar>>;
template <typename Scalar>
using ConstMatrixMap = Eigen::Map<const ColMatrix<Scalar>>;

// Patch matrix of one C x H x W image: rows are output pixels (row-major
// scan), columns are (channel, ky, kx) taps. Out-of-bounds taps read zero.
template <typename Scalar>
void im2col(const Scalar* image, const Shape& in, const Conv& c, Index out_h, Index out_w, ColMatrix<Scalar>& cols) {
  const Index h = in[1], w = in[2], k = c.kernel_size;
  cols.resize(out_h * out_w, in[0] * k * k);
  for (Index ch = 0; ch < in[0]; ++ch)
    for (Index ky = 0; ky < k; ++ky)
      for (Index kx = 0; kx < k; ++kx) {
        Scalar* col = cols.col((ch * k + ky) * k + kx).data();
        const Scalar* plane = image + ch * h * w;
        for (Index oy = 0; oy < out_h; ++oy) {
          const Index iy = oy * c.stride - c.padding + ky;
          for (Index ox = 0; ox < out_w; ++ox) {
            const Index ix = ox * c.stride - c.padding + kx;
            *col++ = (iy >= 0 && iy < h && ix >= 0 && ix < w) ? plane[iy * w + ix] : Scalar(0);
          }
        }
      }
}

template <typename Scalar>
void col2im_add(const ColMatrix<Scalar>& cols, const Shape& in, const Conv& c, Index out_h, Index out_w,
                Scalar* image) {
  const Index h = in[1], w = in[2], k = c.kernel_size;
  for (Index ch = 0; ch < in[0]; ++ch)
    for (Index ky = 0; ky < k; ++ky)
      for (Index kx = 0; kx < k; ++kx) {
        const Scalar* col = cols.col((ch * k + ky) * k + kx).data();
        Scalar* plane = image + ch * h * w;
        for (Index oy = 0; oy < out_h; ++oy) {
          const Index iy = oy * c.stride - c.padding + ky;
          for (Index ox = 0; ox < out_w; ++ox, ++col) {
            const Index ix = ox * c.stride - c.padding + kx;
            if (iy >= 0 && iy < h && ix >= 0 && ix < w) plane[iy * w + ix] += *col;
          }
        }
      }
}

template <typename Scalar>
BasicTensor<Scalar> batched(Index batch, const Shape& sample) {
  Shape s{batch};
  s.insert(s.end(), sample.begin(), sample.end());
  return BasicTensor<Scalar>(std::move(s));
}

}  // namespace detail

// Softmax over the rows of a [B, N] logit tensor, evaluated in double.
template <typename Scalar>
BasicTensor<Scalar> softmax_rows(const BasicTensor<Scalar>& logits) {
  BasicTensor<Scalar> out(logits.shape());
  const Index rows = logits.dim(0), cols = logits.dim(1);
  for (Index r = 0; r < rows; ++r) {
    double top = -std::numeric_limits<double>::infinity();
    for (Index c = 0; c < cols; ++c) top = std::max(top, static_cast<double>(logits(r, c)));
    double sum = 0.0;
    for (Index c = 0; c < cols; ++c) sum += std::exp(static_cast<double>(logits(r, c)) - top);
    for (Index c = 0; c < cols; ++c)
      out(r, c) = static_cast<Scalar>(std::exp(static_cast<double>(logits(r, c)) - top) / sum);
  }
  return out;
}

// Runs a batch [B, C, H, W] through the network.
template <typename Scalar>
BasicActivations<Scalar> forward(const BasicNetwork<Scalar>& net, const BasicTensor<Scalar>& batch) {
  using namespace detail;
  Shape expected = net.sample_shape();
  Shape actual(batch.shape().begin() + std::min<size_t>(1, batch.shape().size()), batch.shape().end());
  if (batch.rank() != 4 || actual != expected)
    throw ShapeError("forward: expected batch of " + shape_string(expected) + ", got " + shape_string(batch.shape()));

  BasicActivations<Scalar> acts;
  acts.input = batch;
  acts.pool_argmax.resize(net.num_layers());
  const Index bsz = batch.dim(0);
  const auto& shapes = net.output_shapes();
  ColMatrix<Scalar> cols;

  const BasicTensor<Scalar>* x = &acts.input;
  Shape in_shape = expected;
  for (size_t li = 0; li < net.num_layers(); ++li) {
    const LayerKind& kind = net.layers()[li].kind;
    const Shape& out_shape = shapes[li];
    BasicTensor<Scalar> y = batched<Scalar>(bsz, out_shape);
    const Index in_n = shape_size(in_shape), out_n = shape_size(out_shape);

    if (const auto* c = std::get_if<Conv>(&kind)) {
      const auto& p = net.params(li);
      const Index k_taps = c->in_channels * c->kernel_size * c->kernel_size;
      ConstMatrixMap<Scalar> wt(p.weight.data(), k_taps, c->out_channels);
      auto bias = p.bias.values().transpose();
      for (Index b = 0; b < bsz; ++b) {
        im2col(x->data() + b * in_n, in_shape, *c, out_shape[1], out_shape[2], cols);
        MatrixMap<Scalar> out(y.data() + b * out_n, out_shape[1] * out_shape[2], c->out_channels);
        out.noalias() = cols * wt;
        out.rowwise() += bias;
      }
    } else if (std::holds_alternative<ReLU>(kind)) {
      y.values() = x->values().cwiseMax(Scalar(0));
    } else if (const auto* pool = std::get_if<MaxPool>(&kind)) {
      auto& route = acts.pool_argmax[li];
      route.resize(static_cast<size_t>(y.size()));
      const Index h = in_shape[1], w = in_shape[2], oh = out_shape[1], ow = out_shape[2];
      Index o = 0;
      for (Index b = 0; b < bsz; ++b)
        for (Index ch = 0; ch < in_shape[0]; ++ch) {
          const Index base = b * in_n + ch * h * w;
          for (Index oy = 0; oy < oh; ++oy)
            for (Index ox = 0; ox < ow; ++ox, ++o) {
              Index best = base + (oy * pool->stride) * w + ox * pool->stride;
              for (Index dy = 0; dy < pool->window; ++dy)
                for (Index dx = 0; dx < pool->window; ++dx) {
                  const Index idx = base + (oy * pool->stride + dy) * w + ox * pool->stride + dx;
                  if ((*x)[idx] > (*x)[best]) best = idx;
                }
              route[static_cast<size_t>(o)] = best;
              y[o] = (*x)[best];
            }
        }
    } else if (std::holds_alternative<Flatten>(kind)) {
      y.values() = x->values();
    } else {
      const auto& d = std::get<Dense>(kind);
      const auto& p = net.params(li);
      ConstMatrixMap<Scalar> wt(p.weight.data(), d.in_features, d.out_features);
      ConstMatrixMap<Scalar> in(x->data(), d.in_features, bsz);
      MatrixMap<Scalar> out(y.data(), d.out_features, bsz);
      out.noalias() = wt.transpose() * in;
      out.colwise() += p.bias.values();
    }
    acts.outputs.push_back(std::move(y));
    x = &acts.outputs.back();
    in_shape = out_shape;
  }
  if (!acts.logits().all_finite()) throw NumericError("forward: non-finite logits");
  acts.probabilities = softmax_rows(acts.logits());
  return acts;
}

// Mean cross-entropy of the batch against target class indices.
template <typename Scalar>
double cross_entropy(const BasicActivations<Scalar>& acts, std::span<const int> targets) {
  const auto& logits = acts.logits();
  const Index n = logits.dim(1);
  double total = 0.0;
  for (Index r = 0; r < logits.dim(0); ++r) {
    double top = -std::numeric_limits<double>::infinity();
    for (Index c = 0; c < n; ++c) top = std::max(top, static_cast<double>(logits(r, c)));
    double sum = 0.0;
    for (Index c = 0; c < n; ++c) sum += std::exp(static_cast<double>(logits(r, c)) - top);
    total += top + std::log(sum) - static_cast<double>(logits(r, targets[static_cast<size_t>(r)]));
  }
  return total / static_cast<double>(logits.dim(0));
}

// Backpropagates mean cross-entropy. Frozen layers get no gradient entries;
// propagation stops once no trainable layer remains upstream.
template <typename Scalar>
BasicGradients<Scalar> backward(const BasicNetwork<Scalar>& net, const BasicActivations<Scalar>& acts,
                                std::span<const int> targets) {
  using namespace detail;
  const Index bsz = acts.batch_size();
  if (static_cast<Index>(targets.size()) != bsz)
    throw ShapeError("backward: " + std::to_string(targets.size()) + " targets for a batch of " + std::to_string(bsz));
  if (acts.outputs.size() != net.num_layers()) throw ShapeError("backward: activations do not match network");
  for (int t : targets)
    if (t < 0 || t >= net.num_classes())
      throw ConfigError("target class " + std::to_string(t) + " out of range [0, " +
                        std::to_string(net.num_classes()) + ")");

  BasicGradients<Scalar> grads;
  grads.layers.resize(net.num_layers());
  grads.loss = cross_entropy(acts, targets);

  size_t first_trainable = net.num_layers();
  for (size_t li = 0; li < net.num_layers(); ++li)
    if (net.trainable(li) && has_params(net.layers()[li].kind)) {
      first_trainable = li;
      break;
    }
  if (first_trainable == net.num_layers()) return grads;

  // dL/dlogits = (p - onehot) / B
  BasicTensor<Scalar> delta = acts.probabilities;
  for (Index r = 0; r < bsz; ++r) delta(r, targets[static_cast<size_t>(r)]) -= Scalar(1);
  delta.values() /= static_cast<Scalar>(bsz);

  const auto& shapes = net.output_shapes();
  ColMatrix<Scalar> cols, dcols;
  for (size_t li = net.num_layers(); li-- > first_trainable;) {
    const LayerKind& kind = net.layers()[li].kind;
    const BasicTensor<Scalar>& x = li == 0 ? acts.input : acts.outputs[li - 1];
    const Shape in_shape = li == 0 ? net.sample_shape() : shapes[li - 1];
    const Shape& out_shape = shapes[li];
    const Index in_n = shape_size(in_shape), out_n = shape_size(out_shape);
    const bool need_input_grad = li > first_trainable;
    const bool want_params = net.trainable(li);
    BasicTensor<Scalar> dx;
    if (need_input_grad) dx = BasicTensor<Scalar>(x.shape());

    if (const auto* c = std::get_if<Conv>(&kind)) {
      const auto& p = net.params(li);
      const Index k_taps = c->in_channels * c->kernel_size * c->kernel_size;
      ConstMatrixMap<Scalar> wt(p.weight.data(), k_taps, c->out_channels);
      LayerParams<Scalar> g;
      if (want_params) {
        g.weight = BasicTensor<Scalar>(p.weight.shape());
        g.bias = BasicTensor<Scalar>(p.bias.shape());
      }
      MatrixMap<Scalar> dw(want_params ? g.weight.data() : nullptr, k_taps, c->out_channels);
      for (Index b = 0; b < bsz; ++b) {
        ConstMatrixMap<Scalar> dout(delta.data() + b * out_n, out_shape[1] * out_shape[2], c->out_channels);
        if (want_params) {
          im2col(x.data() + b * in_n, in_shape, *c, out_shape[1], out_shape[2], cols);
          dw.noalias() += cols.transpose() * dout;
          g.bias.values() += dout.colwise().sum().transpose();
        }
        if (need_input_grad) {
          dcols.noalias() = dout * wt.transpose();
          col2im_add(dcols, in_shape, *c, out_shape[1], out_shape[2], dx.data() + b * in_n);
        }
      }
      grads.layers[li] = std::move(g);
    } else if (std::holds_alternative<ReLU>(kind)) {
      if (need_input_grad) {
        const auto& y = acts.outputs[li];
        dx.values() = (y.values().array() > Scalar(0)).select(delta.values(), Scalar(0));
      }
    } else if (std::holds_alternative<MaxPool>(kind)) {
      if (need_input_grad) {
        const auto& route = acts.pool_argmax[li];
        for (Index o = 0; o < delta.size(); ++o) dx[route[static_cast<size_t>(o)]] += delta[o];
      }
    } else if (std::holds_alternative<Flatten>(kind)) {
      if (need_input_grad) dx.values() = delta.values();
    } else {
      const auto& d = std::get<Dense>(kind);
      const auto& p = net.params(li);
      ConstMatrixMap<Scalar> dy(delta.data(), d.out_features, bsz);
      if (want_params) {
        LayerParams<Scalar> g{BasicTensor<Scalar>(p.weight.shape()), BasicTensor<Scalar>(p.bias.shape())};
        ConstMatrixMap<Scalar> in(x.data(), d.in_features, bsz);
        MatrixMap<Scalar>(g.weight.data(), d.in_features, d.out_features).noalias() = in * dy.transpose();
        g.bias.values() = dy.rowwise().sum();
        grads.layers[li] = std::move(g);
      }
      if (need_input_grad) {
        ConstMatrixMap<Scalar> wt(p.weight.data(), d.in_features, d.out_features);
        MatrixMap<Scalar>(dx.data(), d.in_features, bsz).noalias() = wt * dy;
      }
    }
    if (!need_input_grad) break;
    delta = std::move(dx);
  }
  return grads;
}

}  // namespace reptrain
