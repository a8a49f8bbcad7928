#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. They are deliberately naive and share no code with the library
// beyond its plain data types.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <span>
#include <vector>

#include "reptrain/dataset.hpp"
#include "reptrain/highlight.hpp"
#include "reptrain/nn/propagation.hpp"
#include "reptrain/trainer.hpp"

namespace oracle {

using namespace reptrain;

// Direct-loop convolution of one C x H x W image (row-major) with a
// [out, in, k, k] kernel.
inline std::vector<double> conv2d(const std::vector<double>& image, Index c, Index h, Index w,
                                  const std::vector<double>& weight, const std::vector<double>& bias, const Conv& spec,
                                  Index& out_h, Index& out_w) {
  const Index k = spec.kernel_size;
  out_h = (h + 2 * spec.padding - k) / spec.stride + 1;
  out_w = (w + 2 * spec.padding - k) / spec.stride + 1;
  std::vector<double> out(static_cast<size_t>(spec.out_channels * out_h * out_w));
  for (Index o = 0; o < spec.out_channels; ++o)
    for (Index y = 0; y < out_h; ++y)
      for (Index x = 0; x < out_w; ++x) {
        double acc = bias[static_cast<size_t>(o)];
        for (Index i = 0; i < c; ++i)
          for (Index ky = 0; ky < k; ++ky)
            for (Index kx = 0; kx < k; ++kx) {
              const Index iy = y * spec.stride + ky - spec.padding;
              const Index ix = x * spec.stride + kx - spec.padding;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              acc += weight[static_cast<size_t>(((o * c + i) * k + ky) * k + kx)] *
                     image[static_cast<size_t>((i * h + iy) * w + ix)];
            }
        out[static_cast<size_t>((o * out_h + y) * out_w + x)] = acc;
      }
  return out;
}

// Brute-force drop-out filter written directly from the three conditions.
inline std::vector<int> dropouts(const LikelihoodTable& table, std::span<const int> labels, double k1, double k2,
                                 bool literal) {
  std::map<int, int> counts;
  for (int l : labels) ++counts[l];
  std::vector<std::pair<int, int>> order;  // (-count, score)
  for (const auto& [s, n] : counts) order.emplace_back(-n, s);
  std::sort(order.begin(), order.end());
  const int s1 = order.size() > 0 ? order[0].second : -1;
  const int s2 = order.size() > 1 ? order[1].second : -1;
  const int s3 = order.size() > 2 ? order[2].second : -1;
  auto column = [&](int score) {
    for (size_t c = 0; c < table.class_scores.size(); ++c)
      if (table.class_scores[c] == score) return c;
    return table.class_scores.size();
  };
  std::vector<int> out;
  for (size_t i = 0; i < table.rows.size(); ++i) {
    const auto& fc = table.rows[i].fc;
    const int label = labels[i];
    bool drop = false;
    if (label == s1) drop = fc[column(s1)] < k1;
    if (label == s2) drop = fc[column(literal ? s1 : s2)] < k2;
    if (label == s3) drop = fc[column(literal ? s1 : s3)] < k2;
    if (drop) out.push_back(table.rows[i].id);
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct GridChoice {
  double k1 = 0, k2 = 0;
  long gap = 0;
};

// Exhaustive grid recomputation: K values are generated as lo + i * step and
// scanned in ascending order, so the first strict improvement wins ties.
inline GridChoice best_thresholds(const LikelihoodTable& table, std::span<const int> labels, double lo, double hi,
                                  double step, double fraction, bool literal) {
  const int steps = static_cast<int>(std::lround((hi - lo) / step));
  const double target = fraction * static_cast<double>(table.rows.size());
  GridChoice best;
  double best_gap = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= steps; ++i)
    for (int j = 0; j <= steps; ++j) {
      const double k1 = lo + i * step, k2 = lo + j * step;
      const double remaining =
          static_cast<double>(table.rows.size() - dropouts(table, labels, k1, k2, literal).size());
      const double gap = std::abs(remaining - target);
      if (gap < best_gap) {
        best_gap = gap;
        best = {k1, k2, static_cast<long>(remaining)};
      }
    }
  return best;
}

// Pearson correlation by the textbook two-pass formula in long double.
inline double pearson(const Tensor& a, const Tensor& b) {
  const Index n = a.size();
  long double ma = 0, mb = 0;
  for (Index i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  long double sab = 0, saa = 0, sbb = 0;
  for (Index i = 0; i < n; ++i) {
    const long double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0 || sbb == 0) return 0.0;
  return static_cast<double>(sab / std::sqrt(saa * sbb));
}

inline size_t min_corr(const std::vector<Tensor>& later, const std::vector<Tensor>& earlier) {
  size_t best = 0;
  double best_r = std::numeric_limits<double>::infinity();
  for (size_t j = 0; j < later.size(); ++j) {
    const double r = pearson(later[j], earlier[j]);
    if (r < best_r) {
      best_r = r;
      best = j;
    }
  }
  return best;
}

// Within-cluster sum of squares of a two-way partition, summed in index order.
inline double partition_sse(const std::vector<double>& v, const std::vector<bool>& high) {
  double sum[2] = {0, 0};
  double n[2] = {0, 0};
  for (size_t i = 0; i < v.size(); ++i) {
    sum[high[i]] += v[i];
    n[high[i]] += 1;
  }
  const double mean[2] = {n[0] ? sum[0] / n[0] : 0.0, n[1] ? sum[1] / n[1] : 0.0};
  double sse = 0;
  for (size_t i = 0; i < v.size(); ++i) sse += (v[i] - mean[high[i]]) * (v[i] - mean[high[i]]);
  return sse;
}

// Global optimum of 1-D 2-means: the clusters of an optimal partition are
// separated by a threshold, so every cut between consecutive distinct sorted
// values is tried.
inline double best_two_cluster_sse(const std::vector<double>& v) {
  std::vector<double> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  double best = std::numeric_limits<double>::infinity();
  std::vector<bool> high(v.size());
  for (size_t cut = 1; cut < sorted.size(); ++cut) {
    if (sorted[cut] == sorted[cut - 1]) continue;
    for (size_t i = 0; i < v.size(); ++i) high[i] = v[i] >= sorted[cut];
    best = std::min(best, partition_sse(v, high));
  }
  return best;
}

// Relative error with a small absolute floor so that two gradients that are
// both numerically zero compare as equal.
inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

struct GradCheckResult {
  double max_rel_error = 0;
  size_t checked = 0;
  size_t skipped_at_kink = 0;
};

// Activation pattern (ReLU signs and max-pool routing) of a forward pass; a
// central difference is only meaningful when it does not change.
inline std::vector<std::vector<Index>> activation_pattern(const BasicNetwork<double>& net,
                                                          const BasicActivations<double>& acts) {
  std::vector<std::vector<Index>> pattern;
  for (size_t li = 0; li < net.num_layers(); ++li) {
    if (std::holds_alternative<ReLU>(net.layers()[li].kind)) {
      const auto& pre = li == 0 ? acts.input : acts.outputs[li - 1];
      std::vector<Index> signs(static_cast<size_t>(pre.size()));
      for (Index i = 0; i < pre.size(); ++i) signs[static_cast<size_t>(i)] = pre[i] > 0;
      pattern.push_back(std::move(signs));
    }
    if (std::holds_alternative<MaxPool>(net.layers()[li].kind)) pattern.push_back(acts.pool_argmax[li]);
  }
  return pattern;
}

// Central finite differences of mean cross-entropy for every parameter.
inline GradCheckResult check_gradients(BasicNetwork<double> net, const BasicTensor<double>& batch,
                                       const std::vector<int>& targets, double eps = 1e-6) {
  GradCheckResult result;
  const auto acts = forward(net, batch);
  const auto grads = backward(net, acts, targets);
  for (size_t li = 0; li < net.num_layers(); ++li) {
    if (!has_params(net.layers()[li].kind)) continue;
    for (int which = 0; which < 2; ++which) {
      auto& param = which == 0 ? net.params(li).weight : net.params(li).bias;
      const auto& analytic = which == 0 ? grads.layers[li].weight : grads.layers[li].bias;
      for (Index i = 0; i < param.size(); ++i) {
        const double saved = param[i];
        param[i] = saved + eps;
        const auto plus = forward(net, batch);
        param[i] = saved - eps;
        const auto minus = forward(net, batch);
        param[i] = saved;
        if (activation_pattern(net, plus) != activation_pattern(net, minus)) {
          ++result.skipped_at_kink;
          continue;
        }
        const double numeric = (cross_entropy(plus, targets) - cross_entropy(minus, targets)) / (2 * eps);
        result.max_rel_error = std::max(result.max_rel_error, relative_error(analytic[i], numeric));
        ++result.checked;
      }
    }
  }
  return result;
}

// A small random network on 8x8 inputs: two conv blocks and a dense head.
inline BasicNetwork<double> random_small_network(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Index c_in = 1 + static_cast<Index>(rng() % 3);
  const Index c1 = 2 + static_cast<Index>(rng() % 3);
  const Index c2 = 2 + static_cast<Index>(rng() % 3);
  const Index classes = 2 + static_cast<Index>(rng() % 4);
  const Index k1 = rng() % 2 ? 3 : 5;
  std::vector<LayerSpec> specs{
      {Conv{c_in, c1, k1, 1, k1 / 2}}, {ReLU{}}, {MaxPool{2, 2}},  {Conv{c1, c2, 3, 1, 1}},
      {ReLU{}},                        {Flatten{}}, {Dense{c2 * 16, 6}}, {ReLU{}},
      {Dense{6, classes}},
  };
  std::vector<int> scores;
  for (Index i = 0; i < classes; ++i) scores.push_back(static_cast<int>(i + 1));
  auto net = build_network<double>({c_in, 8, 8}, specs, scores, seed);
  // Non-zero biases exercise the bias gradients.
  std::normal_distribution<double> normal(0.0, 0.1);
  for (size_t li = 0; li < net.num_layers(); ++li)
    if (has_params(net.layers()[li].kind))
      for (Index i = 0; i < net.params(li).bias.size(); ++i) net.params(li).bias[i] = normal(rng);
  return net;
}

}  // namespace oracle
