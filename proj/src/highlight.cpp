#include "reptrain/highlight.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "reptrain/checkpoint.hpp"

namespace reptrain {
namespace {

bool is_constant(const Tensor& t) {
  return t.size() == 0 || (t.values().array() == t[0]).all();
}

void check_stacks(const std::vector<Tensor>& later, const std::vector<Tensor>& earlier) {
  if (later.size() != earlier.size())
    throw ShapeError("channel counts differ: " + std::to_string(later.size()) + " vs " +
                     std::to_string(earlier.size()));
  if (later.empty()) throw ShapeError("no feature maps to compare");
  for (size_t j = 0; j < later.size(); ++j)
    if (later[j].shape() != earlier[j].shape() || later[j].shape() != later[0].shape())
      throw ShapeError("feature map " + std::to_string(j) + " shapes differ");
}

}  // namespace

double pearson_correlation(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("correlation of maps with different shapes");
  if (is_constant(a) || is_constant(b)) return kZeroVarianceCorrelation;
  const Eigen::ArrayXd x = a.values().cast<double>().array();
  const Eigen::ArrayXd y = b.values().cast<double>().array();
  const Eigen::ArrayXd dx = x - x.mean();
  const Eigen::ArrayXd dy = y - y.mean();
  const double sxx = dx.square().sum(), syy = dy.square().sum();
  if (sxx <= 0.0 || syy <= 0.0) return kZeroVarianceCorrelation;
  return std::clamp((dx * dy).sum() / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> channel_correlations(const std::vector<Tensor>& later, const std::vector<Tensor>& earlier) {
  check_stacks(later, earlier);
  std::vector<double> out;
  out.reserve(later.size());
  for (size_t j = 0; j < later.size(); ++j) out.push_back(pearson_correlation(later[j], earlier[j]));
  return out;
}

size_t min_corr_index(const std::vector<Tensor>& later, const std::vector<Tensor>& earlier) {
  const auto corr = channel_correlations(later, earlier);
  return static_cast<size_t>(std::min_element(corr.begin(), corr.end()) - corr.begin());
}

DifferenceMap difference_map(const std::vector<Tensor>& later, const std::vector<Tensor>& earlier, size_t channel) {
  check_stacks(later, earlier);
  if (channel >= later.size()) throw ShapeError("channel index " + std::to_string(channel) + " out of range");
  const Tensor& a = later[channel];
  const Tensor& b = earlier[channel];
  DifferenceMap d;
  d.channel = channel;
  d.values.resize(a.dim(0), a.dim(1));
  for (Index i = 0; i < a.size(); ++i)
    d.values.data()[i] = static_cast<double>(a[i]) - static_cast<double>(b[i]);
  return d;
}

HighlightMask two_means(const DifferenceMap& diff, bool signed_values) {
  const Index n = diff.values.size();
  if (n == 0) throw ShapeError("two_means of an empty map");
  Eigen::ArrayXd v = Eigen::Map<const Eigen::ArrayXd>(diff.values.data(), n);
  if (!signed_values) v = v.abs();

  HighlightMask out;
  out.mask = Mask::Zero(diff.values.rows(), diff.values.cols());
  double lo = v.minCoeff(), hi = v.maxCoeff();
  if (hi - lo < 1e-9) {
    out.low_centroid = out.high_centroid = v.mean();
    return out;
  }

  // In 1-D the optimal two-cluster partition is a threshold on the sorted
  // values, so every cut is scored from prefix sums. The optimum is also a
  // fixpoint of Lloyd iteration, which on its own can stall in a worse one.
  std::vector<double> sorted(v.data(), v.data() + n);
  std::sort(sorted.begin(), sorted.end());
  std::vector<long double> prefix(sorted.size() + 1, 0), prefix_sq(sorted.size() + 1, 0);
  for (size_t i = 0; i < sorted.size(); ++i) {
    prefix[i + 1] = prefix[i] + sorted[i];
    prefix_sq[i + 1] = prefix_sq[i] + static_cast<long double>(sorted[i]) * sorted[i];
  }
  auto sse = [&](size_t from, size_t to) {
    const long double s = prefix[to] - prefix[from], cnt = static_cast<long double>(to - from);
    return prefix_sq[to] - prefix_sq[from] - s * s / cnt;
  };
  size_t best_cut = 0;
  long double best = 0;
  for (size_t cut = 1; cut < sorted.size(); ++cut) {
    if (sorted[cut] == sorted[cut - 1]) continue;
    const long double total = sse(0, cut) + sse(cut, sorted.size());
    if (best_cut == 0 || total < best) {
      best = total;
      best_cut = cut;
    }
  }
  const double threshold = sorted[best_cut];
  lo = static_cast<double>((prefix[best_cut]) / static_cast<long double>(best_cut));
  hi = static_cast<double>((prefix[sorted.size()] - prefix[best_cut]) / static_cast<long double>(sorted.size() - best_cut));
  std::vector<std::uint8_t> assign(static_cast<size_t>(n), 0);
  for (Index i = 0; i < n; ++i) assign[static_cast<size_t>(i)] = v[i] >= threshold ? 1 : 0;

  // In signed mode the highlight is the cluster with the larger mean magnitude.
  std::uint8_t highlight = 1;
  if (signed_values) {
    double mag_lo = 0, mag_hi = 0;
    Index n_lo = 0, n_hi = 0;
    for (Index i = 0; i < n; ++i) {
      const double m = std::abs(v[i]);
      if (assign[static_cast<size_t>(i)]) {
        mag_hi += m;
        ++n_hi;
      } else {
        mag_lo += m;
        ++n_lo;
      }
    }
    if (n_lo > 0 && n_hi > 0 && mag_lo / static_cast<double>(n_lo) > mag_hi / static_cast<double>(n_hi)) {
      highlight = 0;
      std::swap(lo, hi);
    }
  }
  for (Index i = 0; i < n; ++i) out.mask.data()[i] = assign[static_cast<size_t>(i)] == highlight ? 1 : 0;
  out.low_centroid = lo;
  out.high_centroid = hi;
  return out;
}

HighlightResult extract_highlight_pair(const Network& later, int later_iteration, const Network& earlier,
                                       int earlier_iteration, const Tensor& image, const HighlightConfig& cfg) {
  const auto maps_later = conv1_feature_maps(later, image, cfg.use_post_activation);
  const auto maps_earlier = conv1_feature_maps(earlier, image, cfg.use_post_activation);
  HighlightResult r;
  r.correlations = channel_correlations(maps_later, maps_earlier);
  const auto j = static_cast<size_t>(std::min_element(r.correlations.begin(), r.correlations.end()) -
                                     r.correlations.begin());
  r.diff = difference_map(maps_later, maps_earlier, j);
  r.diff.later_iteration = later_iteration;
  r.diff.earlier_iteration = earlier_iteration;
  r.mask = two_means(r.diff, cfg.signed_clustering);
  return r;
}

HighlightResult extract_highlight(const TrainRun& run, const Tensor& image, const HighlightConfig& cfg) {
  if (cfg.k < 1) throw ConfigError("highlight gap k must be at least 1");
  if (run.size() < static_cast<size_t>(cfg.k) + 1)
    throw ConfigError("highlight needs at least " + std::to_string(cfg.k + 1) + " checkpoints, run has " +
                      std::to_string(run.size()));
  const Checkpoint& later = run.checkpoints.back();
  const Checkpoint& earlier = run.checkpoints[run.size() - 1 - static_cast<size_t>(cfg.k)];
  return extract_highlight_pair(later.net, static_cast<int>(later.iteration), earlier.net,
                                static_cast<int>(earlier.iteration), image, cfg);
}

double mask_iou(const Mask& a, const Mask& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("IoU of masks with different shapes");
  const auto inter = ((a != 0) && (b != 0)).count();
  const auto uni = ((a != 0) || (b != 0)).count();
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

Image8 render_overlay_image(const Tensor& image, const DifferenceMap& diff, const HighlightMask& mask) {
  const Index h = image.dim(0), w = image.dim(1);
  const Index dh = diff.values.rows(), dw = diff.values.cols();
  Image8 out;
  out.height = h;
  out.width = 3 * w + 2 * kOverlayGutter;
  out.channels = 3;
  out.pixels.assign(static_cast<size_t>(out.width * out.height * 3), 255);

  const double lo = diff.values.minCoeff(), hi = diff.values.maxCoeff();
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      const Index sy = y * dh / h, sx = x * dw / w;
      const double norm = hi - lo > 0.0 ? (diff.values(sy, sx) - lo) / (hi - lo) : 0.5;
      const bool lit = mask.mask(sy, sx) != 0;
      for (Index c = 0; c < 3; ++c) {
        const double px = image(y, x, c);
        out.at(y, x, c) = to_byte(px);
        out.at(y, w + kOverlayGutter + x, c) = to_byte(norm);
        const double tint = c == 0 ? 1.0 : 0.0;
        out.at(y, 2 * (w + kOverlayGutter) + x, c) = to_byte(lit ? 0.5 * px + 0.5 * tint : px);
      }
    }
  return out;
}

void render_overlay(const Tensor& image, const DifferenceMap& diff, const HighlightMask& mask,
                    const std::filesystem::path& out_path) {
  write_png(out_path, render_overlay_image(image, diff, mask));
}

void write_correlations_csv(const std::vector<double>& correlations, size_t selected,
                            const std::filesystem::path& out_path) {
  std::ostringstream out;
  out << "channel,correlation,selected\n";
  char buf[64];
  for (size_t j = 0; j < correlations.size(); ++j) {
    std::snprintf(buf, sizeof buf, "%zu,%.9f,%d\n", j, correlations[j], j == selected ? 1 : 0);
    out << buf;
  }
  write_file_atomic(out_path, out.str());
}

}  // namespace reptrain
