#pragma once

#include <filesystem>
#include <vector>

#include "reptrain/dataset.hpp"
#include "reptrain/image_io.hpp"
#include "reptrain/trainer.hpp"

namespace reptrain {

// Correlation assigned to a channel pair in which either map is constant.
inline constexpr double kZeroVarianceCorrelation = 0.0;

struct HighlightConfig {
  int k = 1;  // compare net_I with net_{I-k}
  bool use_post_activation = true;
  bool signed_clustering = false;  // cluster signed differences instead of |diff|
};

using MapMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct DifferenceMap {
  MapMatrix values;
  size_t channel = 0;
  int later_iteration = 0;
  int earlier_iteration = 0;
};

struct HighlightMask {
  Mask mask;
  double low_centroid = 0.0;
  double high_centroid = 0.0;
};

struct HighlightResult {
  DifferenceMap diff;
  HighlightMask mask;
  std::vector<double> correlations;  // per conv1 channel
};

// Pearson correlation of two equally shaped maps, accumulated in double.
double pearson_correlation(const Tensor& a, const Tensor& b);

std::vector<double> channel_correlations(const std::vector<Tensor>& later, const std::vector<Tensor>& earlier);

// Channel whose later/earlier maps correlate least; ties go to the lowest index.
size_t min_corr_index(const std::vector<Tensor>& later, const std::vector<Tensor>& earlier);

// later[J] - earlier[J].
DifferenceMap difference_map(const std::vector<Tensor>& later, const std::vector<Tensor>& earlier, size_t channel);

// Optimal 1-D two-cluster partition (minimum within-cluster SSE) of |values|
// or signed values. The highlight is the cluster with the larger mean
// magnitude. A constant map yields an all-background mask.
HighlightMask two_means(const DifferenceMap& diff, bool signed_values = false);

HighlightResult extract_highlight_pair(const Network& later, int later_iteration, const Network& earlier,
                                       int earlier_iteration, const Tensor& image, const HighlightConfig& cfg);

// Compares the last checkpoint of the run with the one cfg.k iterations earlier.
HighlightResult extract_highlight(const TrainRun& run, const Tensor& image, const HighlightConfig& cfg);

double mask_iou(const Mask& a, const Mask& b);

inline constexpr Index kOverlayGutter = 4;

// Three panels side by side: original, min-max normalized difference map
// (nearest-neighbour upsampled), original with the highlight tinted red.
Image8 render_overlay_image(const Tensor& image, const DifferenceMap& diff, const HighlightMask& mask);
void render_overlay(const Tensor& image, const DifferenceMap& diff, const HighlightMask& mask,
                    const std::filesystem::path& out_path);

// Dumps `channel,correlation` rows.
void write_correlations_csv(const std::vector<double>& correlations, size_t selected,
                            const std::filesystem::path& out_path);

}  // namespace reptrain
