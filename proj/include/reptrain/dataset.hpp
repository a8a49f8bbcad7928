#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "reptrain/nn/tensor.hpp"

namespace reptrain {

// Binary H x W mask (0 or 1).
using Mask = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Sample {
  int id = 0;
  Tensor image;  // H x W x 3, values in [0, 1]
  int score_label = 0;
  std::optional<Mask> truth_mask;
};

using SampleList = std::vector<Sample>;
using SharedSamples = std::shared_ptr<const SampleList>;

// Active-mask view over an immutable base dataset. Views never modify the
// base; every mask is expressed relative to the full base.
class DatasetView {
 public:
  explicit DatasetView(SharedSamples base);
  DatasetView(SharedSamples base, std::vector<bool> active);

  const SampleList& base() const { return *base_; }
  const SharedSamples& shared_base() const { return base_; }
  size_t base_size() const { return base_->size(); }
  size_t size() const { return active_count_; }
  bool empty() const { return active_count_ == 0; }
  bool active(size_t index) const { return active_[index]; }
  const std::vector<bool>& active_mask() const { return active_; }

  std::vector<int> active_ids() const;
  std::vector<const Sample*> active_samples() const;

 private:
  SharedSamples base_;
  std::vector<bool> active_;
  size_t active_count_ = 0;
};

// View with every base sample active except dropped_ids.
DatasetView apply_mask(const SharedSamples& base, std::span<const int> dropped_ids);

struct ScoreDistribution {
  std::map<int, size_t> counts;
  // Up to three scores with the most samples; ties go to the lower score.
  std::vector<int> ranked_majority;

  size_t total() const;
};

ScoreDistribution class_counts(const DatasetView& view);
ScoreDistribution class_counts(std::span<const int> labels);

// Reads a `path,score` CSV (header row required). Images are decoded and
// bilinearly resized to size x size; ids follow manifest order.
SampleList load_manifest(const std::filesystem::path& manifest, const std::filesystem::path& image_root,
                         const std::vector<int>& class_scores, Index image_size);

void write_manifest(const std::filesystem::path& manifest, const std::vector<std::pair<std::string, int>>& rows);

// Seeded shuffle split; ids are renumbered from 0 in each part.
std::pair<SampleList, SampleList> shuffle_split(const SampleList& samples, double holdout_fraction,
                                                std::uint64_t seed);

std::vector<int> labels_of(const SampleList& samples);

}  // namespace reptrain
