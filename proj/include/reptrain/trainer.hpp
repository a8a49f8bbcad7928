#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "reptrain/checkpoint.hpp"
#include "reptrain/dataset.hpp"
#include "reptrain/nn/features.hpp"

namespace reptrain {

struct TrainConfig {
  std::vector<int> class_scores{2, 3, 4, 5, 6, 7, 8, 9};
  Index image_size = 32;
  int epochs_per_iteration = 4;
  double lr = 0.005;
  double momentum = 0.9;
  int batch_size = 16;
  double loss_threshold = 1.8;
  int max_iterations = 10;
  double target_remaining_fraction = 2.0 / 3.0;
  double threshold_lo = 0.85;
  double threshold_hi = 0.95;
  double threshold_step = 0.01;
  std::uint64_t seed = 1;
  // The s_max2/s_max3 drop tests use the s_max1 likelihood (true) or the sample's own class (false).
  bool literal_condition_mode = true;
  // Freeze Conv layers while retraining iterations >= 2.
  bool freeze_conv = false;
  LikelihoodMode likelihood_mode = LikelihoodMode::Sigmoid;

  void validate() const;
};

struct DropoutThresholds {
  double k1 = 0.85;
  double k2 = 0.85;
  bool operator==(const DropoutThresholds&) const = default;
};

struct LikelihoodRow {
  int id = 0;
  std::vector<double> fc;  // one value in (0, 1) per class
  int predicted = 0;       // argmax of softmax, as a class index
};

struct LikelihoodTable {
  std::vector<int> class_scores;
  std::vector<LikelihoodRow> rows;

  // Class index of a score; throws if the score is not a class.
  size_t class_index(int score) const;
};

enum class StopReason { LossBelowThreshold, MaxIterations };
const char* to_string(StopReason reason);

struct TrainRun {
  std::vector<Checkpoint> checkpoints;  // net_1 .. net_j
  std::vector<double> losses;           // quadratic loss on the full base
  std::vector<std::vector<int>> dropped_sets;
  std::vector<std::optional<DropoutThresholds>> thresholds_used;  // none for iteration 1
  std::vector<size_t> remaining_counts;
  StopReason stop_reason = StopReason::MaxIterations;

  size_t size() const { return checkpoints.size(); }
};

// Trains `net` for cfg.epochs_per_iteration epochs of seeded mini-batch SGD
// over the active samples of `view`. The shuffle order depends on
// (cfg.seed, iteration, epoch) only.
Network train_epochs(Network net, const DatasetView& view, const TrainConfig& cfg, int iteration);

// First fine-tuning pass over the full dataset; returns net_1.
Checkpoint train_initial(const Network& net, const DatasetView& data, const TrainConfig& cfg);

// One row per base sample, in base order, regardless of any mask.
LikelihoodTable compute_likelihoods(const Network& net, const SampleList& base,
                                    LikelihoodMode mode = LikelihoodMode::Sigmoid);

// Sample ids to drop (ascending). labels[i] belongs to table.rows[i].
//   label == s_max1:           drop iff fc[s_max1] < K1
//   label == s_max2 or s_max3: drop iff fc[s_max1] < K2  (literal)
//                              drop iff fc[own]    < K2  (own-class)
std::vector<int> select_dropouts(const LikelihoodTable& table, std::span<const int> labels,
                                 const ScoreDistribution& dist, const DropoutThresholds& th, bool literal);

// Grid values lo, lo + step, ..., hi.
std::vector<double> threshold_grid(double lo, double hi, double step);

// Exhaustive search over the K1 x K2 grid for the pair whose remaining count
// is closest to target_remaining_fraction * base size. Ties: smaller K1, then
// smaller K2.
DropoutThresholds tune_thresholds(const LikelihoodTable& table, std::span<const int> labels,
                                  const ScoreDistribution& dist, const TrainConfig& cfg);

// Mean of (label - predicted score)^2 over all samples.
double quadratic_loss(const Network& net, const SampleList& base);
double quadratic_loss(std::span<const int> labels, std::span<const int> predicted_scores);

// Predicted score (argmax of softmax, ties to the lowest class index).
int classify(const Network& net, const Tensor& image);
std::vector<int> classify_all(const Network& net, std::span<const Sample* const> samples);
std::vector<int> classify_all(const Network& net, const SampleList& samples);

using IterationCallback = std::function<void(const TrainRun&)>;

// The full repetitive procedure starting from `initial`. on_iteration fires
// after each iteration has been appended to the run.
TrainRun repetitive_train(const Network& initial, const SampleList& base, const TrainConfig& cfg,
                          const IterationCallback& on_iteration = {});

// Same, starting from the default architecture built with cfg.seed.
TrainRun repetitive_train(const SampleList& base, const TrainConfig& cfg, const IterationCallback& on_iteration = {});

Network default_network(const TrainConfig& cfg);

}  // namespace reptrain
