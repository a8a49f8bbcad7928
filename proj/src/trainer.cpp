#include "reptrain/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "reptrain/nn/sgd.hpp"
#include "reptrain/parallel.hpp"

namespace reptrain {
namespace {

constexpr size_t kInferenceChunk = 64;

std::vector<int> class_targets(const std::vector<int>& class_scores, std::span<const Sample* const> samples) {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const Sample* s : samples) {
    auto it = std::find(class_scores.begin(), class_scores.end(), s->score_label);
    if (it == class_scores.end())
      throw DataError("sample " + std::to_string(s->id) + " has score " + std::to_string(s->score_label) +
                      " outside the class scores");
    out.push_back(static_cast<int>(it - class_scores.begin()));
  }
  return out;
}

Tensor make_batch(const Network& net, std::span<const Sample* const> samples) {
  const auto& in = net.input_shape();
  Tensor batch({static_cast<Index>(samples.size()), in.channels, in.height, in.width});
  for (size_t i = 0; i < samples.size(); ++i) write_batch_slot(batch, static_cast<Index>(i), samples[i]->image);
  return batch;
}

// Forward passes in fixed-size chunks; fn(sample_index, activations, row).
template <typename Fn>
void infer_chunks(const Network& net, std::span<const Sample* const> samples, Fn&& fn) {
  const size_t chunks = (samples.size() + kInferenceChunk - 1) / kInferenceChunk;
  parallel_for(chunks, [&](size_t c) {
    const size_t begin = c * kInferenceChunk;
    const size_t end = std::min(samples.size(), begin + kInferenceChunk);
    auto part = samples.subspan(begin, end - begin);
    const Activations acts = forward(net, make_batch(net, part));
    for (size_t i = 0; i < part.size(); ++i) fn(begin + i, acts, static_cast<Index>(i));
  });
}

std::vector<const Sample*> pointers(const SampleList& samples) {
  std::vector<const Sample*> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(&s);
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (class_scores.size() < 2) throw ConfigError("class_scores needs at least 2 entries");
  for (size_t i = 1; i < class_scores.size(); ++i)
    if (class_scores[i] <= class_scores[i - 1]) throw ConfigError("class_scores not strictly increasing");
  if (image_size < 8) throw ConfigError("image_size must be at least 8");
  if (epochs_per_iteration < 0) throw ConfigError("epochs_per_iteration must be non-negative");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (!(loss_threshold > 0.0)) throw ConfigError("loss_threshold must be positive");
  if (max_iterations < 1) throw ConfigError("max_iterations must be at least 1");
  if (!(target_remaining_fraction > 0.0 && target_remaining_fraction <= 1.0))
    throw ConfigError("target_remaining_fraction must lie in (0, 1]");
  if (!(threshold_lo > 0.0 && threshold_hi < 1.0 && threshold_lo <= threshold_hi))
    throw ConfigError("threshold bounds must satisfy 0 < lo <= hi < 1");
  if (!(threshold_step > 0.0)) throw ConfigError("threshold_step must be positive");
}

size_t LikelihoodTable::class_index(int score) const {
  auto it = std::find(class_scores.begin(), class_scores.end(), score);
  if (it == class_scores.end()) throw DataError("score " + std::to_string(score) + " is not a class score");
  return static_cast<size_t>(it - class_scores.begin());
}

const char* to_string(StopReason reason) {
  return reason == StopReason::LossBelowThreshold ? "loss_below_threshold" : "max_iterations";
}

Network default_network(const TrainConfig& cfg) {
  InputShape input{3, cfg.image_size, cfg.image_size};
  return build_network(input, default_architecture(static_cast<Index>(cfg.class_scores.size()), input),
                       cfg.class_scores, cfg.seed);
}

Network train_epochs(Network net, const DatasetView& view, const TrainConfig& cfg, int iteration) {
  if (view.empty()) throw TrainingError(iteration, "no active samples to train on");
  const auto samples = view.active_samples();
  const auto targets = class_targets(net.class_scores(), samples);
  Sgd opt(cfg.lr, cfg.momentum);
  std::vector<size_t> order(samples.size());
  std::vector<const Sample*> batch_samples;
  std::vector<int> batch_targets;

  for (int epoch = 0; epoch < cfg.epochs_per_iteration; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(iteration), static_cast<std::uint32_t>(epoch)};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);
    for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), begin + static_cast<size_t>(cfg.batch_size));
      batch_samples.clear();
      batch_targets.clear();
      for (size_t i = begin; i < end; ++i) {
        batch_samples.push_back(samples[order[i]]);
        batch_targets.push_back(targets[order[i]]);
      }
      const Activations acts = forward(net, make_batch(net, batch_samples));
      const Gradients grads = backward(net, acts, batch_targets);
      if (!std::isfinite(grads.loss)) throw NumericError("training loss diverged");
      opt.step(net, grads);
    }
  }
  return net;
}

Checkpoint train_initial(const Network& net, const DatasetView& data, const TrainConfig& cfg) {
  if (data.empty()) throw TrainingError(1, "training data is empty");
  return Checkpoint{1, train_epochs(net, data, cfg, 1)};
}

LikelihoodTable compute_likelihoods(const Network& net, const SampleList& base, LikelihoodMode mode) {
  LikelihoodTable table;
  table.class_scores = net.class_scores();
  table.rows.resize(base.size());
  const auto ptrs = pointers(base);
  const Index n = net.num_classes();
  infer_chunks(net, ptrs, [&](size_t i, const Activations& acts, Index r) {
    LikelihoodRow& row = table.rows[i];
    row.id = base[i].id;
    row.fc.resize(static_cast<size_t>(n));
    for (Index c = 0; c < n; ++c)
      row.fc[static_cast<size_t>(c)] = mode == LikelihoodMode::Sigmoid ? sigmoid(acts.logits()(r, c))
                                                                       : static_cast<double>(acts.probabilities(r, c));
    row.predicted = static_cast<int>(argmax_row(acts.probabilities, r));
  });
  return table;
}

std::vector<int> select_dropouts(const LikelihoodTable& table, std::span<const int> labels,
                                 const ScoreDistribution& dist, const DropoutThresholds& th, bool literal) {
  if (labels.size() != table.rows.size()) throw DataError("label count does not match likelihood table");
  std::vector<int> dropped;
  const auto& top = dist.ranked_majority;
  if (top.empty()) return dropped;
  const size_t max1 = table.class_index(top[0]);
  for (size_t i = 0; i < table.rows.size(); ++i) {
    const auto& fc = table.rows[i].fc;
    const int label = labels[i];
    bool drop = false;
    if (label == top[0]) {
      drop = fc[max1] < th.k1;
    } else if ((top.size() > 1 && label == top[1]) || (top.size() > 2 && label == top[2])) {
      const size_t tested = literal ? max1 : table.class_index(label);
      drop = fc[tested] < th.k2;
    }
    if (drop) dropped.push_back(table.rows[i].id);
  }
  std::sort(dropped.begin(), dropped.end());
  return dropped;
}

std::vector<double> threshold_grid(double lo, double hi, double step) {
  const auto steps = static_cast<long>(std::llround((hi - lo) / step));
  std::vector<double> grid;
  for (long i = 0; i <= steps; ++i) grid.push_back(lo + static_cast<double>(i) * step);
  return grid;
}

DropoutThresholds tune_thresholds(const LikelihoodTable& table, std::span<const int> labels,
                                  const ScoreDistribution& dist, const TrainConfig& cfg) {
  const auto grid = threshold_grid(cfg.threshold_lo, cfg.threshold_hi, cfg.threshold_step);
  const double target = cfg.target_remaining_fraction * static_cast<double>(table.rows.size());

  // Split candidates by which threshold governs them, keeping only the tested likelihood.
  std::vector<double> under_k1, under_k2;
  const auto& top = dist.ranked_majority;
  if (!top.empty()) {
    const size_t max1 = table.class_index(top[0]);
    for (size_t i = 0; i < table.rows.size(); ++i) {
      const int label = labels[i];
      if (label == top[0]) {
        under_k1.push_back(table.rows[i].fc[max1]);
      } else if ((top.size() > 1 && label == top[1]) || (top.size() > 2 && label == top[2])) {
        under_k2.push_back(table.rows[i].fc[cfg.literal_condition_mode ? max1 : table.class_index(label)]);
      }
    }
  }
  std::sort(under_k1.begin(), under_k1.end());
  std::sort(under_k2.begin(), under_k2.end());
  auto below = [](const std::vector<double>& v, double k) {
    return static_cast<size_t>(std::lower_bound(v.begin(), v.end(), k) - v.begin());
  };

  DropoutThresholds best{grid.front(), grid.front()};
  double best_gap = std::numeric_limits<double>::infinity();
  for (double k1 : grid) {
    const size_t d1 = below(under_k1, k1);
    for (double k2 : grid) {
      const size_t remaining = table.rows.size() - d1 - below(under_k2, k2);
      const double gap = std::abs(static_cast<double>(remaining) - target);
      if (gap < best_gap) {
        best_gap = gap;
        best = {k1, k2};
      }
    }
  }
  return best;
}

double quadratic_loss(std::span<const int> labels, std::span<const int> predicted_scores) {
  if (labels.empty()) throw DataError("quadratic loss of an empty dataset");
  if (labels.size() != predicted_scores.size()) throw DataError("label and prediction counts differ");
  double sum = 0.0;
  for (size_t i = 0; i < labels.size(); ++i) {
    const double d = static_cast<double>(labels[i] - predicted_scores[i]);
    sum += d * d;
  }
  return sum / static_cast<double>(labels.size());
}

double quadratic_loss(const Network& net, const SampleList& base) {
  if (base.empty()) throw DataError("quadratic loss of an empty dataset");
  return quadratic_loss(labels_of(base), classify_all(net, base));
}

int classify(const Network& net, const Tensor& image) {
  const Activations acts = forward(net, image_to_batch(image));
  return net.class_scores()[static_cast<size_t>(argmax_row(acts.probabilities, 0))];
}

std::vector<int> classify_all(const Network& net, std::span<const Sample* const> samples) {
  std::vector<int> out(samples.size());
  infer_chunks(net, samples, [&](size_t i, const Activations& acts, Index r) {
    out[i] = net.class_scores()[static_cast<size_t>(argmax_row(acts.probabilities, r))];
  });
  return out;
}

std::vector<int> classify_all(const Network& net, const SampleList& samples) {
  const auto ptrs = pointers(samples);
  return classify_all(net, ptrs);
}

TrainRun repetitive_train(const Network& initial, const SampleList& base_samples, const TrainConfig& cfg,
                          const IterationCallback& on_iteration) {
  cfg.validate();
  if (base_samples.empty()) throw TrainingError(1, "training data is empty");
  if (initial.class_scores() != cfg.class_scores) throw ConfigError("network class scores differ from the config");
  auto base = std::make_shared<const SampleList>(base_samples);
  const auto labels = labels_of(*base);
  TrainRun run;

  auto finish_iteration = [&](Checkpoint ck, std::vector<int> dropped, std::optional<DropoutThresholds> th,
                              size_t remaining) {
    run.losses.push_back(quadratic_loss(ck.net, *base));
    run.checkpoints.push_back(std::move(ck));
    run.dropped_sets.push_back(std::move(dropped));
    run.thresholds_used.push_back(th);
    run.remaining_counts.push_back(remaining);
    const bool below = run.losses.back() < cfg.loss_threshold;
    if (below) run.stop_reason = StopReason::LossBelowThreshold;
    if (on_iteration) on_iteration(run);
    return below;
  };

  if (finish_iteration(train_initial(initial, DatasetView(base), cfg), {}, std::nullopt, base->size())) return run;

  for (int i = 2; i <= cfg.max_iterations; ++i) {
    const Network& previous = run.checkpoints.back().net;
    // Selection always starts from the full base, so earlier drops can be re-admitted.
    const LikelihoodTable table = compute_likelihoods(previous, *base, cfg.likelihood_mode);
    const ScoreDistribution dist = class_counts(labels);
    const DropoutThresholds th = tune_thresholds(table, labels, dist, cfg);
    std::vector<int> dropped = select_dropouts(table, labels, dist, th, cfg.literal_condition_mode);
    const DatasetView view = apply_mask(base, dropped);
    if (view.empty()) throw TrainingError(i, "every sample was dropped; the masked training view is empty");

    Network warm = previous;
    if (cfg.freeze_conv) warm.set_conv_trainable(false);
    Network trained = train_epochs(std::move(warm), view, cfg, i);
    if (cfg.freeze_conv) trained.set_conv_trainable(true);
    if (finish_iteration(Checkpoint{static_cast<std::uint32_t>(i), std::move(trained)}, std::move(dropped), th,
                         view.size()))
      return run;
  }
  run.stop_reason = StopReason::MaxIterations;
  return run;
}

TrainRun repetitive_train(const SampleList& base, const TrainConfig& cfg, const IterationCallback& on_iteration) {
  cfg.validate();
  return repetitive_train(default_network(cfg), base, cfg, on_iteration);
}

}  // namespace reptrain
