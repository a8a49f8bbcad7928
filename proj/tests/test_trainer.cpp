#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "reptrain/eval.hpp"
#include "reptrain/synth.hpp"
#include "reptrain/trainer.hpp"

using namespace reptrain;

namespace {

// Two trivially separable classes: dark images score 1, bright ones score 2.
SampleList two_tone(size_t n, Index size) {
  SampleList out;
  for (size_t i = 0; i < n; ++i) {
    const int label = i % 2 ? 2 : 1;
    out.push_back(Sample{static_cast<int>(i), Tensor::constant({size, size, 3}, label == 1 ? 0.1f : 0.9f), label,
                         std::nullopt});
  }
  return out;
}

TrainConfig toy_config() {
  TrainConfig cfg;
  cfg.class_scores = {1, 2};
  cfg.image_size = 8;
  cfg.epochs_per_iteration = 3;
  cfg.batch_size = 4;
  cfg.lr = 0.01;
  return cfg;
}

LikelihoodTable random_table(std::mt19937_64& rng, size_t n, const std::vector<int>& scores) {
  std::uniform_real_distribution<double> u(0.8, 1.0);
  LikelihoodTable t;
  t.class_scores = scores;
  for (size_t i = 0; i < n; ++i) {
    LikelihoodRow row;
    row.id = static_cast<int>(i);
    for (size_t c = 0; c < scores.size(); ++c) row.fc.push_back(u(rng));
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::vector<int> random_labels(std::mt19937_64& rng, size_t n, const std::vector<int>& scores) {
  std::discrete_distribution<size_t> pick({5, 27, 33, 21, 7, 4, 2, 1});
  std::vector<int> out;
  for (size_t i = 0; i < n; ++i) out.push_back(scores[pick(rng) % scores.size()]);
  return out;
}

}  // namespace

TEST_CASE("zero epochs returns the network unchanged") {
  auto cfg = toy_config();
  cfg.epochs_per_iteration = 0;
  auto base = std::make_shared<const SampleList>(two_tone(8, 8));
  const auto net = default_network(cfg);
  CHECK(train_epochs(net, DatasetView(base), cfg, 1).identical(net));
}

TEST_CASE("training is deterministic for a fixed seed") {
  auto cfg = toy_config();
  auto base = std::make_shared<const SampleList>(two_tone(16, 8));
  const auto a = train_initial(default_network(cfg), DatasetView(base), cfg);
  const auto b = train_initial(default_network(cfg), DatasetView(base), cfg);
  CHECK(a.iteration == 1);
  CHECK(a.net.identical(b.net));
  cfg.seed = 2;
  const auto c = train_initial(default_network(cfg), DatasetView(base), cfg);
  CHECK_FALSE(a.net.identical(c.net));
}

TEST_CASE("a separable toy problem is learned perfectly") {
  auto cfg = toy_config();
  const auto samples = two_tone(32, 8);
  auto base = std::make_shared<const SampleList>(samples);
  const auto ck = train_initial(default_network(cfg), DatasetView(base), cfg);
  const auto acc = per_class_accuracy(ck.net, samples);
  CHECK(*acc.at(1) == 1.0);
  CHECK(*acc.at(2) == 1.0);
  CHECK(quadratic_loss(ck.net, samples) == 0.0);
}

TEST_CASE("training on an empty view fails with the iteration") {
  auto cfg = toy_config();
  auto base = std::make_shared<const SampleList>(two_tone(4, 8));
  const auto view = apply_mask(base, std::vector<int>{0, 1, 2, 3});
  try {
    train_epochs(default_network(cfg), view, cfg, 3);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(e.iteration() == 3);
  }
}

TEST_CASE("likelihood table covers every base sample") {
  auto cfg = toy_config();
  const auto samples = two_tone(10, 8);
  const auto table = compute_likelihoods(default_network(cfg), samples);
  REQUIRE(table.rows.size() == 10);
  for (size_t i = 0; i < 10; ++i) {
    CHECK(table.rows[i].id == samples[i].id);
    for (double v : table.rows[i].fc) CHECK((v > 0.0 && v < 1.0));
  }
}

TEST_CASE("select_dropouts matches the brute-force filter") {
  const std::vector<int> scores{2, 3, 4, 5, 6, 7, 8, 9};
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> k(0.8, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const auto table = random_table(rng, 300, scores);
    const auto labels = random_labels(rng, 300, scores);
    const auto dist = class_counts(labels);
    const DropoutThresholds th{k(rng), k(rng)};
    for (bool literal : {true, false})
      CHECK(select_dropouts(table, labels, dist, th, literal) == oracle::dropouts(table, labels, th.k1, th.k2, literal));
  }
}

TEST_CASE("drop-out conditions by hand") {
  LikelihoodTable t;
  t.class_scores = {3, 4, 5, 9};
  // labels: 4 is s_max1, then 3, then 5; 9 is outside the top three.
  const std::vector<int> labels{4, 4, 4, 3, 3, 5, 9};
  const double fc[7][4] = {
      {0.5, 0.84, 0.5, 0.5},  // 4, fc4 < K1 -> drop
      {0.5, 0.90, 0.5, 0.5},  // 4, keep
      {0.5, 0.86, 0.5, 0.5},  // 4, keep
      {0.99, 0.80, 0.5, 0.5}, // 3, literal tests fc4 -> drop; own tests fc3 -> keep
      {0.80, 0.99, 0.5, 0.5}, // 3, literal keep; own drop
      {0.5, 0.5, 0.99, 0.5},  // 5, literal drop; own keep
      {0.1, 0.1, 0.1, 0.1},   // 9, never dropped
  };
  for (int i = 0; i < 7; ++i) t.rows.push_back({i, std::vector<double>(fc[i], fc[i] + 4), 0});
  const auto dist = class_counts(labels);
  const DropoutThresholds th{0.85, 0.85};
  CHECK(select_dropouts(t, labels, dist, th, true) == std::vector<int>{0, 3, 5});
  CHECK(select_dropouts(t, labels, dist, th, false) == std::vector<int>{0, 4});
}

TEST_CASE("threshold grid") {
  const auto g = threshold_grid(0.85, 0.95, 0.01);
  REQUIRE(g.size() == 11);
  CHECK(g.front() == 0.85);
  CHECK(g.back() == doctest::Approx(0.95));
}

TEST_CASE("tune_thresholds attains the grid optimum with the documented tie-break") {
  const std::vector<int> scores{2, 3, 4, 5, 6, 7, 8, 9};
  std::mt19937_64 rng(23);
  TrainConfig cfg;
  for (int trial = 0; trial < 10; ++trial) {
    const auto table = random_table(rng, 400, scores);
    const auto labels = random_labels(rng, 400, scores);
    const auto got = tune_thresholds(table, labels, class_counts(labels), cfg);
    const auto want = oracle::best_thresholds(table, labels, cfg.threshold_lo, cfg.threshold_hi, cfg.threshold_step,
                                              cfg.target_remaining_fraction, cfg.literal_condition_mode);
    CHECK(got.k1 == want.k1);
    CHECK(got.k2 == want.k2);
  }
}

TEST_CASE("tune_thresholds ties go to the smallest K1 then K2") {
  // Every likelihood sits above the grid, so every pair keeps all samples.
  LikelihoodTable t;
  t.class_scores = {1, 2};
  std::vector<int> labels;
  for (int i = 0; i < 6; ++i) {
    t.rows.push_back({i, {0.99, 0.99}, 0});
    labels.push_back(i % 2 + 1);
  }
  const auto th = tune_thresholds(t, labels, class_counts(labels), TrainConfig{});
  CHECK(th.k1 == 0.85);
  CHECK(th.k2 == 0.85);
}

TEST_CASE("quadratic loss") {
  CHECK(quadratic_loss(std::vector<int>{3, 5}, std::vector<int>{4, 4}) == 1.0);
  CHECK(quadratic_loss(std::vector<int>{2, 9}, std::vector<int>{2, 9}) == 0.0);
  CHECK(quadratic_loss(std::vector<int>{2}, std::vector<int>{9}) == 49.0);
  CHECK_THROWS_AS(quadratic_loss(std::vector<int>{}, std::vector<int>{}), DataError);
}

TEST_CASE("classify breaks ties to the lowest class and ignores logit shifts") {
  std::vector<LayerSpec> specs{{Conv{3, 1, 1, 1, 0}}, {Flatten{}}, {Dense{1, 3}}};
  auto net = build_network({3, 1, 1}, specs, {3, 5, 7}, 1);
  net.params(2).weight.values().setZero();
  const auto image = Tensor::constant({1, 1, 3}, 0.5f);
  net.params(2).bias.values() << 1.f, 1.f, 0.f;
  CHECK(classify(net, image) == 3);
  net.params(2).bias.values() << 0.f, 2.f, 1.f;
  CHECK(classify(net, image) == 5);
  net.params(2).bias.values().array() += 100.f;
  CHECK(classify(net, image) == 5);
}

TEST_CASE("repetitive training stops on the iteration budget") {
  auto cfg = toy_config();
  cfg.max_iterations = 1;
  cfg.loss_threshold = 1e-9;
  // A contradictory label keeps the loss above the threshold.
  auto base = two_tone(16, 8);
  base[0].score_label = 2;
  const auto run = repetitive_train(base, cfg);
  CHECK(run.size() == 1);
  CHECK(run.stop_reason == StopReason::MaxIterations);
  CHECK_FALSE(run.thresholds_used[0]);
  CHECK(run.remaining_counts[0] == 16);
}

TEST_CASE("repetitive training stops once the loss is below threshold") {
  auto cfg = toy_config();
  cfg.max_iterations = 5;
  cfg.loss_threshold = 100.0;
  const auto run = repetitive_train(two_tone(16, 8), cfg);
  CHECK(run.size() == 1);
  CHECK(run.stop_reason == StopReason::LossBelowThreshold);
}

TEST_CASE("repetitive training records each iteration") {
  TrainConfig cfg;
  cfg.image_size = 16;
  cfg.epochs_per_iteration = 1;
  cfg.max_iterations = 3;
  cfg.loss_threshold = 1e-9;
  const auto base = synth_generate(120, default_proportions(), 16, 4);
  std::vector<size_t> seen;
  const auto run = repetitive_train(base, cfg, [&](const TrainRun& r) { seen.push_back(r.size()); });
  REQUIRE(run.size() == 3);
  CHECK(seen == std::vector<size_t>{1, 2, 3});
  for (size_t i = 0; i < run.size(); ++i) {
    CHECK(run.checkpoints[i].iteration == i + 1);
    CHECK(run.remaining_counts[i] + run.dropped_sets[i].size() == base.size());
    CHECK(run.losses[i] == doctest::Approx(quadratic_loss(run.checkpoints[i].net, base)));
  }
  // The drop set of iteration 2 is exactly what net_1's likelihoods select.
  const auto labels = labels_of(base);
  const auto table = compute_likelihoods(run.checkpoints[0].net, base);
  const auto dist = class_counts(labels);
  const auto th = tune_thresholds(table, labels, dist, cfg);
  CHECK(*run.thresholds_used[1] == th);
  CHECK(run.dropped_sets[1] == select_dropouts(table, labels, dist, th, true));
}

TEST_CASE("samples dropped earlier can come back") {
  // Selection always starts from the full base; a table in which sample 0
  // first falls below K1 and later rises above it is re-admitted.
  LikelihoodTable t;
  t.class_scores = {1, 2};
  const std::vector<int> labels{1, 1, 1, 2};
  t.rows = {{0, {0.5, 0.5}, 0}, {1, {0.99, 0.5}, 0}, {2, {0.99, 0.5}, 0}, {3, {0.99, 0.99}, 0}};
  const auto dist = class_counts(labels);
  const auto first = select_dropouts(t, labels, dist, {0.9, 0.9}, true);
  CHECK(first == std::vector<int>{0});
  t.rows[0].fc = {0.99, 0.5};
  CHECK(select_dropouts(t, labels, dist, {0.9, 0.9}, true).empty());
}

TEST_CASE("config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.threshold_lo = 0.96;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.class_scores = {2, 2};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.max_iterations = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
