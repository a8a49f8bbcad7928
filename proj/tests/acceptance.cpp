// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "reptrain/checkpoint.hpp"
#include "reptrain/cli.hpp"
#include "reptrain/config.hpp"
#include "reptrain/eval.hpp"
#include "reptrain/run_io.hpp"
#include "reptrain/synth.hpp"

using namespace reptrain;
namespace fs = std::filesystem;

namespace {

// Tolerances and sizes.
constexpr double kGradTolerance = 1e-3;
constexpr int kGradNetworks = 20;
constexpr int kDropoutTables = 100;
constexpr size_t kTableRows = 1000;
constexpr int kTuneTables = 20;
constexpr double kRemainingLo = 0.60;
constexpr double kRemainingHi = 0.72;
constexpr double kMaxLossIncrease = 0.10;  // fraction of the initial loss
constexpr int kTwoMeansMaps = 200;
constexpr int kCorrStacks = 100;
constexpr size_t kHighlightImages = 60;
constexpr double kRateSumTolerance = 1e-9;

// The default synthetic run.
constexpr int kRunIterations = 6;
constexpr size_t kRunSamples = 800;
constexpr size_t kHoldoutSamples = 200;
constexpr std::uint64_t kHoldoutSeedOffset = 1000003;
constexpr std::uint64_t kHighlightSeed = 77;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, const char* name, bool pass, const std::string& detail) {
  std::printf("criterion %2d: %s  %s  (%s)\n", id, pass ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

// ---------------------------------------------------------------------------

void gradient_correctness() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  size_t checked = 0, kinks = 0;
  for (int k = 0; k < kGradNetworks; ++k) {
    const auto net = oracle::random_small_network(1000 + static_cast<std::uint64_t>(k));
    std::mt19937_64 rng(2000 + static_cast<std::uint64_t>(k));
    std::uniform_real_distribution<double> u(-1, 1);
    BasicTensor<double> batch({3, net.input_shape().channels, 8, 8});
    for (Index i = 0; i < batch.size(); ++i) batch[i] = u(rng);
    std::vector<int> targets;
    for (int b = 0; b < 3; ++b) targets.push_back(static_cast<int>(rng() % static_cast<std::uint64_t>(net.num_classes())));
    const auto r = oracle::check_gradients(net, batch, targets);
    worst = std::max(worst, r.max_rel_error);
    checked += r.checked;
    kinks += r.skipped_at_kink;
  }
  const double secs = seconds_since(t0);
  report(1, "gradient correctness", worst < kGradTolerance && checked > 0 && secs < 60,
         fmt("%d networks, %zu parameters, max rel error %.2e, %zu skipped at ReLU/pool kinks, %.1fs", kGradNetworks,
             checked, worst, kinks, secs));
}

LikelihoodTable random_table(std::mt19937_64& rng, size_t n, const std::vector<int>& scores) {
  // Likelihoods concentrated around the threshold range so both outcomes occur.
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
  std::vector<double> weights;
  for (size_t i = 0; i < scores.size(); ++i) weights.push_back(1.0 + static_cast<double>(rng() % 40));
  std::discrete_distribution<size_t> pick(weights.begin(), weights.end());
  std::vector<int> out;
  for (size_t i = 0; i < n; ++i) out.push_back(scores[pick(rng)]);
  return out;
}

void dropout_oracle() {
  const auto t0 = Clock::now();
  const std::vector<int> scores{2, 3, 4, 5, 6, 7, 8, 9};
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> k(0.85, 0.95);
  int mismatches = 0;
  size_t dropped = 0;
  for (int t = 0; t < kDropoutTables; ++t) {
    const auto table = random_table(rng, kTableRows, scores);
    const auto labels = random_labels(rng, kTableRows, scores);
    const auto dist = class_counts(labels);
    const DropoutThresholds th{k(rng), k(rng)};
    for (bool literal : {true, false}) {
      const auto got = select_dropouts(table, labels, dist, th, literal);
      mismatches += got != oracle::dropouts(table, labels, th.k1, th.k2, literal);
      dropped += got.size();
    }
  }
  const double secs = seconds_since(t0);
  report(2, "drop-out oracle equality", mismatches == 0 && secs < 10,
         fmt("%d tables x %zu samples x 2 modes, %d mismatches, %zu drops compared, %.1fs", kDropoutTables, kTableRows,
             mismatches, dropped, secs));
}

// ---------------------------------------------------------------------------
// The default synthetic run, produced through the command-line entry point.

struct DefaultRun {
  fs::path dir;
  RunConfig cfg;
  TrainRun run;
  SampleList base;
  SampleList holdout;
  double train_seconds = 0;
  std::string history_a, history_b;
};

int cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  if (code != kExitOk) std::fprintf(stderr, "reptrain %s failed: %s\n", args.front().c_str(), err.str().c_str());
  return code;
}

std::vector<std::string> train_args(const fs::path& dir) {
  // Default configuration except for the iteration budget; the loss threshold
  // is set below any reachable loss so that all iterations run.
  return {"train", "--run-dir", dir.string(), "--synth-n", std::to_string(kRunSamples), "--max-iterations",
          std::to_string(kRunIterations), "--loss-threshold", "1e-9", "--force"};
}

DefaultRun make_default_run() {
  DefaultRun d;
  const fs::path root = fs::temp_directory_path() / "reptrain_acceptance";
  fs::create_directories(root);
  d.dir = root / "run_a";
  const auto t0 = Clock::now();
  if (cli(train_args(d.dir)) != kExitOk) throw std::runtime_error("default run failed");
  d.train_seconds = seconds_since(t0);
  if (cli(train_args(root / "run_b")) != kExitOk) throw std::runtime_error("repeated run failed");
  d.history_a = read_file(d.dir / "history.csv");
  d.history_b = read_file(root / "run_b" / "history.csv");

  apply_key_values(read_key_values(d.dir / "config.txt"), d.cfg);
  d.run = load_run(d.dir);
  d.base = load_source(d.cfg);
  d.holdout = synth_generate(kHoldoutSamples, d.cfg.synth->proportions, d.cfg.train.image_size,
                             d.cfg.synth->seed + kHoldoutSeedOffset);
  return d;
}

void threshold_tuning(const DefaultRun& d) {
  const std::vector<int> scores{2, 3, 4, 5, 6, 7, 8, 9};
  const TrainConfig& cfg = d.cfg.train;
  std::mt19937_64 rng(41);
  int mismatches = 0;
  double tune_secs = 0;
  auto check = [&](const LikelihoodTable& table, std::span<const int> labels, const DropoutThresholds* used) {
    const auto t0 = Clock::now();
    const auto got = tune_thresholds(table, labels, class_counts(labels), cfg);
    tune_secs += seconds_since(t0);
    const auto want = oracle::best_thresholds(table, labels, cfg.threshold_lo, cfg.threshold_hi, cfg.threshold_step,
                                              cfg.target_remaining_fraction, cfg.literal_condition_mode);
    if (got.k1 != want.k1 || got.k2 != want.k2) ++mismatches;
    if (used && !(*used == got)) ++mismatches;
  };
  for (int t = 0; t < kTuneTables; ++t) {
    const auto table = random_table(rng, kTableRows, scores);
    const auto labels = random_labels(rng, kTableRows, scores);
    check(table, labels, nullptr);
  }

  // Every drop-out step of the default run, recomputed from the previous network.
  const auto labels = labels_of(d.base);
  std::string fractions;
  bool in_range = d.run.size() > 1;
  for (size_t i = 1; i < d.run.size(); ++i) {
    const auto table = compute_likelihoods(d.run.checkpoints[i - 1].net, d.base, cfg.likelihood_mode);
    check(table, labels, d.run.thresholds_used[i] ? &*d.run.thresholds_used[i] : nullptr);
    const double f = static_cast<double>(d.run.remaining_counts[i]) / static_cast<double>(d.base.size());
    in_range = in_range && f >= kRemainingLo && f <= kRemainingHi;
    fractions += fmt("%s%.3f", fractions.empty() ? "" : " ", f);
  }
  report(3, "threshold tuning", mismatches == 0 && in_range && tune_secs < 5,
         fmt("%d grid mismatches over %zu tables; remaining fraction per iteration [%s], required in [%.2f, %.2f]; "
             "%.2fs",
             mismatches, kTuneTables + d.run.size() - 1, fractions.c_str(), kRemainingLo, kRemainingHi, tune_secs));
}

void loss_trend(const DefaultRun& d) {
  const auto& losses = d.run.losses;
  double max_increase = 0;
  std::string trail;
  for (size_t i = 0; i < losses.size(); ++i) {
    if (i > 0) max_increase = std::max(max_increase, losses[i] - losses[i - 1]);
    trail += fmt("%s%.3f", trail.empty() ? "" : " ", losses[i]);
  }
  const bool ok = static_cast<int>(d.run.size()) == kRunIterations && losses.back() < losses.front() &&
                  max_increase <= kMaxLossIncrease * losses.front() && d.train_seconds < 600;
  report(4, "loss trend", ok,
         fmt("losses [%s]; largest single increase %.3f = %.1f%% of initial (limit %.0f%%); training %.0fs",
             trail.c_str(), max_increase, 100 * max_increase / losses.front(), 100 * kMaxLossIncrease,
             d.train_seconds));
}

void minority_improvement(const DefaultRun& d) {
  const auto first = per_class_accuracy(d.run.checkpoints.front().net, d.base);
  const auto last = per_class_accuracy(d.run.checkpoints.back().net, d.base);
  const auto counts = class_counts(labels_of(d.base)).counts;
  std::vector<std::pair<size_t, int>> by_count;
  for (const auto& [s, n] : counts) by_count.emplace_back(n, s);
  std::sort(by_count.begin(), by_count.end());
  const int r1 = by_count[0].second, r2 = by_count[1].second;
  const double before = (*first.at(r1) + *first.at(r2)) / 2, after = (*last.at(r1) + *last.at(r2)) / 2;
  const double spread_before = accuracy_spread(first), spread_after = accuracy_spread(last);
  report(5, "minority-class improvement", after >= before && spread_after < spread_before,
         fmt("rarest classes %d,%d mean accuracy %.3f -> %.3f; spread %.3f -> %.3f", r1, r2, before, after,
             spread_before, spread_after));
}

void two_means_optimality() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(51);
  int mismatches = 0;
  for (int m = 0; m < kTwoMeansMaps; ++m) {
    // Mix of unimodal, bimodal and heavy-tailed maps.
    std::normal_distribution<double> n(0.0, 1.0);
    std::exponential_distribution<double> e(1.0);
    std::vector<double> v(256);
    const int kind = m % 3;
    for (size_t i = 0; i < v.size(); ++i) {
      if (kind == 0) v[i] = n(rng);
      if (kind == 1) v[i] = n(rng) * 0.3 + (rng() % 5 == 0 ? 3.0 : 0.0);
      if (kind == 2) v[i] = (rng() % 2 ? 1 : -1) * e(rng) * e(rng);
    }
    DifferenceMap d;
    d.values = Eigen::Map<const MapMatrix>(v.data(), 16, 16);
    const auto mask = two_means(d);
    std::vector<double> values(v.size());
    std::vector<bool> high(v.size());
    for (size_t i = 0; i < v.size(); ++i) {
      values[i] = std::abs(v[i]);
      high[i] = mask.mask.data()[i] != 0;
    }
    if (oracle::partition_sse(values, high) != oracle::best_two_cluster_sse(values)) ++mismatches;
  }
  const double secs = seconds_since(t0);
  report(6, "2-means optimality", mismatches == 0 && secs < 10,
         fmt("%d random 16x16 maps, %d differ from the exhaustive optimum, %.1fs", kTwoMeansMaps, mismatches, secs));
}

void min_corr_correctness() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(61);
  std::normal_distribution<float> n(0.f, 1.f);
  auto random_map = [&] {
    Tensor t({12, 12});
    for (Index i = 0; i < t.size(); ++i) t[i] = n(rng);
    return t;
  };
  int mismatches = 0;
  for (int s = 0; s < kCorrStacks; ++s) {
    std::vector<Tensor> later, earlier;
    for (int j = 0; j < 16; ++j) {
      later.push_back(random_map());
      Tensor e = later.back();
      const float noise = 0.1f + static_cast<float>(rng() % 100) / 50.f;
      for (Index i = 0; i < e.size(); ++i) e[i] += noise * n(rng);
      if (rng() % 8 == 0) e = Tensor({12, 12});  // dead channel
      earlier.push_back(e);
    }
    if (min_corr_index(later, earlier) != oracle::min_corr(later, earlier)) ++mismatches;
  }
  // Constructed case: one channel is the negation of its counterpart.
  std::vector<Tensor> later, earlier;
  for (int j = 0; j < 8; ++j) {
    later.push_back(random_map());
    earlier.push_back(later.back());
  }
  earlier[5] = Tensor(later[5].shape(), -later[5].values());
  const size_t anti = min_corr_index(later, earlier);
  const double secs = seconds_since(t0);
  report(7, "min-correlation channel", mismatches == 0 && anti == 5 && secs < 5,
         fmt("%d random stacks, %d mismatches; anticorrelated channel 5 -> selected %zu; %.2fs", kCorrStacks,
             mismatches, anti, secs));
}

void highlight_contrast(const DefaultRun& d) {
  const auto t0 = Clock::now();
  const Proportions high{{6, 0.25}, {7, 0.25}, {8, 0.25}, {9, 0.25}};
  const auto images = synth_generate(kHighlightImages, high, d.cfg.train.image_size, kHighlightSeed);
  const auto& cks = d.run.checkpoints;
  const size_t last = cks.size() - 1;
  double final_iou = 0, early_iou = 0;
  for (const auto& s : images) {
    const auto late = extract_highlight_pair(cks[last].net, static_cast<int>(cks[last].iteration), cks[last - 1].net,
                                             static_cast<int>(cks[last - 1].iteration), s.image, d.cfg.highlight);
    const auto early = extract_highlight_pair(cks[1].net, 2, cks[0].net, 1, s.image, d.cfg.highlight);
    final_iou += mask_iou(late.mask.mask, *s.truth_mask);
    early_iou += mask_iou(early.mask.mask, *s.truth_mask);
  }
  final_iou /= static_cast<double>(images.size());
  early_iou /= static_cast<double>(images.size());
  const double secs = seconds_since(t0);
  report(8, "highlight contrast", final_iou > early_iou && secs < 120,
         fmt("%zu high-score images, mean IoU (net_%u, net_%u) %.4f vs (net_2, net_1) %.4f; %.1fs", images.size(),
             cks[last].iteration, cks[last - 1].iteration, final_iou, early_iou, secs));
}

void assigned_rate_contract(const DefaultRun& d) {
  std::mt19937_64 rng(71);
  const std::vector<int> scores{2, 3, 4, 5, 6, 7, 8, 9};
  double worst = 0;
  for (int t = 0; t < 200; ++t) {
    std::vector<int> predicted(1 + rng() % 2000);
    for (auto& p : predicted) p = scores[rng() % (1 + rng() % scores.size())];
    double sum = 0;
    for (const auto& [s, r] : assigned_rates(predicted, scores)) sum += r;
    worst = std::max(worst, std::abs(sum - 1.0));
  }
  const double before = share_above(assigned_rates(d.run.checkpoints.front().net, d.holdout), kSummaryScoreCut);
  const double after = share_above(assigned_rates(d.run.checkpoints.back().net, d.holdout), kSummaryScoreCut);
  report(9, "assigned-rate contract", worst <= kRateSumTolerance && after > before,
         fmt("max |sum - 1| %.1e over 200 random inputs; holdout share above score %d: %.3f -> %.3f", worst,
             kSummaryScoreCut, before, after));
}

void determinism_and_persistence(const DefaultRun& d) {
  const bool same_history = !d.history_a.empty() && d.history_a == d.history_b;
  bool roundtrip = true;
  for (const auto& ck : d.run.checkpoints) {
    const auto back = decode_checkpoint(encode_checkpoint(ck.net, ck.iteration));
    roundtrip = roundtrip && back.iteration == ck.iteration && back.net.identical(ck.net);
  }
  const std::string raw = read_file(checkpoint_path(d.dir, d.run.size()));
  int rejected = 0, cuts = 0;
  for (size_t cut : {size_t{0}, size_t{5}, size_t{64}, raw.size() / 3, raw.size() - 1}) {
    ++cuts;
    const fs::path p = d.dir.parent_path() / "truncated.ckpt";
    write_file_atomic(p, raw.substr(0, cut));
    try {
      load_checkpoint(p);
    } catch (const CorruptCheckpointError&) {
      ++rejected;
    }
  }
  report(10, "determinism and persistence", same_history && roundtrip && rejected == cuts,
         fmt("history.csv identical across reruns: %s; %zu checkpoints round-trip bitwise: %s; truncated files "
             "rejected %d/%d",
             same_history ? "yes" : "no", d.run.size(), roundtrip ? "yes" : "no", rejected, cuts));
}

}  // namespace

int main() {
  try {
    gradient_correctness();
    dropout_oracle();
    const DefaultRun d = make_default_run();
    threshold_tuning(d);
    loss_trend(d);
    minority_improvement(d);
    two_means_optimality();
    min_corr_correctness();
    highlight_contrast(d);
    assigned_rate_contract(d);
    determinism_and_persistence(d);
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 2;
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
