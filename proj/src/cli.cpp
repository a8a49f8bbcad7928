#include "reptrain/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <iostream>

#include "reptrain/config.hpp"
#include "reptrain/eval.hpp"
#include "reptrain/highlight.hpp"
#include "reptrain/image_io.hpp"
#include "reptrain/run_io.hpp"
#include "reptrain/synth.hpp"

namespace reptrain {
namespace fs = std::filesystem;
namespace {

bool has_entries(const fs::path& dir) { return fs::is_directory(dir) && !fs::is_empty(dir); }

// Removes the files a previous `train` wrote so a forced rerun starts clean.
void clear_run_files(const fs::path& dir) {
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    const bool ours = (name.starts_with("net_") && name.ends_with(".ckpt")) ||
                      (name.starts_with("dropped_") && name.ends_with(".csv")) || name == "history.csv" ||
                      name == "config.txt" || name == "stop_reason.txt";
    if (ours) fs::remove(entry.path());
  }
}

void print_distribution(std::ostream& out, const ScoreDistribution& dist) {
  const double total = static_cast<double>(std::max<size_t>(1, dist.total()));
  out << "score,count,fraction\n";
  for (const auto& [score, count] : dist.counts) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%d,%zu,%.4f\n", score, count, static_cast<double>(count) / total);
    out << buf;
  }
  out << "ranked_majority: " << format_int_list(dist.ranked_majority) << "\n";
}

struct SynthArgs {
  std::string out_dir;
  size_t n = 800;
  std::uint64_t seed = 1;
  int size = 32;
  std::string proportions;
  bool force = false;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const Proportions props = a.proportions.empty() ? default_proportions() : parse_proportions(a.proportions);
  largest_remainder_counts(a.n, props);  // validates before touching the disk
  if (has_entries(a.out_dir) && !a.force)
    throw ConfigError("output directory " + a.out_dir + " is not empty (use --force)");
  const SampleList samples = synth_generate(a.n, props, a.size, a.seed);
  export_dataset(samples, a.out_dir);
  const auto labels = labels_of(samples);
  print_distribution(out, class_counts(labels));
  return kExitOk;
}

// Train-side flags; unset optionals leave config-file values alone.
struct TrainArgs {
  std::string config_file;
  std::string run_dir;
  std::optional<std::string> manifest, image_root, synth_proportions, likelihood_mode;
  std::optional<size_t> synth_n;
  std::optional<std::uint64_t> synth_seed, seed;
  std::optional<int> epochs, batch_size, max_iterations, image_size, highlight_k;
  std::optional<double> lr, momentum, loss_threshold, target_fraction, k_lo, k_hi, k_step;
  bool own_class = false;
  bool freeze_conv = false;
  bool force = false;
};

RunConfig build_run_config(const TrainArgs& a) {
  RunConfig cfg;
  if (!a.config_file.empty()) apply_key_values(read_key_values(a.config_file), cfg);
  KeyValues kv;
  auto set = [&](const char* key, const auto& opt) {
    if (!opt) return;
    if constexpr (std::is_same_v<std::decay_t<decltype(*opt)>, std::string>)
      kv[key] = *opt;
    else {
      std::ostringstream s;
      s.precision(17);
      s << *opt;
      kv[key] = s.str();
    }
  };
  set("manifest", a.manifest);
  set("image_root", a.image_root);
  set("synth_proportions", a.synth_proportions);
  set("likelihood_mode", a.likelihood_mode);
  set("synth_n", a.synth_n);
  set("synth_seed", a.synth_seed);
  set("seed", a.seed);
  set("epochs_per_iteration", a.epochs);
  set("batch_size", a.batch_size);
  set("max_iterations", a.max_iterations);
  set("image_size", a.image_size);
  set("highlight_k", a.highlight_k);
  set("lr", a.lr);
  set("momentum", a.momentum);
  set("loss_threshold", a.loss_threshold);
  set("target_remaining_fraction", a.target_fraction);
  set("threshold_lo", a.k_lo);
  set("threshold_hi", a.k_hi);
  set("threshold_step", a.k_step);
  if (a.own_class) kv["literal_condition_mode"] = "false";
  if (a.freeze_conv) kv["freeze_conv"] = "true";
  if (!a.run_dir.empty()) kv["out_dir"] = a.run_dir;
  // A data source given on the command line replaces the one from the file.
  if (a.manifest) cfg.synth.reset();
  if (a.synth_n || a.synth_seed || a.synth_proportions) {
    if (!a.manifest) cfg.manifest.reset();
  }
  apply_key_values(kv, cfg);
  if (cfg.out_dir.empty()) throw ConfigError("no run directory given (--run-dir or out_dir)");
  cfg.validate();
  return cfg;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const RunConfig cfg = build_run_config(a);
  if (has_entries(cfg.out_dir)) {
    if (!a.force) throw ConfigError("run directory " + cfg.out_dir.string() + " is not empty (use --force)");
    clear_run_files(cfg.out_dir);
  }
  const SampleList base = load_source(cfg);
  if (base.empty()) throw ConfigError("the data source holds no samples");
  fs::create_directories(cfg.out_dir);
  write_file_atomic(cfg.out_dir / "config.txt", format_key_values(to_key_values(cfg)));

  const TrainRun run = repetitive_train(base, cfg.train, [&](const TrainRun& r) {
    write_latest_iteration(cfg.out_dir, r);
    const size_t i = r.size() - 1;
    char buf[160];
    std::snprintf(buf, sizeof buf, "iteration %u: loss %.4f, remaining %zu\n", r.checkpoints[i].iteration,
                  r.losses[i], r.remaining_counts[i]);
    out << buf << std::flush;
  });
  write_stop_reason(cfg.out_dir, run.stop_reason);
  out << "stop_reason: " << to_string(run.stop_reason) << "\n";
  return kExitOk;
}

RunConfig load_run_config(const fs::path& run_dir) {
  RunConfig cfg;
  apply_key_values(read_key_values(run_dir / "config.txt"), cfg);
  return cfg;
}

struct EvalArgs {
  std::string run_dir;
  std::string holdout;
  std::optional<size_t> holdout_n;
  std::string out_dir;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  if (!a.holdout.empty() && !fs::exists(a.holdout)) throw ConfigError("holdout manifest " + a.holdout + " not found");
  if (!fs::is_directory(a.run_dir)) throw ConfigError("run directory " + a.run_dir + " not found");
  const RunConfig cfg = load_run_config(a.run_dir);
  const TrainRun run = load_run(a.run_dir);
  const SampleList base = load_source(cfg);

  SampleList holdout;
  if (!a.holdout.empty()) {
    holdout = load_manifest(a.holdout, fs::path(a.holdout).parent_path(), cfg.train.class_scores,
                            cfg.train.image_size);
  } else if (cfg.synth) {
    const size_t n = a.holdout_n.value_or(std::max<size_t>(50, cfg.synth->n / 4));
    holdout = synth_generate(n, cfg.synth->proportions, cfg.train.image_size, cfg.synth->seed + 1000003);
  } else {
    out << "no --holdout given; table3 uses the training base\n";
    holdout = base;
  }
  if (holdout.empty()) throw ConfigError("holdout set is empty");
  const fs::path out_dir = a.out_dir.empty() ? fs::path(a.run_dir) / "report" : fs::path(a.out_dir);
  emit_report(run, base, holdout, out_dir);
  out << "report written to " << out_dir.string() << "\n";
  return kExitOk;
}

struct HighlightArgs {
  std::string run_dir;
  std::string image;
  std::string pair;
  std::optional<int> k;
  std::string out_dir;
  bool pre_activation = false;
  bool signed_values = false;
};

int cmd_highlight(const HighlightArgs& a, std::ostream& out) {
  if (!fs::exists(a.image)) throw ConfigError("image path " + a.image + " does not exist");
  if (!fs::is_directory(a.run_dir)) throw ConfigError("run directory " + a.run_dir + " not found");
  RunConfig cfg = load_run_config(a.run_dir);
  if (a.k) cfg.highlight.k = *a.k;
  if (a.pre_activation) cfg.highlight.use_post_activation = false;
  if (a.signed_values) cfg.highlight.signed_clustering = true;

  size_t available = 0;
  while (fs::exists(checkpoint_path(a.run_dir, available + 1))) ++available;
  size_t later = available, earlier = 0;
  if (!a.pair.empty()) {
    const auto ids = parse_int_list(a.pair);
    if (ids.size() != 2 || ids[0] < 1 || ids[1] < 1 || ids[0] == ids[1])
      throw ConfigError("--pair expects two distinct iterations I,J");
    later = static_cast<size_t>(ids[0]);
    earlier = static_cast<size_t>(ids[1]);
  } else {
    if (cfg.highlight.k < 1) throw ConfigError("k must be at least 1");
    earlier = later >= static_cast<size_t>(cfg.highlight.k) ? later - static_cast<size_t>(cfg.highlight.k) : 0;
  }
  if (later > available || earlier < 1 || earlier > available)
    throw ConfigError("run has " + std::to_string(available) + " checkpoints; cannot compare net_" +
                      std::to_string(later) + " with net_" + std::to_string(earlier));
  const Checkpoint net_later = load_checkpoint(checkpoint_path(a.run_dir, later));
  const Checkpoint net_earlier = load_checkpoint(checkpoint_path(a.run_dir, earlier));

  std::vector<fs::path> images;
  if (fs::is_directory(a.image)) {
    for (const auto& e : fs::directory_iterator(a.image))
      if (e.is_regular_file() && e.path().extension() == ".png") images.push_back(e.path());
    std::sort(images.begin(), images.end());
  } else {
    images.emplace_back(a.image);
  }
  const fs::path out_dir = a.out_dir.empty() ? fs::path(a.run_dir) / "highlight" : fs::path(a.out_dir);
  fs::create_directories(out_dir);
  const std::string suffix = "_" + std::to_string(later) + "_" + std::to_string(earlier);
  const Index size = cfg.train.image_size;
  for (const auto& path : images) {
    const Tensor image = resize_bilinear(to_tensor(read_png_rgb(path)), size, size);
    const HighlightResult r = extract_highlight_pair(net_later.net, static_cast<int>(later), net_earlier.net,
                                                     static_cast<int>(earlier), image, cfg.highlight);
    const std::string stem = path.stem().string();
    render_overlay(image, r.diff, r.mask, out_dir / (stem + "_overlay" + suffix + ".png"));

    Image8 raw;
    raw.height = r.diff.values.rows();
    raw.width = r.diff.values.cols();
    raw.channels = 1;
    const double lo = r.diff.values.minCoeff(), hi = r.diff.values.maxCoeff();
    for (Index i = 0; i < r.diff.values.size(); ++i)
      raw.pixels.push_back(to_byte(hi > lo ? (r.diff.values.data()[i] - lo) / (hi - lo) : 0.5));
    write_png(out_dir / (stem + "_diff" + suffix + ".png"), raw);
    write_correlations_csv(r.correlations, r.diff.channel, out_dir / (stem + "_correlations" + suffix + ".csv"));
    out << path.filename().string() << ": channel " << r.diff.channel << ", highlight pixels "
        << r.mask.mask.cast<int>().sum() << "\n";
  }
  return kExitOk;
}

int cmd_inspect(const std::string& path, std::ostream& out) {
  if (!fs::exists(path)) throw ConfigError("checkpoint " + path + " not found");
  const CheckpointHeader h = read_checkpoint_header(path);
  out << "format_version: " << h.version << "\n"
      << "iteration: " << h.iteration << "\n"
      << "num_classes: " << h.class_scores.size() << "\n"
      << "class_scores: " << format_int_list(h.class_scores) << "\n"
      << "input: " << h.input.channels << "x" << h.input.height << "x" << h.input.width << "\n"
      << "parameters: " << h.parameter_count << "\n"
      << "layers:\n";
  for (size_t i = 0; i < h.layers.size(); ++i) {
    out << "  " << i << " " << layer_name(h.layers[i].kind);
    std::visit(
        [&](const auto& k) {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Conv>)
            out << "(" << k.in_channels << "->" << k.out_channels << ", k=" << k.kernel_size << ", s=" << k.stride
                << ", p=" << k.padding << ")";
          else if constexpr (std::is_same_v<K, MaxPool>)
            out << "(" << k.window << ", s=" << k.stride << ")";
          else if constexpr (std::is_same_v<K, Dense>)
            out << "(" << k.in_features << "->" << k.out_features << ")";
        },
        h.layers[i].kind);
    out << (h.layers[i].trainable ? "" : " [frozen]") << "\n";
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Repetitive sample drop-out training and highlight extraction"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic imbalanced dataset with truth masks");
  s->add_option("--out", synth.out_dir, "Output directory")->required();
  s->add_option("--n", synth.n, "Number of images");
  s->add_option("--seed", synth.seed, "Random seed");
  s->add_option("--size", synth.size, "Image side length in pixels");
  s->add_option("--proportions", synth.proportions, "score:fraction list, e.g. 2:0.1,3:0.9");
  s->add_flag("--force", synth.force, "Write into a non-empty directory");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Run repetitive drop-out training");
  t->add_option("--config", train.config_file, "Flat key = value config file");
  t->add_option("--run-dir", train.run_dir, "Run output directory");
  t->add_option("--manifest", train.manifest, "path,score CSV manifest");
  t->add_option("--image-root", train.image_root, "Directory manifest paths are relative to");
  t->add_option("--synth-n", train.synth_n, "Generate a synthetic base of this size");
  t->add_option("--synth-seed", train.synth_seed, "Seed of the synthetic base");
  t->add_option("--synth-proportions", train.synth_proportions, "score:fraction list");
  t->add_option("--seed", train.seed, "Training seed");
  t->add_option("--epochs", train.epochs, "Epochs per iteration");
  t->add_option("--lr", train.lr, "Learning rate");
  t->add_option("--momentum", train.momentum, "SGD momentum");
  t->add_option("--batch-size", train.batch_size, "Mini-batch size");
  t->add_option("--loss-threshold", train.loss_threshold, "Stop once the quadratic loss drops below this");
  t->add_option("--max-iterations", train.max_iterations, "Iteration budget");
  t->add_option("--image-size", train.image_size, "Input resolution");
  t->add_option("--target-fraction", train.target_fraction, "Fraction of the base to keep");
  t->add_option("--k-lo", train.k_lo, "Lower K1/K2 grid bound");
  t->add_option("--k-hi", train.k_hi, "Upper K1/K2 grid bound");
  t->add_option("--k-step", train.k_step, "K1/K2 grid step");
  t->add_option("--likelihood-mode", train.likelihood_mode, "sigmoid or softmax");
  t->add_option("--highlight-k", train.highlight_k, "Default checkpoint gap for highlight");
  t->add_flag("--own-class", train.own_class, "Second and third majority classes test their own likelihood");
  t->add_flag("--freeze-conv", train.freeze_conv, "Freeze conv layers when retraining");
  t->add_flag("--force", train.force, "Replace an existing run");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Write accuracy, loss and assigned-rate tables");
  e->add_option("--run", eval.run_dir, "Run directory")->required();
  e->add_option("--holdout", eval.holdout, "Holdout manifest");
  e->add_option("--holdout-n", eval.holdout_n, "Synthetic holdout size when no manifest is given");
  e->add_option("--out", eval.out_dir, "Report directory (default <run>/report)");

  HighlightArgs hl;
  auto* h = app.add_subcommand("highlight", "Extract highlight regions from two checkpoints");
  h->add_option("--run", hl.run_dir, "Run directory")->required();
  h->add_option("--image", hl.image, "PNG image or directory of PNGs")->required();
  h->add_option("--pair", hl.pair, "Checkpoint pair I,J (default: last and last-k)");
  h->add_option("--k", hl.k, "Checkpoint gap");
  h->add_option("--out", hl.out_dir, "Output directory (default <run>/highlight)");
  h->add_flag("--pre-activation", hl.pre_activation, "Use conv1 outputs before ReLU");
  h->add_flag("--signed", hl.signed_values, "Cluster signed differences");

  std::string ckpt;
  auto* i = app.add_subcommand("inspect", "Print a checkpoint header");
  i->add_option("checkpoint", ckpt, "Checkpoint file")->required();

  std::vector<const char*> argv{"reptrain"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (s->parsed()) return cmd_synth(synth, out);
    if (t->parsed()) return cmd_train(train, out);
    if (e->parsed()) return cmd_eval(eval, out);
    if (h->parsed()) return cmd_highlight(hl, out);
    if (i->parsed()) return cmd_inspect(ckpt, out);
  } catch (const ConfigError& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const TrainingError& ex) {
    err << "error: training stopped at iteration " << ex.iteration() << ": " << ex.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace reptrain
