#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "reptrain/highlight.hpp"
#include "reptrain/synth.hpp"
#include "reptrain/trainer.hpp"

namespace reptrain {

// Flat `key = value` configuration. '#' starts a comment line.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(const std::string& text);
KeyValues read_key_values(const std::filesystem::path& path);
std::string format_key_values(const KeyValues& kv);

struct ManifestSource {
  std::filesystem::path manifest;
  std::filesystem::path image_root;  // defaults to the manifest's directory
};

struct SynthSource {
  size_t n = 800;
  Proportions proportions = default_proportions();
  std::uint64_t seed = 1;
};

// Everything one CLI run needs. Exactly one data source must be set.
struct RunConfig {
  TrainConfig train;
  HighlightConfig highlight;
  std::optional<ManifestSource> manifest;
  std::optional<SynthSource> synth;
  std::filesystem::path out_dir;

  void validate() const;
};

// Documented keys:
//   class_scores, image_size, epochs_per_iteration, lr, momentum, batch_size,
//   loss_threshold, max_iterations, target_remaining_fraction, threshold_lo,
//   threshold_hi, threshold_step, seed, literal_condition_mode, freeze_conv,
//   likelihood_mode, highlight_k, highlight_post_activation,
//   highlight_signed, manifest, image_root, synth_n, synth_proportions,
//   synth_seed, out_dir
// Unknown keys are rejected.
void apply_key_values(const KeyValues& kv, RunConfig& cfg);
KeyValues to_key_values(const RunConfig& cfg);

// Loads the samples named by the config's data source.
SampleList load_source(const RunConfig& cfg);

std::string format_int_list(const std::vector<int>& values);
std::vector<int> parse_int_list(const std::string& text);

}  // namespace reptrain
