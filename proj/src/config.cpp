#include "reptrain/config.hpp"

#include <sstream>

#include "reptrain/checkpoint.hpp"

namespace reptrain {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  try {
    size_t used = 0;
    T value;
    if constexpr (std::is_same_v<T, int>)
      value = std::stoi(text, &used);
    else if constexpr (std::is_same_v<T, double>)
      value = std::stod(text, &used);
    else
      value = static_cast<T>(std::stoull(text, &used));
    if (used != text.size()) throw std::invalid_argument(text);
    return value;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + text + "'");
}

std::string fmt_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return kv;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file " + path.string() + " does not exist");
  return parse_key_values(read_file(path));
}

std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

std::string format_int_list(const std::vector<int>& values) {
  std::string out;
  for (size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + std::to_string(values[i]);
  return out;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<int>("list", trim(item)));
  return out;
}

void RunConfig::validate() const {
  train.validate();
  if (manifest.has_value() == synth.has_value())
    throw ConfigError("exactly one data source (manifest or synthetic) must be given");
  if (manifest && !std::filesystem::exists(manifest->manifest))
    throw ConfigError("manifest " + manifest->manifest.string() + " does not exist");
  if (highlight.k < 1) throw ConfigError("highlight_k must be at least 1");
}

void apply_key_values(const KeyValues& kv, RunConfig& cfg) {
  auto& t = cfg.train;
  for (const auto& [key, value] : kv) {
    if (key == "class_scores") t.class_scores = parse_int_list(value);
    else if (key == "image_size") t.image_size = parse_number<int>(key, value);
    else if (key == "epochs_per_iteration") t.epochs_per_iteration = parse_number<int>(key, value);
    else if (key == "lr") t.lr = parse_number<double>(key, value);
    else if (key == "momentum") t.momentum = parse_number<double>(key, value);
    else if (key == "batch_size") t.batch_size = parse_number<int>(key, value);
    else if (key == "loss_threshold") t.loss_threshold = parse_number<double>(key, value);
    else if (key == "max_iterations") t.max_iterations = parse_number<int>(key, value);
    else if (key == "target_remaining_fraction") t.target_remaining_fraction = parse_number<double>(key, value);
    else if (key == "threshold_lo") t.threshold_lo = parse_number<double>(key, value);
    else if (key == "threshold_hi") t.threshold_hi = parse_number<double>(key, value);
    else if (key == "threshold_step") t.threshold_step = parse_number<double>(key, value);
    else if (key == "seed") t.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "literal_condition_mode") t.literal_condition_mode = parse_bool(key, value);
    else if (key == "freeze_conv") t.freeze_conv = parse_bool(key, value);
    else if (key == "likelihood_mode") {
      if (value == "sigmoid") t.likelihood_mode = LikelihoodMode::Sigmoid;
      else if (value == "softmax") t.likelihood_mode = LikelihoodMode::Softmax;
      else throw ConfigError("likelihood_mode must be sigmoid or softmax");
    } else if (key == "highlight_k") cfg.highlight.k = parse_number<int>(key, value);
    else if (key == "highlight_post_activation") cfg.highlight.use_post_activation = parse_bool(key, value);
    else if (key == "highlight_signed") cfg.highlight.signed_clustering = parse_bool(key, value);
    else if (key == "manifest") {
      if (!cfg.manifest) cfg.manifest.emplace();
      cfg.manifest->manifest = value;
    } else if (key == "image_root") {
      if (!cfg.manifest) cfg.manifest.emplace();
      cfg.manifest->image_root = value;
    } else if (key == "synth_n") {
      if (!cfg.synth) cfg.synth.emplace();
      cfg.synth->n = parse_number<std::uint64_t>(key, value);
    } else if (key == "synth_proportions") {
      if (!cfg.synth) cfg.synth.emplace();
      cfg.synth->proportions = parse_proportions(value);
    } else if (key == "synth_seed") {
      if (!cfg.synth) cfg.synth.emplace();
      cfg.synth->seed = parse_number<std::uint64_t>(key, value);
    } else if (key == "out_dir") cfg.out_dir = value;
    else throw ConfigError("unknown config key '" + key + "'");
  }
}

KeyValues to_key_values(const RunConfig& cfg) {
  const auto& t = cfg.train;
  KeyValues kv{
      {"class_scores", format_int_list(t.class_scores)},
      {"image_size", std::to_string(t.image_size)},
      {"epochs_per_iteration", std::to_string(t.epochs_per_iteration)},
      {"lr", fmt_double(t.lr)},
      {"momentum", fmt_double(t.momentum)},
      {"batch_size", std::to_string(t.batch_size)},
      {"loss_threshold", fmt_double(t.loss_threshold)},
      {"max_iterations", std::to_string(t.max_iterations)},
      {"target_remaining_fraction", fmt_double(t.target_remaining_fraction)},
      {"threshold_lo", fmt_double(t.threshold_lo)},
      {"threshold_hi", fmt_double(t.threshold_hi)},
      {"threshold_step", fmt_double(t.threshold_step)},
      {"seed", std::to_string(t.seed)},
      {"literal_condition_mode", t.literal_condition_mode ? "true" : "false"},
      {"freeze_conv", t.freeze_conv ? "true" : "false"},
      {"likelihood_mode", t.likelihood_mode == LikelihoodMode::Sigmoid ? "sigmoid" : "softmax"},
      {"highlight_k", std::to_string(cfg.highlight.k)},
      {"highlight_post_activation", cfg.highlight.use_post_activation ? "true" : "false"},
      {"highlight_signed", cfg.highlight.signed_clustering ? "true" : "false"},
  };
  if (cfg.manifest) {
    kv["manifest"] = cfg.manifest->manifest.string();
    kv["image_root"] = cfg.manifest->image_root.string();
  }
  if (cfg.synth) {
    kv["synth_n"] = std::to_string(cfg.synth->n);
    kv["synth_proportions"] = format_proportions(cfg.synth->proportions);
    kv["synth_seed"] = std::to_string(cfg.synth->seed);
  }
  if (!cfg.out_dir.empty()) kv["out_dir"] = cfg.out_dir.string();
  return kv;
}

SampleList load_source(const RunConfig& cfg) {
  if (cfg.manifest) {
    auto root = cfg.manifest->image_root.empty() ? cfg.manifest->manifest.parent_path() : cfg.manifest->image_root;
    return load_manifest(cfg.manifest->manifest, root, cfg.train.class_scores, cfg.train.image_size);
  }
  if (cfg.synth) return synth_generate(cfg.synth->n, cfg.synth->proportions, cfg.train.image_size, cfg.synth->seed);
  throw ConfigError("no data source configured");
}

}  // namespace reptrain
