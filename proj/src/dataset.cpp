#include "reptrain/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

#include "reptrain/checkpoint.hpp"
#include "reptrain/error.hpp"
#include "reptrain/image_io.hpp"

namespace reptrain {

DatasetView::DatasetView(SharedSamples base) : DatasetView(base, std::vector<bool>(base ? base->size() : 0, true)) {}

DatasetView::DatasetView(SharedSamples base, std::vector<bool> active) : base_(std::move(base)), active_(std::move(active)) {
  if (!base_) throw DataError("dataset view needs a base dataset");
  if (active_.size() != base_->size()) throw DataError("active mask length does not match base size");
  active_count_ = static_cast<size_t>(std::count(active_.begin(), active_.end(), true));
}

std::vector<int> DatasetView::active_ids() const {
  std::vector<int> ids;
  ids.reserve(active_count_);
  for (size_t i = 0; i < active_.size(); ++i)
    if (active_[i]) ids.push_back((*base_)[i].id);
  return ids;
}

std::vector<const Sample*> DatasetView::active_samples() const {
  std::vector<const Sample*> out;
  out.reserve(active_count_);
  for (size_t i = 0; i < active_.size(); ++i)
    if (active_[i]) out.push_back(&(*base_)[i]);
  return out;
}

DatasetView apply_mask(const SharedSamples& base, std::span<const int> dropped_ids) {
  std::unordered_map<int, size_t> index;
  for (size_t i = 0; i < base->size(); ++i) index.emplace((*base)[i].id, i);
  std::vector<bool> active(base->size(), true);
  for (int id : dropped_ids) {
    auto it = index.find(id);
    if (it == index.end()) throw DataError("unknown sample id " + std::to_string(id));
    active[it->second] = false;
  }
  return DatasetView(base, std::move(active));
}

size_t ScoreDistribution::total() const {
  size_t n = 0;
  for (const auto& [score, count] : counts) n += count;
  return n;
}

ScoreDistribution class_counts(std::span<const int> labels) {
  ScoreDistribution dist;
  for (int s : labels) ++dist.counts[s];
  std::vector<std::pair<int, size_t>> ranked(dist.counts.begin(), dist.counts.end());
  // counts is ordered by score, so a stable sort on count keeps lower scores first on ties.
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  for (size_t i = 0; i < ranked.size() && i < 3; ++i) dist.ranked_majority.push_back(ranked[i].first);
  return dist;
}

ScoreDistribution class_counts(const DatasetView& view) {
  std::vector<int> labels;
  labels.reserve(view.size());
  for (const Sample* s : view.active_samples()) labels.push_back(s->score_label);
  return class_counts(labels);
}

namespace {

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

}  // namespace

SampleList load_manifest(const std::filesystem::path& manifest, const std::filesystem::path& image_root,
                         const std::vector<int>& class_scores, Index image_size) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open manifest " + manifest.string());
  SampleList samples;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
      if (trim(line) != "path,score")
        throw DataError(manifest.string() + ":1: expected header 'path,score', got '" + line + "'");
      continue;
    }
    if (trim(line).empty()) continue;
    const auto comma = line.rfind(',');
    const std::string where = manifest.string() + ":" + std::to_string(line_no);
    if (comma == std::string::npos) throw DataError(where + ": expected 'path,score'");
    const std::string rel = trim(line.substr(0, comma));
    const std::string score_text = trim(line.substr(comma + 1));
    int score = 0;
    try {
      size_t used = 0;
      score = std::stoi(score_text, &used);
      if (used != score_text.size()) throw std::invalid_argument(score_text);
    } catch (const std::exception&) {
      throw DataError(where + ": score '" + score_text + "' is not an integer");
    }
    if (std::find(class_scores.begin(), class_scores.end(), score) == class_scores.end())
      throw DataError(where + ": score " + std::to_string(score) + " is not one of the configured class scores");

    Tensor image;
    try {
      image = to_tensor(read_png_rgb(image_root / rel));
    } catch (const Error& e) {
      throw DataError(where + ": unreadable image '" + rel + "': " + e.what());
    }
    samples.push_back(Sample{static_cast<int>(samples.size()), resize_bilinear(image, image_size, image_size), score,
                             std::nullopt});
  }
  return samples;
}

void write_manifest(const std::filesystem::path& manifest, const std::vector<std::pair<std::string, int>>& rows) {
  std::ostringstream out;
  out << "path,score\n";
  for (const auto& [path, score] : rows) out << path << ',' << score << '\n';
  write_file_atomic(manifest, out.str());
}

std::pair<SampleList, SampleList> shuffle_split(const SampleList& samples, double holdout_fraction,
                                                std::uint64_t seed) {
  if (!(holdout_fraction >= 0.0 && holdout_fraction <= 1.0)) throw ConfigError("holdout fraction must lie in [0, 1]");
  std::vector<size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto holdout_n = static_cast<size_t>(std::llround(holdout_fraction * static_cast<double>(samples.size())));
  SampleList train, holdout;
  for (size_t i = 0; i < order.size(); ++i) {
    SampleList& dst = i < holdout_n ? holdout : train;
    Sample s = samples[order[i]];
    s.id = static_cast<int>(dst.size());
    dst.push_back(std::move(s));
  }
  return {std::move(train), std::move(holdout)};
}

std::vector<int> labels_of(const SampleList& samples) {
  std::vector<int> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) labels.push_back(s.score_label);
  return labels;
}

}  // namespace reptrain
