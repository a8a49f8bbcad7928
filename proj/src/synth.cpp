#include "reptrain/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <sstream>

#include "reptrain/error.hpp"
#include "reptrain/image_io.hpp"

namespace reptrain {
namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

using Rgb = std::array<double, 3>;

// Saturated blob colors for the high scores.
Rgb palette(int score) {
  switch (score) {
    case 6: return {0.92, 0.18, 0.15};
    case 7: return {0.15, 0.88, 0.22};
    case 8: return {0.15, 0.30, 0.95};
    default: return {0.95, 0.92, 0.15};
  }
}

struct Canvas {
  Index size;
  std::vector<Rgb> px;
  Mask mask;

  Rgb& at(Index y, Index x) { return px[static_cast<size_t>(y * size + x)]; }
};

void paint_background(Canvas& c, Rng& rng) {
  // Low-saturation texture: a gray level with a slight tint, luminance waves and fine noise.
  const double gray = uniform(rng, 0.3, 0.7);
  Rgb base{gray + uniform(rng, -0.04, 0.04), gray + uniform(rng, -0.04, 0.04), gray + uniform(rng, -0.04, 0.04)};
  struct Wave {
    double fx, fy, phase, amp;
  };
  std::array<Wave, 2> waves;
  for (auto& w : waves) {
    const double freq = uniform(rng, 0.5, 2.0) * 2.0 * std::numbers::pi / static_cast<double>(c.size);
    const double angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    w.fx = freq * std::cos(angle);
    w.fy = freq * std::sin(angle);
    w.phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    w.amp = uniform(rng, 0.04, 0.1);
  }
  for (Index y = 0; y < c.size; ++y)
    for (Index x = 0; x < c.size; ++x) {
      double lum = 0.0;
      for (const auto& w : waves) lum += w.amp * std::sin(w.fx * x + w.fy * y + w.phase);
      const double grain = uniform(rng, -0.03, 0.03);
      Rgb& p = c.at(y, x);
      for (int ch = 0; ch < 3; ++ch) p[ch] = base[ch] + lum + grain;
    }
}

struct Ellipse {
  double cx, cy, rx, ry;
  // Normalized radial distance; <= 1 inside.
  double radius(Index x, Index y) const {
    const double dx = (static_cast<double>(x) + 0.5 - cx) / rx;
    const double dy = (static_cast<double>(y) + 0.5 - cy) / ry;
    return std::sqrt(dx * dx + dy * dy);
  }
};

Ellipse random_ellipse(Index size, Rng& rng) {
  const double s = static_cast<double>(size);
  return {uniform(rng, 0.3 * s, 0.7 * s), uniform(rng, 0.3 * s, 0.7 * s), uniform(rng, 0.16 * s, 0.28 * s),
          uniform(rng, 0.16 * s, 0.28 * s)};
}

void paint_cluttered(Canvas& c, const Ellipse& e, Rng& rng) {
  const Index cells = (c.size + 1) / 2;
  std::vector<Rgb> speckle(static_cast<size_t>(cells * cells));
  for (auto& s : speckle) s = {uniform(rng, 0, 1), uniform(rng, 0, 1), uniform(rng, 0, 1)};
  for (Index y = 0; y < c.size; ++y)
    for (Index x = 0; x < c.size; ++x) {
      if (e.radius(x, y) > 1.0) continue;
      const Rgb& s = speckle[static_cast<size_t>((y / 2) * cells + x / 2)];
      Rgb& p = c.at(y, x);
      for (int ch = 0; ch < 3; ++ch) p[ch] = 0.15 * p[ch] + 0.85 * s[ch];
      c.mask(y, x) = 1;
    }
}

void paint_weak(Canvas& c, const Ellipse& e, double strength, Rng& rng) {
  Rgb dir{uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)};
  const double norm = std::max(1e-6, std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]));
  for (auto& d : dir) d /= norm;
  for (Index y = 0; y < c.size; ++y)
    for (Index x = 0; x < c.size; ++x) {
      // Full tint inside 0.6 r, fading linearly to zero at 1.2 r.
      const double r = e.radius(x, y);
      const double weight = std::clamp((1.2 - r) / 0.6, 0.0, 1.0);
      if (weight <= 0.0) continue;
      Rgb& p = c.at(y, x);
      for (int ch = 0; ch < 3; ++ch) p[ch] += strength * weight * dir[ch] * std::sqrt(3.0);
      if (weight >= 0.5) c.mask(y, x) = 1;
    }
}

void paint_sharp(Canvas& c, const Ellipse& e, int score, Rng& rng) {
  Rgb color = palette(score);
  for (auto& v : color) v = std::clamp(v + uniform(rng, -0.05, 0.05), 0.0, 1.0);
  for (Index y = 0; y < c.size; ++y)
    for (Index x = 0; x < c.size; ++x) {
      if (e.radius(x, y) > 1.0) continue;
      c.at(y, x) = color;
      c.mask(y, x) = 1;
    }
}

Sample render(int id, int score, Index size, Rng& rng) {
  Canvas c{size, std::vector<Rgb>(static_cast<size_t>(size * size)), Mask::Zero(size, size)};
  paint_background(c, rng);
  const Ellipse e = random_ellipse(size, rng);
  if (score <= 2) {
    paint_cluttered(c, e, rng);
  } else if (score <= 5) {
    // Faint subjects: presence rate and contrast grow with the score.
    static constexpr double presence[] = {0.3, 0.7, 0.95};
    static constexpr double lo[] = {0.05, 0.12, 0.22};
    static constexpr double hi[] = {0.15, 0.25, 0.38};
    const int k = score - 3;
    const double present = uniform(rng, 0, 1);
    const double strength = uniform(rng, lo[k], hi[k]);
    if (present < presence[k]) paint_weak(c, e, strength, rng);
  } else {
    paint_sharp(c, e, score, rng);
  }
  Tensor image({size, size, 3});
  for (Index y = 0; y < size; ++y)
    for (Index x = 0; x < size; ++x)
      for (int ch = 0; ch < 3; ++ch) image(y, x, ch) = static_cast<float>(std::clamp(c.at(y, x)[ch], 0.0, 1.0));
  return Sample{id, std::move(image), score, std::move(c.mask)};
}

}  // namespace

Proportions default_proportions() {
  return {{2, 0.05}, {3, 0.27}, {4, 0.33}, {5, 0.21}, {6, 0.07}, {7, 0.04}, {8, 0.02}, {9, 0.01}};
}

std::map<int, size_t> largest_remainder_counts(size_t n, const Proportions& proportions) {
  double total = 0.0;
  for (const auto& [score, f] : proportions) {
    if (!(f >= 0.0)) throw ConfigError("proportion for score " + std::to_string(score) + " is negative");
    total += f;
  }
  if (proportions.empty() || std::abs(total - 1.0) > 1e-9)
    throw ConfigError("proportions must sum to 1 (got " + std::to_string(total) + ")");

  std::map<int, size_t> counts;
  std::vector<std::pair<double, int>> remainders;
  size_t assigned = 0;
  for (const auto& [score, f] : proportions) {
    const double exact = static_cast<double>(n) * f;
    const auto whole = static_cast<size_t>(std::floor(exact));
    counts[score] = whole;
    assigned += whole;
    remainders.emplace_back(exact - static_cast<double>(whole), score);
  }
  std::stable_sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (size_t i = 0; assigned < n; ++i, ++assigned) ++counts[remainders[i % remainders.size()].second];
  return counts;
}

SampleList synth_generate(size_t n, const Proportions& proportions, Index image_size, std::uint64_t seed) {
  if (image_size < 8) throw ConfigError("synthetic images must be at least 8 pixels wide");
  const auto counts = largest_remainder_counts(n, proportions);
  std::vector<int> labels;
  labels.reserve(n);
  for (const auto& [score, count] : counts) labels.insert(labels.end(), count, score);
  Rng order_rng(seed);
  std::shuffle(labels.begin(), labels.end(), order_rng);

  SampleList samples;
  samples.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(i), 0x5e17u};
    Rng rng(seq);
    samples.push_back(render(static_cast<int>(i), labels[i], image_size, rng));
  }
  return samples;
}

void export_dataset(const SampleList& samples, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "masks");
  std::vector<std::pair<std::string, int>> rows;
  for (const auto& s : samples) {
    char name[32];
    std::snprintf(name, sizeof name, "%05d.png", s.id);
    write_png(dir / "images" / name, to_image8(s.image));
    Image8 mask;
    mask.height = s.image.dim(0);
    mask.width = s.image.dim(1);
    mask.channels = 1;
    mask.pixels.assign(static_cast<size_t>(mask.height * mask.width), 0);
    if (s.truth_mask)
      for (Index y = 0; y < mask.height; ++y)
        for (Index x = 0; x < mask.width; ++x) mask.at(y, x, 0) = (*s.truth_mask)(y, x) ? 255 : 0;
    write_png(dir / "masks" / name, mask);
    rows.emplace_back(std::string("images/") + name, s.score_label);
  }
  write_manifest(dir / "manifest.csv", rows);
}

Proportions parse_proportions(const std::string& text) {
  Proportions out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("proportion '" + item + "' is not score:fraction");
    try {
      size_t used_s = 0, used_f = 0;
      const std::string s = item.substr(0, colon), f = item.substr(colon + 1);
      const int score = std::stoi(s, &used_s);
      const double frac = std::stod(f, &used_f);
      if (used_s != s.size() || used_f != f.size()) throw std::invalid_argument(item);
      if (!out.emplace(score, frac).second) throw ConfigError("score " + s + " listed twice in proportions");
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError("proportion '" + item + "' is not score:fraction");
    }
  }
  if (out.empty()) throw ConfigError("empty proportions");
  return out;
}

std::string format_proportions(const Proportions& proportions) {
  std::ostringstream out;
  out.precision(17);
  bool first = true;
  for (const auto& [score, f] : proportions) {
    out << (first ? "" : ",") << score << ':' << f;
    first = false;
  }
  return out.str();
}

}  // namespace reptrain
