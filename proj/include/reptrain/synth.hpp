#pragma once

#include <cstdint>
#include <filesystem>
#include <map>

#include "reptrain/dataset.hpp"

namespace reptrain {

using Proportions = std::map<int, double>;

// Imbalanced score mix with most of the mass on scores 3-5.
Proportions default_proportions();

// Per-score counts from largest-remainder rounding of n * fraction. Ties in
// the fractional part go to the lower score.
std::map<int, size_t> largest_remainder_counts(size_t n, const Proportions& proportions);

// Procedural dataset with ground-truth highlight masks.
//
// Every image is a smooth textured background plus a score-dependent blob:
//   score <= 2  cluttered blob of random speckles
//   score 3-5   weak, soft-edged tint (often absent for 3, sometimes for 4)
//   score >= 6  sharp, saturated blob whose hue depends on the score
// truth_mask marks blob pixels and is all-zero when no blob was drawn.
SampleList synth_generate(size_t n, const Proportions& proportions, Index image_size, std::uint64_t seed);

// Writes images/NNNNN.png, masks/NNNNN.png and manifest.csv under dir.
void export_dataset(const SampleList& samples, const std::filesystem::path& dir);

Proportions parse_proportions(const std::string& text);
std::string format_proportions(const Proportions& proportions);

}  // namespace reptrain
