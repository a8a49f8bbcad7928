#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "reptrain/trainer.hpp"

namespace reptrain {

// score -> accuracy; nullopt for a class with no samples.
using AccuracyRow = std::map<int, std::optional<double>>;
// score -> fraction of samples assigned to it.
using AssignedRates = std::map<int, double>;

AccuracyRow per_class_accuracy(std::span<const int> labels, std::span<const int> predicted,
                               const std::vector<int>& class_scores);
AccuracyRow per_class_accuracy(const Network& net, const SampleList& base);

AssignedRates assigned_rates(std::span<const int> predicted, const std::vector<int>& class_scores);
AssignedRates assigned_rates(const Network& net, const SampleList& samples);

// Sum of the rates of every class scored strictly above `score`.
double share_above(const AssignedRates& rates, int score);

// max - min over the present classes of an accuracy row.
double accuracy_spread(const AccuracyRow& row);

std::vector<std::pair<int, double>> loss_table(const TrainRun& run);

// The summary statistic: share of the holdout assigned to scores over 4.
inline constexpr int kSummaryScoreCut = 4;

// Writes table1.csv (training-base accuracy per class and iteration),
// table1_holdout.csv, table2.csv (losses), table3.csv (holdout assigned
// rates) and summary.md.
void emit_report(const TrainRun& run, const SampleList& base, const SampleList& holdout,
                 const std::filesystem::path& out_dir);

}  // namespace reptrain
