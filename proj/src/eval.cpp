#include "reptrain/eval.hpp"

#include <algorithm>
#include <cstdio>

namespace reptrain {
namespace {

std::string fmt(double v, const char* pattern = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::string accuracy_csv(const std::vector<AccuracyRow>& rows, const TrainRun& run, const std::vector<int>& scores) {
  std::string out = "score";
  for (const auto& ck : run.checkpoints) out += ",net_" + std::to_string(ck.iteration);
  out += "\n";
  for (int s : scores) {
    out += std::to_string(s);
    for (const auto& row : rows) {
      out += ",";
      if (const auto& cell = row.at(s)) out += fmt(*cell);
    }
    out += "\n";
  }
  return out;
}

}  // namespace

AccuracyRow per_class_accuracy(std::span<const int> labels, std::span<const int> predicted,
                               const std::vector<int>& class_scores) {
  if (labels.size() != predicted.size()) throw DataError("label and prediction counts differ");
  std::map<int, size_t> total, correct;
  for (size_t i = 0; i < labels.size(); ++i) {
    ++total[labels[i]];
    if (labels[i] == predicted[i]) ++correct[labels[i]];
  }
  AccuracyRow row;
  for (int s : class_scores) {
    if (total[s] == 0)
      row[s] = std::nullopt;
    else
      row[s] = static_cast<double>(correct[s]) / static_cast<double>(total[s]);
  }
  return row;
}

AccuracyRow per_class_accuracy(const Network& net, const SampleList& base) {
  if (base.empty()) throw DataError("per-class accuracy of an empty dataset");
  return per_class_accuracy(labels_of(base), classify_all(net, base), net.class_scores());
}

AssignedRates assigned_rates(std::span<const int> predicted, const std::vector<int>& class_scores) {
  if (predicted.empty()) throw DataError("assigned rates of an empty sample set");
  AssignedRates rates;
  for (int s : class_scores) rates[s] = 0.0;
  std::map<int, size_t> counts;
  for (int p : predicted) ++counts[p];
  for (auto& [s, r] : rates) r = static_cast<double>(counts[s]) / static_cast<double>(predicted.size());
  return rates;
}

AssignedRates assigned_rates(const Network& net, const SampleList& samples) {
  if (samples.empty()) throw DataError("assigned rates of an empty sample set");
  return assigned_rates(classify_all(net, samples), net.class_scores());
}

double share_above(const AssignedRates& rates, int score) {
  double sum = 0.0;
  for (const auto& [s, r] : rates)
    if (s > score) sum += r;
  return sum;
}

double accuracy_spread(const AccuracyRow& row) {
  double lo = 1.0, hi = 0.0;
  bool any = false;
  for (const auto& [s, cell] : row)
    if (cell) {
      lo = std::min(lo, *cell);
      hi = std::max(hi, *cell);
      any = true;
    }
  return any ? hi - lo : 0.0;
}

std::vector<std::pair<int, double>> loss_table(const TrainRun& run) {
  std::vector<std::pair<int, double>> out;
  for (size_t i = 0; i < run.size(); ++i) out.emplace_back(static_cast<int>(run.checkpoints[i].iteration), run.losses[i]);
  return out;
}

void emit_report(const TrainRun& run, const SampleList& base, const SampleList& holdout,
                 const std::filesystem::path& out_dir) {
  if (run.size() == 0) throw DataError("cannot report on an empty run");
  std::filesystem::create_directories(out_dir);
  const auto& scores = run.checkpoints.front().net.class_scores();

  std::vector<AccuracyRow> train_acc, holdout_acc;
  std::vector<AssignedRates> rates;
  for (const auto& ck : run.checkpoints) {
    train_acc.push_back(per_class_accuracy(ck.net, base));
    const auto predicted = classify_all(ck.net, holdout);
    holdout_acc.push_back(per_class_accuracy(labels_of(holdout), predicted, scores));
    rates.push_back(assigned_rates(predicted, scores));
  }

  write_file_atomic(out_dir / "table1.csv", accuracy_csv(train_acc, run, scores));
  write_file_atomic(out_dir / "table1_holdout.csv", accuracy_csv(holdout_acc, run, scores));

  std::string t2 = "iteration,loss\n";
  for (const auto& [it, loss] : loss_table(run)) t2 += std::to_string(it) + "," + fmt(loss, "%.9f") + "\n";
  write_file_atomic(out_dir / "table2.csv", t2);

  std::string t3 = "score";
  for (const auto& ck : run.checkpoints) t3 += ",net_" + std::to_string(ck.iteration);
  t3 += "\n";
  for (int s : scores) {
    t3 += std::to_string(s);
    for (const auto& r : rates) t3 += "," + fmt(r.at(s));
    t3 += "\n";
  }
  write_file_atomic(out_dir / "table3.csv", t3);

  std::string md = "# Repetitive training report\n\n";
  md += "Training base: " + std::to_string(base.size()) + " samples. Holdout: " + std::to_string(holdout.size()) +
        " samples.\n\n";
  md += "| network | loss | accuracy spread (train) | holdout share assigned above score " +
        std::to_string(kSummaryScoreCut) + " |\n|---|---|---|---|\n";
  for (size_t i = 0; i < run.size(); ++i)
    md += "| net_" + std::to_string(run.checkpoints[i].iteration) + " | " + fmt(run.losses[i], "%.4f") + " | " +
          fmt(accuracy_spread(train_acc[i]), "%.4f") + " | " + fmt(share_above(rates[i], kSummaryScoreCut), "%.4f") +
          " |\n";
  const double first = share_above(rates.front(), kSummaryScoreCut);
  const double last = share_above(rates.back(), kSummaryScoreCut);
  md += "\nAbove-score-" + std::to_string(kSummaryScoreCut) + " assigned rate: " + fmt(first, "%.4f") + " (net_" +
        std::to_string(run.checkpoints.front().iteration) + ") -> " + fmt(last, "%.4f") + " (net_" +
        std::to_string(run.checkpoints.back().iteration) + ")";
  if (first > 0.0) md += ", change " + fmt(100.0 * (last - first) / first, "%+.1f") + "%";
  md += ".\n\nStop reason: " + std::string(to_string(run.stop_reason)) + ".\n";
  md += "\nTable 1 accuracies are measured on the training base; table1_holdout.csv holds the held-out view.\n";
  write_file_atomic(out_dir / "summary.md", md);
}

}  // namespace reptrain
