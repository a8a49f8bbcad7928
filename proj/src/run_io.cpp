#include "reptrain/run_io.hpp"

#include <cstdio>
#include <sstream>

namespace reptrain {

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, size_t iteration) {
  return dir / ("net_" + std::to_string(iteration) + ".ckpt");
}

std::string format_history(const TrainRun& run) {
  std::string out = "iteration,loss,K1,K2,remaining_count\n";
  char buf[128];
  for (size_t i = 0; i < run.size(); ++i) {
    const auto& th = run.thresholds_used[i];
    if (th)
      std::snprintf(buf, sizeof buf, "%u,%.9f,%.4f,%.4f,%zu\n", run.checkpoints[i].iteration, run.losses[i], th->k1,
                    th->k2, run.remaining_counts[i]);
    else
      std::snprintf(buf, sizeof buf, "%u,%.9f,,,%zu\n", run.checkpoints[i].iteration, run.losses[i],
                    run.remaining_counts[i]);
    out += buf;
  }
  return out;
}

std::string format_dropped(const std::vector<int>& ids) {
  std::string out = "id\n";
  for (int id : ids) out += std::to_string(id) + "\n";
  return out;
}

void write_latest_iteration(const std::filesystem::path& dir, const TrainRun& run) {
  if (run.size() == 0) return;
  const size_t last = run.size() - 1;
  const auto& ck = run.checkpoints[last];
  save_checkpoint(ck.net, ck.iteration, checkpoint_path(dir, ck.iteration));
  write_file_atomic(dir / ("dropped_" + std::to_string(ck.iteration) + ".csv"), format_dropped(run.dropped_sets[last]));
  write_file_atomic(dir / "history.csv", format_history(run));
}

void write_stop_reason(const std::filesystem::path& dir, StopReason reason) {
  write_file_atomic(dir / "stop_reason.txt", std::string(to_string(reason)) + "\n");
}

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(line);
  while (std::getline(ss, item, sep)) out.push_back(item);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

TrainRun load_run(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("run directory " + dir.string() + " does not exist");
  TrainRun run;
  for (size_t i = 1; std::filesystem::exists(checkpoint_path(dir, i)); ++i)
    run.checkpoints.push_back(load_checkpoint(checkpoint_path(dir, i)));
  if (run.checkpoints.empty()) throw IoError("run directory " + dir.string() + " has no checkpoints");

  std::istringstream history(read_file(dir / "history.csv"));
  std::string line;
  std::getline(history, line);
  while (std::getline(history, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 5) throw IoError("malformed history.csv line: " + line);
    run.losses.push_back(std::stod(f[1]));
    if (f[2].empty())
      run.thresholds_used.push_back(std::nullopt);
    else
      run.thresholds_used.push_back(DropoutThresholds{std::stod(f[2]), std::stod(f[3])});
    run.remaining_counts.push_back(std::stoul(f[4]));
  }
  if (run.losses.size() < run.checkpoints.size())
    throw IoError("history.csv lists fewer iterations than there are checkpoints");
  run.losses.resize(run.checkpoints.size());
  run.thresholds_used.resize(run.checkpoints.size());
  run.remaining_counts.resize(run.checkpoints.size());

  for (const auto& ck : run.checkpoints) {
    std::vector<int> ids;
    const auto path = dir / ("dropped_" + std::to_string(ck.iteration) + ".csv");
    if (std::filesystem::exists(path)) {
      std::istringstream in(read_file(path));
      std::getline(in, line);
      while (std::getline(in, line))
        if (!line.empty()) ids.push_back(std::stoi(line));
    }
    run.dropped_sets.push_back(std::move(ids));
  }
  if (std::filesystem::exists(dir / "stop_reason.txt"))
    run.stop_reason = read_file(dir / "stop_reason.txt").starts_with("loss_below_threshold")
                          ? StopReason::LossBelowThreshold
                          : StopReason::MaxIterations;
  return run;
}

}  // namespace reptrain
