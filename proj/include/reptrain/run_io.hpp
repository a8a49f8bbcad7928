#pragma once

#include <filesystem>
#include <string>

#include "reptrain/trainer.hpp"

namespace reptrain {

// Run directory layout:
//   net_<i>.ckpt       checkpoint of network i
//   dropped_<i>.csv    ids dropped before training iteration i
//   history.csv        iteration,loss,K1,K2,remaining_count
//   config.txt         flat key = value run configuration
//   stop_reason.txt    written once the run ends
std::filesystem::path checkpoint_path(const std::filesystem::path& dir, size_t iteration);

std::string format_history(const TrainRun& run);
std::string format_dropped(const std::vector<int>& ids);

// Persists the newest iteration of `run` (checkpoint, dropped ids, history).
void write_latest_iteration(const std::filesystem::path& dir, const TrainRun& run);
void write_stop_reason(const std::filesystem::path& dir, StopReason reason);

// Reads every net_<i>.ckpt (i = 1, 2, ... until the first gap) plus history.csv.
TrainRun load_run(const std::filesystem::path& dir);

}  // namespace reptrain
