#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "reptrain/nn/network.hpp"

namespace reptrain {

// A network tagged with the training iteration that produced it.
struct Checkpoint {
  std::uint32_t iteration = 0;
  Network net;
};

inline constexpr char kCheckpointMagic[4] = {'R', 'P', 'T', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary little-endian layout:
//   "RPTN" | version u32 | iteration u32 | N u32 | class_scores i32 x N
//   | input C,H,W u32 x 3 | layer count u32
//   | per layer: kind u32, trainable u32, five u32 kind parameters
//   | per parameterized layer: weight f32..., bias f32...
//   | CRC32 of every preceding byte (u32)
std::vector<std::uint8_t> encode_checkpoint(const Network& net, std::uint32_t iteration);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

// Writes via a temporary file and rename.
void save_checkpoint(const Network& net, std::uint32_t iteration, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Header fields only, for `inspect`.
struct CheckpointHeader {
  std::uint32_t version = 0;
  std::uint32_t iteration = 0;
  std::vector<int> class_scores;
  InputShape input;
  std::vector<LayerSpec> layers;
  Index parameter_count = 0;
};
CheckpointHeader read_checkpoint_header(const std::filesystem::path& path);

// Writes bytes to path atomically (temp file in the same directory + rename).
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace reptrain
