#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "reptrain/nn/tensor.hpp"

namespace reptrain {

// 8-bit interleaved raster as stored on disk.
struct Image8 {
  Index width = 0;
  Index height = 0;
  Index channels = 0;  // 1 (gray) or 3 (RGB)
  std::vector<std::uint8_t> pixels;

  std::uint8_t& at(Index y, Index x, Index c) { return pixels[static_cast<size_t>((y * width + x) * channels + c)]; }
  std::uint8_t at(Index y, Index x, Index c) const {
    return pixels[static_cast<size_t>((y * width + x) * channels + c)];
  }
};

// Reads any PNG as RGB (gray and palette are expanded, alpha and 16-bit depth dropped).
Image8 read_png_rgb(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image8& image);

// H x W x 3 float tensor in [0, 1] <-> 8-bit RGB.
Tensor to_tensor(const Image8& image);
Image8 to_image8(const Tensor& hwc);
std::uint8_t to_byte(double v);

// Bilinear resampling of an H x W x C tensor (pixel-center aligned).
Tensor resize_bilinear(const Tensor& hwc, Index height, Index width);

}  // namespace reptrain
