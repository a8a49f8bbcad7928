#include "reptrain/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "reptrain/error.hpp"

namespace reptrain {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image8 read_png_rgb(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw IoError("cannot read PNG " + path.string() + ": " + img.message);
  img.format = PNG_FORMAT_RGB;
  Image8 out;
  out.width = img.width;
  out.height = img.height;
  out.channels = 3;
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw IoError("cannot decode PNG " + path.string() + ": " + msg);
  }
  return out;
}

void write_png(const std::filesystem::path& path, const Image8& image) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = image.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  auto tmp = path;
  tmp += ".tmp";
  {
    FilePtr f(std::fopen(tmp.c_str(), "wb"));
    if (!f) throw IoError("cannot open " + tmp.string() + " for writing");
    if (!png_image_write_to_stdio(&img, f.get(), 0, image.pixels.data(), 0, nullptr))
      throw IoError("cannot encode PNG " + path.string() + ": " + img.message);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

Tensor to_tensor(const Image8& image) {
  Tensor t({image.height, image.width, image.channels});
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<float>(image.pixels[static_cast<size_t>(i)]) / 255.0f;
  return t;
}

Image8 to_image8(const Tensor& hwc) {
  Image8 out;
  out.height = hwc.dim(0);
  out.width = hwc.dim(1);
  out.channels = hwc.rank() == 3 ? hwc.dim(2) : 1;
  out.pixels.resize(static_cast<size_t>(hwc.size()));
  for (Index i = 0; i < hwc.size(); ++i) out.pixels[static_cast<size_t>(i)] = to_byte(hwc[i]);
  return out;
}

Tensor resize_bilinear(const Tensor& hwc, Index height, Index width) {
  const Index ih = hwc.dim(0), iw = hwc.dim(1), c = hwc.dim(2);
  if (ih == height && iw == width) return hwc;
  Tensor out({height, width, c});
  const double sy = static_cast<double>(ih) / static_cast<double>(height);
  const double sx = static_cast<double>(iw) / static_cast<double>(width);
  for (Index y = 0; y < height; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(ih - 1));
    const Index y0 = static_cast<Index>(fy);
    const Index y1 = std::min(y0 + 1, ih - 1);
    const double wy = fy - static_cast<double>(y0);
    for (Index x = 0; x < width; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(iw - 1));
      const Index x0 = static_cast<Index>(fx);
      const Index x1 = std::min(x0 + 1, iw - 1);
      const double wx = fx - static_cast<double>(x0);
      for (Index ch = 0; ch < c; ++ch) {
        const double top = (1 - wx) * hwc(y0, x0, ch) + wx * hwc(y0, x1, ch);
        const double bottom = (1 - wx) * hwc(y1, x0, ch) + wx * hwc(y1, x1, ch);
        out(y, x, ch) = static_cast<float>((1 - wy) * top + wy * bottom);
      }
    }
  }
  return out;
}

}  // namespace reptrain
