#include "reptrain/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace reptrain {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

enum KindTag : std::uint32_t { kConv = 1, kReLU = 2, kMaxPool = 3, kFlatten = 4, kDense = 5 };

class Writer {
 public:
  void u32(std::uint32_t v) { raw(&v, 4); }
  void i32(std::int32_t v) { raw(&v, 4); }
  void floats(const float* p, Index n) { raw(p, static_cast<size_t>(n) * 4); }
  void raw(const void* p, size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes.insert(bytes.end(), b, b + n);
  }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, size_t size) : data_(data), size_(size) {}
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, 4);
    return v;
  }
  std::int32_t i32() {
    std::int32_t v;
    raw(&v, 4);
    return v;
  }
  void floats(float* p, Index n) { raw(p, static_cast<size_t>(n) * 4); }
  void raw(void* p, size_t n) {
    if (n > size_ - pos_) throw CorruptCheckpointError("checkpoint truncated");
    std::memcpy(p, data_ + pos_, n);
    pos_ += n;
  }
  size_t remaining() const { return size_ - pos_; }

 private:
  const std::uint8_t* data_;
  size_t size_;
  size_t pos_ = 0;
};

std::uint32_t crc32_of(const std::uint8_t* p, size_t n) {
  return static_cast<std::uint32_t>(crc32(crc32(0L, Z_NULL, 0), p, static_cast<uInt>(n)));
}

void write_layer(Writer& w, const LayerSpec& spec) {
  std::uint32_t tag = 0, a[5] = {0, 0, 0, 0, 0};
  std::visit(
      [&](const auto& k) {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, Conv>) {
          tag = kConv;
          a[0] = static_cast<std::uint32_t>(k.in_channels);
          a[1] = static_cast<std::uint32_t>(k.out_channels);
          a[2] = static_cast<std::uint32_t>(k.kernel_size);
          a[3] = static_cast<std::uint32_t>(k.stride);
          a[4] = static_cast<std::uint32_t>(k.padding);
        } else if constexpr (std::is_same_v<K, ReLU>) {
          tag = kReLU;
        } else if constexpr (std::is_same_v<K, MaxPool>) {
          tag = kMaxPool;
          a[0] = static_cast<std::uint32_t>(k.window);
          a[1] = static_cast<std::uint32_t>(k.stride);
        } else if constexpr (std::is_same_v<K, Flatten>) {
          tag = kFlatten;
        } else {
          tag = kDense;
          a[0] = static_cast<std::uint32_t>(k.in_features);
          a[1] = static_cast<std::uint32_t>(k.out_features);
        }
      },
      spec.kind);
  w.u32(tag);
  w.u32(spec.trainable ? 1 : 0);
  for (auto v : a) w.u32(v);
}

LayerSpec read_layer(Reader& r) {
  const std::uint32_t tag = r.u32();
  const std::uint32_t trainable = r.u32();
  Index a[5];
  for (auto& v : a) v = r.u32();
  if (trainable > 1) throw CorruptCheckpointError("bad trainable flag in layer table");
  LayerSpec spec;
  spec.trainable = trainable == 1;
  switch (tag) {
    case kConv: spec.kind = Conv{a[0], a[1], a[2], a[3], a[4]}; break;
    case kReLU: spec.kind = ReLU{}; break;
    case kMaxPool: spec.kind = MaxPool{a[0], a[1]}; break;
    case kFlatten: spec.kind = Flatten{}; break;
    case kDense: spec.kind = Dense{a[0], a[1]}; break;
    default: throw CorruptCheckpointError("unknown layer kind " + std::to_string(tag));
  }
  return spec;
}

// Validates magic, version, CRC and the header; leaves r at the parameter blocks.
CheckpointHeader read_header(Reader& r, const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 + 4) throw CorruptCheckpointError("checkpoint truncated");
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) throw CorruptCheckpointError("bad checkpoint magic");
  CheckpointHeader h;
  h.version = r.u32();
  if (h.version != kCheckpointVersion)
    throw CorruptCheckpointError("unsupported version " + std::to_string(h.version));

  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, bytes.data() + bytes.size() - 4, 4);
  if (crc32_of(bytes.data(), bytes.size() - 4) != stored_crc)
    throw CorruptCheckpointError("checkpoint CRC mismatch (corrupt or truncated file)");

  h.iteration = r.u32();
  const std::uint32_t n = r.u32();
  if (n > r.remaining() / 4) throw CorruptCheckpointError("class count exceeds file size");
  for (std::uint32_t i = 0; i < n; ++i) h.class_scores.push_back(r.i32());
  h.input.channels = r.u32();
  h.input.height = r.u32();
  h.input.width = r.u32();
  const std::uint32_t layers = r.u32();
  if (layers > r.remaining() / 28) throw CorruptCheckpointError("layer count exceeds file size");
  for (std::uint32_t i = 0; i < layers; ++i) h.layers.push_back(read_layer(r));
  return h;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Network& net, std::uint32_t iteration) {
  Writer w;
  w.raw(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  w.u32(iteration);
  w.u32(static_cast<std::uint32_t>(net.num_classes()));
  for (int s : net.class_scores()) w.i32(s);
  w.u32(static_cast<std::uint32_t>(net.input_shape().channels));
  w.u32(static_cast<std::uint32_t>(net.input_shape().height));
  w.u32(static_cast<std::uint32_t>(net.input_shape().width));
  w.u32(static_cast<std::uint32_t>(net.num_layers()));
  for (const auto& spec : net.layers()) write_layer(w, spec);
  for (const auto& p : net.params()) {
    if (p.empty()) continue;
    w.floats(p.weight.data(), p.weight.size());
    w.floats(p.bias.data(), p.bias.size());
  }
  w.u32(crc32_of(w.bytes.data(), w.bytes.size()));
  return std::move(w.bytes);
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes.data(), bytes.size() >= 4 ? bytes.size() - 4 : 0);
  CheckpointHeader h = read_header(r, bytes);

  std::vector<LayerParams<float>> params;
  for (const auto& spec : h.layers) {
    LayerParams<float> p;
    auto [ws, bs] = Network::expected_param_shapes(spec.kind);
    if (!ws.empty()) {
      for (Index d : ws)
        if (d < 1) throw CorruptCheckpointError("invalid layer dimensions in checkpoint");
      if (static_cast<size_t>(shape_size(ws) + shape_size(bs)) * 4 > r.remaining())
        throw CorruptCheckpointError("checkpoint truncated in parameter block");
      p.weight = Tensor(ws);
      p.bias = Tensor(bs);
      r.floats(p.weight.data(), p.weight.size());
      r.floats(p.bias.data(), p.bias.size());
    }
    params.push_back(std::move(p));
  }
  if (r.remaining() != 0) throw CorruptCheckpointError("trailing bytes after parameter blocks");
  try {
    return Checkpoint{h.iteration, Network(h.input, std::move(h.layers), std::move(h.class_scores), std::move(params))};
  } catch (const CorruptCheckpointError&) {
    throw;
  } catch (const Error& e) {
    throw CorruptCheckpointError(std::string("inconsistent checkpoint: ") + e.what());
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_checkpoint(const Network& net, std::uint32_t iteration, const std::filesystem::path& path) {
  auto bytes = encode_checkpoint(net, iteration);
  write_file_atomic(path, std::string(bytes.begin(), bytes.end()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string s = read_file(path);
  return decode_checkpoint(std::vector<std::uint8_t>(s.begin(), s.end()));
}

CheckpointHeader read_checkpoint_header(const std::filesystem::path& path) {
  Checkpoint ck = load_checkpoint(path);
  CheckpointHeader h;
  h.version = kCheckpointVersion;
  h.iteration = ck.iteration;
  h.class_scores = ck.net.class_scores();
  h.input = ck.net.input_shape();
  h.layers = ck.net.layers();
  h.parameter_count = ck.net.parameter_count();
  return h;
}

}  // namespace reptrain
