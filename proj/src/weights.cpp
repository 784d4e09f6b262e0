#include "scalechain/weights.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

#include "scalechain/error.hpp"

namespace scalechain {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_floats(std::vector<std::uint8_t>& out, std::span<const float> values) {
  for (float f : values) put_u32(out, std::bit_cast<std::uint32_t>(f));
}

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n)
      fail(ErrorCode::kTruncated, std::string("weight file ends inside ") + what);
  }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }

  std::vector<float> floats(std::size_t n, const char* what) {
    if (n > (bytes_.size() - pos_) / 4)
      fail(ErrorCode::kTruncated, std::string("weight file ends inside ") + what);
    std::vector<float> out(n);
    for (auto& f : out) f = std::bit_cast<float>(u32(what));
    return out;
  }

  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::string shape_str(const std::vector<int>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + ")";
}

}  // namespace

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::size_t LayerEntry::element_count() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}

void ModelWeights::add(std::string name, std::vector<int> shape, std::vector<float> weights,
                       std::vector<float> bias) {
  if (name.empty()) fail(ErrorCode::kInvalidArgument, "layer name must not be empty");
  if (contains(name)) fail(ErrorCode::kInvalidArgument, "duplicate layer " + name);
  if (shape.empty()) fail(ErrorCode::kShapeMismatch, "layer " + name + " has rank 0");
  for (int e : shape)
    if (e <= 0) fail(ErrorCode::kShapeMismatch, "layer " + name + " has non-positive extent");
  LayerEntry entry{std::move(name), std::move(shape), std::move(weights), std::move(bias)};
  if (entry.weights.size() != entry.element_count())
    fail(ErrorCode::kShapeMismatch, "layer " + entry.name + " blob does not match " +
                                        shape_str(entry.shape));
  if (!entry.bias.empty() && entry.bias.size() != static_cast<std::size_t>(entry.shape[0]))
    fail(ErrorCode::kShapeMismatch, "layer " + entry.name + " bias length mismatch");
  index_[entry.name] = layers_.size();
  layers_.push_back(std::move(entry));
  checksum_ = 0;
}

void ModelWeights::add_conv(const std::string& name, const ConvParams& p) {
  p.validate();
  add(name, {p.out_channels, p.in_channels, p.k_h, p.k_w}, p.weights, p.bias);
}

const LayerEntry& ModelWeights::layer(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) fail(ErrorCode::kMissingWeights, "no layer named " + name);
  return layers_[it->second];
}

ConvParams ModelWeights::conv(const std::string& name, int out_channels, int in_channels, int k_h,
                              int k_w) const {
  const LayerEntry& entry = layer(name);
  const std::vector<int> expected{out_channels, in_channels, k_h, k_w};
  if (entry.shape != expected)
    fail(ErrorCode::kShapeMismatch, "layer " + name + " has shape " + shape_str(entry.shape) +
                                        ", expected " + shape_str(expected));
  ConvParams p;
  p.out_channels = out_channels;
  p.in_channels = in_channels;
  p.k_h = k_h;
  p.k_w = k_w;
  p.weights = entry.weights;
  p.bias = entry.bias.empty() ? std::vector<float>(out_channels, 0.0f) : entry.bias;
  p.validate();
  return p;
}

std::vector<std::uint8_t> ModelWeights::serialize() const {
  std::vector<std::uint8_t> out(kWeightMagic.begin(), kWeightMagic.end());
  put_u32(out, kWeightFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(layers_.size()));
  for (const LayerEntry& l : layers_) {
    put_u32(out, static_cast<std::uint32_t>(l.name.size()));
    out.insert(out.end(), l.name.begin(), l.name.end());
    put_u32(out, static_cast<std::uint32_t>(l.shape.size()));
    for (int e : l.shape) put_u32(out, static_cast<std::uint32_t>(e));
    put_u32(out, l.bias.empty() ? 0u : 1u);
    put_floats(out, l.weights);
    put_floats(out, l.bias);
  }
  put_u64(out, fnv1a64(out));
  return out;
}

ModelWeights ModelWeights::deserialize(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  if (in.str(kWeightMagic.size(), "magic") != kWeightMagic)
    fail(ErrorCode::kBadMagic, "not a weight container");
  const std::uint32_t version = in.u32("version");
  if (version != kWeightFormatVersion)
    fail(ErrorCode::kUnsupportedFormat, "weight format version " + std::to_string(version));
  const std::uint32_t count = in.u32("layer count");

  ModelWeights weights;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = in.u32("layer name");
    std::string name = in.str(name_len, "layer name");
    const std::uint32_t rank = in.u32("layer rank");
    if (rank == 0 || rank > 8) fail(ErrorCode::kShapeMismatch, "layer " + name + " has bad rank");
    std::vector<int> shape;
    std::size_t elements = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      const std::uint32_t e = in.u32("layer extents");
      if (e == 0 || e > (1u << 24)) fail(ErrorCode::kShapeMismatch, "layer " + name + " bad extent");
      shape.push_back(static_cast<int>(e));
      elements *= e;
    }
    const std::uint32_t flags = in.u32("layer flags");
    if (flags & ~1u) fail(ErrorCode::kUnsupportedFormat, "layer " + name + " has unknown flags");
    auto blob = in.floats(elements, "layer blob");
    std::vector<float> bias;
    if (flags & 1u) bias = in.floats(static_cast<std::size_t>(shape[0]), "layer bias");
    weights.add(std::move(name), std::move(shape), std::move(blob), std::move(bias));
  }
  const std::size_t body = in.offset();
  const std::uint64_t stored = in.u64("checksum");
  const std::uint64_t actual = fnv1a64(bytes.subspan(0, body));
  if (stored != actual) fail(ErrorCode::kChecksumMismatch, "weight file checksum does not verify");
  if (in.offset() != bytes.size())
    fail(ErrorCode::kMalformedHeader, "trailing bytes after weight checksum");
  weights.checksum_ = stored;
  return weights;
}

std::string ModelWeights::manifest() const {
  std::ostringstream out;
  out << "# scalechain weights v" << kWeightFormatVersion << ", " << layers_.size() << " layers\n";
  for (const LayerEntry& l : layers_) {
    out << l.name << ' ' << l.shape.size();
    for (int e : l.shape) out << ' ' << e;
    out << (l.bias.empty() ? " nobias" : " bias") << '\n';
  }
  return out.str();
}

ModelWeights load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open weight file " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return ModelWeights::deserialize(bytes);
}

void save_weights(const std::string& path, const ModelWeights& weights) {
  const auto bytes = weights.serialize();
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::kIo, "cannot create " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::kIo, "write failed for " + path);
  }
  std::ofstream manifest(path + ".manifest.txt", std::ios::trunc);
  manifest << weights.manifest();
}

}  // namespace scalechain
