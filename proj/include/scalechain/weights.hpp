#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "scalechain/tensor.hpp"

namespace scalechain {

// Binary weight container, all integers little-endian:
//
//   magic        8 bytes  "SCWEIGHT"
//   version      u32      kWeightFormatVersion
//   layer_count  u32
//   per layer:
//     name_len   u32, then name_len bytes of UTF-8
//     rank       u32, then rank x u32 extents
//     flags      u32      bit 0: a bias vector of extents[0] floats follows
//     weights    prod(extents) x f32
//     bias       extents[0] x f32 (only when flags bit 0 is set)
//   checksum     u64      FNV-1a 64 over every preceding byte
inline constexpr std::uint32_t kWeightFormatVersion = 1;
inline constexpr std::string_view kWeightMagic = "SCWEIGHT";

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes,
                      std::uint64_t seed = 0xcbf29ce484222325ULL);

struct LayerEntry {
  std::string name;
  std::vector<int> shape;
  std::vector<float> weights;
  // Empty when the file stores no bias; conv() substitutes zeros.
  std::vector<float> bias;

  std::size_t element_count() const;
};

class ModelWeights {
 public:
  ModelWeights() = default;

  // Adds a layer; weight length must match the shape product and a non-empty
  // bias must have shape[0] entries.
  void add(std::string name, std::vector<int> shape, std::vector<float> weights,
           std::vector<float> bias = {});
  void add_conv(const std::string& name, const ConvParams& p);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const LayerEntry& layer(const std::string& name) const;
  std::span<const LayerEntry> layers() const { return layers_; }
  std::size_t size() const { return layers_.size(); }

  // Rank-4 (out,in,kh,kw) layer as conv parameters; throws ShapeMismatch if
  // the stored shape differs from the expected one and MissingWeights if the
  // layer is absent.
  ConvParams conv(const std::string& name, int out_channels, int in_channels, int k_h,
                  int k_w) const;

  std::uint64_t checksum() const { return checksum_; }
  std::vector<std::uint8_t> serialize() const;
  static ModelWeights deserialize(std::span<const std::uint8_t> bytes);

  // Human readable manifest: one "name rank extents... bias|nobias" line per layer.
  std::string manifest() const;

 private:
  std::vector<LayerEntry> layers_;
  std::map<std::string, std::size_t> index_;
  std::uint64_t checksum_ = 0;
};

ModelWeights load_weights(const std::string& path);
// Writes the container and a `<path>.manifest.txt` sidecar.
void save_weights(const std::string& path, const ModelWeights& weights);

}  // namespace scalechain
