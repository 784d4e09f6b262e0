#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "scalechain/frame_io.hpp"
#include "scalechain/resample.hpp"
#include "scalechain/tensor.hpp"
#include "scalechain/weights.hpp"

namespace scalechain {

// Called with (stage name, tensor) at selected points of a forward pass.
using InferenceProbe = std::function<void(std::string_view stage, const Tensor& t)>;

struct TileOptions {
  // 0 disables tiling.
  int tile = 0;
  // Halo in network-input pixels; negative selects the graph's receptive
  // reach, which makes tiled output identical to untiled output.
  int halo = -1;
};

// ---------------------------------------------------------------------------
// VDSR: 20 3x3 conv layers "conv1".."conv20", ReLU after all but the last.
// conv1 is (64,1,3,3), conv2..conv19 are (64,64,3,3), conv20 is (1,64,3,3).

inline constexpr int kVdsrDepth = 20;
inline constexpr int kVdsrFeatures = 64;
inline constexpr std::size_t kVdsrWeightCount = 576 + 18 * 36864 + 576;

std::string vdsr_layer_name(int index);  // 1-based
std::vector<int> vdsr_layer_shape(int index);

class VdsrGraph {
 public:
  // Validates the layer table; any extra, missing or reshaped layer is rejected.
  static VdsrGraph bind(const ModelWeights& weights);

  // Residual R for a bicubically upscaled luma tensor (1,H,W).
  Tensor residual(const Tensor& x_bic, const InferenceProbe& probe = {}) const;

  // y_lr (1,h,w) -> bicubic(y_lr) + R, shape (1,s*h,s*w).
  Tensor upscale_y(const Tensor& y_lr, ScaleFactor s, const KernelSpec& kernel = {},
                   const TileOptions& tiles = {}) const;

  static constexpr int receptive_reach() { return kVdsrDepth; }

  // Inputs are multiplied by this before the network and residuals divided
  // by it; 255 suits checkpoints trained on [0,255] data.
  float input_scale = 1.0f;

 private:
  std::vector<ConvParams> layers_;
};

Tensor vdsr_upscale_y(const Tensor& y_lr, const ModelWeights& weights, ScaleFactor s);

// ---------------------------------------------------------------------------
// RDN. Layer names:
//   sfe1 (G0,3,3,3)  sfe2 (G0,G0,3,3)
//   rdb{d}.conv{c} (G, G0+(c-1)G, 3,3)   d = 1..D, c = 1..C
//   rdb{d}.lff (G0, G0+C*G, 1,1)
//   gff1 (G0, D*G0, 1,1)  gff2 (G0,G0,3,3)
//   up (G0*r*r, G0, 3,3) followed by pixel_shuffle(r)
//   out (3, G0, 3,3)

struct RdnConfig {
  int blocks = 20;      // D
  int convs = 6;        // C
  int growth = 64;      // G
  int features = 64;    // G0
  int scale = 2;        // r

  int rdb_concat_depth() const { return features + convs * growth; }
  int global_concat_depth() const { return blocks * features; }
  // Reach in low-resolution input pixels.
  int receptive_reach() const { return 2 + blocks * convs + 3; }
  void validate() const;
};

struct RdbParams {
  std::vector<ConvParams> convs;
  ConvParams fusion;
};

// One residual dense block: C conv+ReLU stages over the growing concat, then
// the 1x1 local fusion and the local residual add.
Tensor rdb_forward(const Tensor& f_prev, const RdbParams& params, const InferenceProbe& probe = {});

// BT.601 luma from three channels.
Tensor bt601_luma(const Tensor& rgb);

std::vector<std::pair<std::string, std::vector<int>>> rdn_layer_table(const RdnConfig& config);

class RdnGraph {
 public:
  static RdnGraph bind(const ModelWeights& weights, const RdnConfig& config = {});

  const RdnConfig& config() const { return config_; }

  // (3,h,w) -> (3, r*h, r*w)
  Tensor forward(const Tensor& rgb_lr, const InferenceProbe& probe = {}) const;

  // Feeds the luma plane to all three inputs and recombines the three
  // outputs with BT.601 weights. (1,h,w) -> (1, r*h, r*w).
  Tensor upscale_y(const Tensor& y_lr, const TileOptions& tiles = {}) const;

  // Full RGB route: (3,h,w) in [0,1] -> (3, r*h, r*w), scaled like upscale_y.
  Tensor upscale_rgb(const Tensor& rgb_lr, const TileOptions& tiles = {}) const;

  float input_scale = 1.0f;

 private:
  RdnConfig config_;
  ConvParams sfe1_, sfe2_;
  std::vector<RdbParams> blocks_;
  ConvParams gff1_, gff2_, up_, out_;
};

Tensor rdn_upscale_y(const Tensor& y_lr, const ModelWeights& weights, ScaleFactor s);

// Runs `fn` on overlapping tiles of `in` and stitches the centre crops.
// `fn` must map (C,h,w) to (C',f*h,f*w).
Tensor run_tiled(const Tensor& in, int factor, const TileOptions& tiles, int reach,
                 const std::function<Tensor(const Tensor&)>& fn);

// ---------------------------------------------------------------------------
// Frame-level upscaling.

enum class Upscaler { kBicubic, kBackProjection, kVdsr, kRdn };

std::string_view to_string(Upscaler u);
Upscaler parse_upscaler(std::string_view name);
bool needs_weights(Upscaler u);

enum class RdnInputMode { kReplicateY, kRgb };

struct UpscaleContext {
  KernelSpec kernel;
  int bp_iterations = 5;
  std::optional<VdsrGraph> vdsr;
  std::optional<RdnGraph> rdn;
  RdnInputMode rdn_input = RdnInputMode::kReplicateY;
  TileOptions tiles;
};

// Luma via the selected method, chroma always bicubic.
FrameBuffer upscale_frame(const FrameBuffer& frame, Upscaler method, const UpscaleContext& ctx,
                          ScaleFactor s = ScaleFactor{});

// Synthetic weight sets for tests and hermetic runs. Weights are drawn from
// N(0, gain^2 * 2 / fan_in), biases from N(0, bias_stddev^2); gain 0 gives
// all-zero weights.
ModelWeights make_vdsr_weights(std::uint64_t seed, float gain, float bias_stddev = 0.0f);
ModelWeights make_rdn_weights(const RdnConfig& config, std::uint64_t seed, float gain,
                              float bias_stddev = 0.0f);

}  // namespace scalechain
