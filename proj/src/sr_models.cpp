#include "scalechain/sr_models.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "scalechain/error.hpp"

namespace scalechain {

namespace {

void probe_if(const InferenceProbe& probe, std::string_view stage, const Tensor& t) {
  if (probe) probe(stage, t);
}

ConvParams conv_from(const ModelWeights& w, const std::string& name, const std::vector<int>& shape) {
  return w.conv(name, shape[0], shape[1], shape[2], shape[3]);
}

// Rejects weight files whose layer set differs from the expected table.
void check_layer_set(const ModelWeights& weights,
                     const std::vector<std::pair<std::string, std::vector<int>>>& table,
                     std::string_view model) {
  std::set<std::string> expected;
  for (const auto& [name, shape] : table) expected.insert(name);
  for (const LayerEntry& l : weights.layers())
    if (!expected.count(l.name))
      fail(ErrorCode::kShapeMismatch, std::string(model) + " weights contain unexpected layer " + l.name);
  for (const auto& [name, shape] : table)
    if (!weights.contains(name))
      fail(ErrorCode::kShapeMismatch, std::string(model) + " weights lack layer " + name);
}

Tensor scaled(Tensor t, float factor) {
  if (factor != 1.0f)
    for (float& v : t.data()) v *= factor;
  return t;
}

}  // namespace

// ---------------------------------------------------------------------------
// VDSR

std::string vdsr_layer_name(int index) { return "conv" + std::to_string(index); }

std::vector<int> vdsr_layer_shape(int index) {
  if (index < 1 || index > kVdsrDepth) fail(ErrorCode::kInvalidArgument, "VDSR layer index out of range");
  const int in = index == 1 ? 1 : kVdsrFeatures;
  const int out = index == kVdsrDepth ? 1 : kVdsrFeatures;
  return {out, in, 3, 3};
}

VdsrGraph VdsrGraph::bind(const ModelWeights& weights) {
  std::vector<std::pair<std::string, std::vector<int>>> table;
  for (int i = 1; i <= kVdsrDepth; ++i) table.emplace_back(vdsr_layer_name(i), vdsr_layer_shape(i));
  check_layer_set(weights, table, "VDSR");

  VdsrGraph g;
  std::size_t total = 0;
  for (const auto& [name, shape] : table) {
    g.layers_.push_back(conv_from(weights, name, shape));
    total += g.layers_.back().weight_count();
  }
  if (total != kVdsrWeightCount)
    fail(ErrorCode::kShapeMismatch, "VDSR weight total " + std::to_string(total));
  return g;
}

Tensor VdsrGraph::residual(const Tensor& x_bic, const InferenceProbe& probe) const {
  if (x_bic.channels() != 1) fail(ErrorCode::kShapeMismatch, "VDSR expects a single luma channel");
  Tensor h = scaled(x_bic, input_scale);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = conv2d(h, layers_[i]);
    if (i + 1 < layers_.size()) h = relu(std::move(h));
    probe_if(probe, vdsr_layer_name(static_cast<int>(i) + 1), h);
  }
  return scaled(std::move(h), 1.0f / input_scale);
}

Tensor VdsrGraph::upscale_y(const Tensor& y_lr, ScaleFactor s, const KernelSpec& kernel,
                            const TileOptions& tiles) const {
  const Tensor x_bic = upscale_bicubic(y_lr, s, kernel);
  const Tensor r = run_tiled(x_bic, 1, tiles, receptive_reach(),
                             [this](const Tensor& t) { return residual(t); });
  return add(x_bic, r);
}

Tensor vdsr_upscale_y(const Tensor& y_lr, const ModelWeights& weights, ScaleFactor s) {
  return VdsrGraph::bind(weights).upscale_y(y_lr, s);
}

// ---------------------------------------------------------------------------
// RDN

void RdnConfig::validate() const {
  if (blocks < 1 || convs < 1 || growth < 1 || features < 1)
    fail(ErrorCode::kInvalidArgument, "RDN configuration extents must be positive");
  if (scale != 2) fail(ErrorCode::kInvalidArgument, "RDN upscale stage supports a factor of 2 only");
}

std::vector<std::pair<std::string, std::vector<int>>> rdn_layer_table(const RdnConfig& c) {
  c.validate();
  std::vector<std::pair<std::string, std::vector<int>>> t;
  t.push_back({"sfe1", {c.features, 3, 3, 3}});
  t.push_back({"sfe2", {c.features, c.features, 3, 3}});
  for (int d = 1; d <= c.blocks; ++d) {
    const std::string prefix = "rdb" + std::to_string(d);
    for (int k = 1; k <= c.convs; ++k)
      t.push_back({prefix + ".conv" + std::to_string(k), {c.growth, c.features + (k - 1) * c.growth, 3, 3}});
    t.push_back({prefix + ".lff", {c.features, c.rdb_concat_depth(), 1, 1}});
  }
  t.push_back({"gff1", {c.features, c.global_concat_depth(), 1, 1}});
  t.push_back({"gff2", {c.features, c.features, 3, 3}});
  t.push_back({"up", {c.features * c.scale * c.scale, c.features, 3, 3}});
  t.push_back({"out", {3, c.features, 3, 3}});
  return t;
}

Tensor rdb_forward(const Tensor& f_prev, const RdbParams& params, const InferenceProbe& probe) {
  if (params.convs.empty()) fail(ErrorCode::kInvalidArgument, "RDB without conv stages");
  if (f_prev.channels() != params.fusion.out_channels)
    fail(ErrorCode::kShapeMismatch, "RDB input has " + std::to_string(f_prev.channels()) +
                                        " channels, block expects " +
                                        std::to_string(params.fusion.out_channels));
  std::vector<Tensor> features{f_prev};
  for (std::size_t k = 0; k < params.convs.size(); ++k) {
    Tensor in = concat_channels(features);
    probe_if(probe, "rdb.stage_input", in);
    features.push_back(relu(conv2d(in, params.convs[k])));
  }
  const Tensor dense = concat_channels(features);
  probe_if(probe, "rdb.concat", dense);
  return add(f_prev, conv2d(dense, params.fusion));
}

Tensor bt601_luma(const Tensor& rgb) {
  if (rgb.channels() != 3) fail(ErrorCode::kShapeMismatch, "BT.601 luma needs three channels");
  Tensor y(1, rgb.height(), rgb.width());
  auto r = rgb.channel(0), g = rgb.channel(1), b = rgb.channel(2);
  auto dst = y.data();
  for (std::size_t i = 0; i < dst.size(); ++i)
    dst[i] = static_cast<float>(0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i]);
  return y;
}

RdnGraph RdnGraph::bind(const ModelWeights& weights, const RdnConfig& config) {
  const auto table = rdn_layer_table(config);
  check_layer_set(weights, table, "RDN");

  RdnGraph g;
  g.config_ = config;
  auto next = table.begin();
  auto take = [&] {
    const auto& [name, shape] = *next++;
    return conv_from(weights, name, shape);
  };
  g.sfe1_ = take();
  g.sfe2_ = take();
  for (int d = 0; d < config.blocks; ++d) {
    RdbParams block;
    for (int k = 0; k < config.convs; ++k) block.convs.push_back(take());
    block.fusion = take();
    g.blocks_.push_back(std::move(block));
  }
  g.gff1_ = take();
  g.gff2_ = take();
  g.up_ = take();
  g.out_ = take();
  return g;
}

Tensor RdnGraph::forward(const Tensor& rgb_lr, const InferenceProbe& probe) const {
  if (rgb_lr.channels() != 3) fail(ErrorCode::kShapeMismatch, "RDN expects three input channels");
  const Tensor f_m1 = conv2d(rgb_lr, sfe1_);
  Tensor f = conv2d(f_m1, sfe2_);

  // Global fusion over the concat of all block outputs, accumulated block by
  // block so the D*G0-deep concat is never stored.
  Tensor fused = conv2d_bias(gff1_, f.height(), f.width());
  int offset = 0;
  for (const RdbParams& block : blocks_) {
    f = rdb_forward(f, block, probe);
    conv2d_accumulate(fused, f, gff1_, offset);
    offset += f.channels();
  }
  if (probe) probe("gff.concat_depth", Tensor(offset, 0, 0));

  const Tensor f_gf = conv2d(fused, gff2_);
  const Tensor f_df = add(f_gf, f_m1);
  const Tensor hr_features = pixel_shuffle(conv2d(f_df, up_), config_.scale);
  probe_if(probe, "upscaled_features", hr_features);
  return conv2d(hr_features, out_);
}

Tensor RdnGraph::upscale_rgb(const Tensor& rgb_lr, const TileOptions& tiles) const {
  const Tensor in = scaled(rgb_lr, input_scale);
  Tensor out = run_tiled(in, config_.scale, tiles, config_.receptive_reach(),
                         [this](const Tensor& t) { return forward(t); });
  return scaled(std::move(out), 1.0f / input_scale);
}

Tensor RdnGraph::upscale_y(const Tensor& y_lr, const TileOptions& tiles) const {
  if (y_lr.channels() != 1) fail(ErrorCode::kShapeMismatch, "RDN luma route expects one channel");
  const Tensor replicated = concat_channels(std::vector<Tensor>{y_lr, y_lr, y_lr});
  return bt601_luma(upscale_rgb(replicated, tiles));
}

Tensor rdn_upscale_y(const Tensor& y_lr, const ModelWeights& weights, ScaleFactor s) {
  RdnConfig config;
  config.scale = s.value();
  return RdnGraph::bind(weights, config).upscale_y(y_lr);
}

// ---------------------------------------------------------------------------
// Tiling

Tensor run_tiled(const Tensor& in, int factor, const TileOptions& tiles, int reach,
                 const std::function<Tensor(const Tensor&)>& fn) {
  const int H = in.height();
  const int W = in.width();
  if (tiles.tile <= 0 || (tiles.tile >= H && tiles.tile >= W)) return fn(in);
  const int halo = tiles.halo < 0 ? reach : tiles.halo;

  Tensor out;
  for (int ty = 0; ty < H; ty += tiles.tile) {
    for (int tx = 0; tx < W; tx += tiles.tile) {
      const int th = std::min(tiles.tile, H - ty);
      const int tw = std::min(tiles.tile, W - tx);
      const int y0 = std::max(0, ty - halo), y1 = std::min(H, ty + th + halo);
      const int x0 = std::max(0, tx - halo), x1 = std::min(W, tx + tw + halo);

      Tensor patch(in.channels(), y1 - y0, x1 - x0);
      for (int c = 0; c < in.channels(); ++c)
        for (int y = y0; y < y1; ++y)
          for (int x = x0; x < x1; ++x) patch.at(c, y - y0, x - x0) = in.at(c, y, x);

      const Tensor result = fn(patch);
      if (result.height() != patch.height() * factor || result.width() != patch.width() * factor)
        fail(ErrorCode::kShapeMismatch, "tiled function changed geometry unexpectedly");
      if (out.size() == 0) out = Tensor(result.channels(), H * factor, W * factor);

      for (int c = 0; c < result.channels(); ++c)
        for (int y = 0; y < th * factor; ++y)
          for (int x = 0; x < tw * factor; ++x)
            out.at(c, ty * factor + y, tx * factor + x) =
                result.at(c, (ty - y0) * factor + y, (tx - x0) * factor + x);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Frame level

std::string_view to_string(Upscaler u) {
  switch (u) {
    case Upscaler::kBicubic: return "bicubic";
    case Upscaler::kBackProjection: return "backproj";
    case Upscaler::kVdsr: return "vdsr";
    case Upscaler::kRdn: return "rdn";
  }
  return "unknown";
}

Upscaler parse_upscaler(std::string_view name) {
  for (Upscaler u : {Upscaler::kBicubic, Upscaler::kBackProjection, Upscaler::kVdsr, Upscaler::kRdn})
    if (to_string(u) == name) return u;
  fail(ErrorCode::kInvalidArgument, "unknown upscaler '" + std::string(name) + "'");
}

bool needs_weights(Upscaler u) { return u == Upscaler::kVdsr || u == Upscaler::kRdn; }

namespace {

// Full-range BT.601 conversions on [0,1] luma/chroma with chroma centred at 0.5.
Tensor ycbcr_to_rgb(const Tensor& y, const Tensor& cb, const Tensor& cr) {
  Tensor rgb(3, y.height(), y.width());
  auto Y = y.data(), U = cb.data(), V = cr.data();
  auto R = rgb.channel(0), G = rgb.channel(1), B = rgb.channel(2);
  for (std::size_t i = 0; i < Y.size(); ++i) {
    const double u = U[i] - 0.5, v = V[i] - 0.5;
    R[i] = static_cast<float>(Y[i] + 1.402 * v);
    G[i] = static_cast<float>(Y[i] - 0.344136 * u - 0.714136 * v);
    B[i] = static_cast<float>(Y[i] + 1.772 * u);
  }
  return rgb;
}

std::pair<Tensor, Tensor> rgb_to_chroma(const Tensor& rgb) {
  Tensor cb(1, rgb.height(), rgb.width()), cr(1, rgb.height(), rgb.width());
  auto R = rgb.channel(0), G = rgb.channel(1), B = rgb.channel(2);
  auto U = cb.data(), V = cr.data();
  for (std::size_t i = 0; i < U.size(); ++i) {
    U[i] = static_cast<float>(0.5 - 0.168736 * R[i] - 0.331264 * G[i] + 0.5 * B[i]);
    V[i] = static_cast<float>(0.5 + 0.5 * R[i] - 0.418688 * G[i] - 0.081312 * B[i]);
  }
  return {cb, cr};
}

}  // namespace

FrameBuffer upscale_frame(const FrameBuffer& frame, Upscaler method, const UpscaleContext& ctx,
                          ScaleFactor s) {
  const VideoSpec& lr = frame.spec();
  const int f = s.value();
  const VideoSpec hr = lr.with_size(lr.width * f, lr.height * f);
  const Tensor y_lr = plane_to_tensor(frame.y(), lr.width, lr.height);

  auto chroma_up = [&](std::span<const std::uint8_t> plane) {
    return upscale_plane_bicubic(plane, lr.chroma_width(), lr.chroma_height(), s, ctx.kernel);
  };

  std::vector<std::uint8_t> y;
  switch (method) {
    case Upscaler::kBicubic:
      y = tensor_to_plane(upscale_bicubic(y_lr, s, ctx.kernel));
      break;
    case Upscaler::kBackProjection:
      y = image_to_plane(back_projection_upscale(plane_to_image(frame.y(), lr.width, lr.height), s,
                                                 ctx.bp_iterations, ctx.kernel));
      break;
    case Upscaler::kVdsr:
      if (!ctx.vdsr) fail(ErrorCode::kMissingWeights, "VDSR upscaling needs weights");
      y = tensor_to_plane(ctx.vdsr->upscale_y(y_lr, s, ctx.kernel, ctx.tiles));
      break;
    case Upscaler::kRdn:
      if (!ctx.rdn) fail(ErrorCode::kMissingWeights, "RDN upscaling needs weights");
      if (ctx.rdn_input == RdnInputMode::kRgb) {
        // Bring chroma to luma resolution, run the network on RGB, and come
        // back to 4:2:0 at the output resolution.
        auto chroma_lr = [&](std::span<const std::uint8_t> p) {
          return plane_to_tensor(upscale_plane_bicubic(p, lr.chroma_width(), lr.chroma_height(), s,
                                                       ctx.kernel),
                                 lr.width, lr.height);
        };
        const Tensor rgb_hr =
            ctx.rdn->upscale_rgb(ycbcr_to_rgb(y_lr, chroma_lr(frame.cb()), chroma_lr(frame.cr())), ctx.tiles);
        auto [cb_hr, cr_hr] = rgb_to_chroma(rgb_hr);
        return FrameBuffer(hr, tensor_to_plane(bt601_luma(rgb_hr)),
                           tensor_to_plane(downscale_bicubic(cb_hr, s, ctx.kernel)),
                           tensor_to_plane(downscale_bicubic(cr_hr, s, ctx.kernel)));
      }
      y = tensor_to_plane(ctx.rdn->upscale_y(y_lr, ctx.tiles));
      break;
  }
  return FrameBuffer(hr, std::move(y), chroma_up(frame.cb()), chroma_up(frame.cr()));
}

// ---------------------------------------------------------------------------
// Synthetic weights

namespace {

void add_random_conv(ModelWeights& w, const std::string& name, const std::vector<int>& shape,
                     std::mt19937_64& rng, float gain, float bias_stddev) {
  ConvParams p = ConvParams::zeros(shape[0], shape[1], shape[2], shape[3]);
  const double fan_in = static_cast<double>(shape[1]) * shape[2] * shape[3];
  if (gain != 0.0f) {
    std::normal_distribution<double> dist(0.0, gain * std::sqrt(2.0 / fan_in));
    for (float& v : p.weights) v = static_cast<float>(dist(rng));
  }
  if (bias_stddev != 0.0f) {
    std::normal_distribution<double> dist(0.0, bias_stddev);
    for (float& v : p.bias) v = static_cast<float>(dist(rng));
  }
  w.add_conv(name, p);
}

}  // namespace

ModelWeights make_vdsr_weights(std::uint64_t seed, float gain, float bias_stddev) {
  std::mt19937_64 rng(seed);
  ModelWeights w;
  for (int i = 1; i <= kVdsrDepth; ++i)
    add_random_conv(w, vdsr_layer_name(i), vdsr_layer_shape(i), rng, gain, bias_stddev);
  return w;
}

ModelWeights make_rdn_weights(const RdnConfig& config, std::uint64_t seed, float gain,
                              float bias_stddev) {
  std::mt19937_64 rng(seed);
  ModelWeights w;
  for (const auto& [name, shape] : rdn_layer_table(config))
    add_random_conv(w, name, shape, rng, gain, bias_stddev);
  return w;
}

}  // namespace scalechain
