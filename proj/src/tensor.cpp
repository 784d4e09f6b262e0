#include "scalechain/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "scalechain/error.hpp"
#include "scalechain/parallel.hpp"

namespace scalechain {

namespace {

std::string shape_str(const Tensor& t) {
  return "(" + std::to_string(t.channels()) + "," + std::to_string(t.height()) + "," +
         std::to_string(t.width()) + ")";
}

// Output channels computed together by one worker, and the width of the
// register tile each of them accumulates.
constexpr int kOutBlock = 4;
constexpr int kTile = 16;
using VecTile = float __attribute__((vector_size(kTile * sizeof(float))));

// Input planes with a zero border of the kernel radius, plus kTile columns
// of slack so the last tile of a row can read past the edge.
struct PaddedInput {
  int channels = 0, pad_y = 0, pad_x = 0, stride = 0, rows = 0;
  std::vector<float> data;

  PaddedInput(const Tensor& x, int pad_y_, int pad_x_) : channels(x.channels()), pad_y(pad_y_), pad_x(pad_x_) {
    stride = x.width() + 2 * pad_x + kTile;
    rows = x.height() + 2 * pad_y;
    data.assign(static_cast<std::size_t>(channels) * rows * stride, 0.0f);
    for (int c = 0; c < channels; ++c) {
      const float* src = x.channel(c).data();
      for (int y = 0; y < x.height(); ++y)
        std::copy(src + static_cast<std::size_t>(y) * x.width(), src + static_cast<std::size_t>(y + 1) * x.width(),
                  row(c, y + pad_y) + pad_x);
    }
  }
  float* row(int c, int y) { return data.data() + (static_cast<std::size_t>(c) * rows + y) * stride; }
  const float* row(int c, int y) const { return data.data() + (static_cast<std::size_t>(c) * rows + y) * stride; }
};

// Adds the contribution of input channels [in_offset, in_offset + x.channels())
// of `p` to output channels [o_begin, o_end), after optionally initializing
// them with the bias. Every output element accumulates bias first, then
// (input channel, ky, kx) in ascending order.
void conv_block(const PaddedInput& x, int H, int W, const ConvParams& p, Tensor& out, int o_begin, int o_end,
                int in_offset, bool init_bias) {
  const int nb = o_end - o_begin;
  const int taps = p.k_h * p.k_w;

  // Weights of the live input channels, packed [channel][tap][block lane].
  std::vector<int> live;
  std::vector<float> packed;
  for (int i = 0; i < x.channels; ++i) {
    bool any = false;
    for (int b = 0; b < nb && !any; ++b) {
      const float* w = &p.weights[(static_cast<std::size_t>(o_begin + b) * p.in_channels + in_offset + i) * taps];
      any = std::any_of(w, w + taps, [](float v) { return v != 0.0f; });
    }
    if (!any) continue;
    live.push_back(i);
    for (int t = 0; t < taps; ++t)
      for (int b = 0; b < kOutBlock; ++b)
        packed.push_back(b < nb ? p.weights[(static_cast<std::size_t>(o_begin + b) * p.in_channels + in_offset + i) *
                                                taps + t]
                                : 0.0f);
  }

  float* dst[kOutBlock];
  for (int y = 0; y < H; ++y) {
    for (int b = 0; b < nb; ++b) dst[b] = out.channel(o_begin + b).data() + static_cast<std::size_t>(y) * W;
    for (int x0 = 0; x0 < W; x0 += kTile) {
      const int n = std::min(kTile, W - x0);
      VecTile acc[kOutBlock] = {};
      for (int b = 0; b < kOutBlock && b < nb; ++b) {
        float lane[kTile] = {};
        if (init_bias) {
          std::fill(lane, lane + kTile, p.bias[o_begin + b]);
        } else {
          std::copy(dst[b] + x0, dst[b] + x0 + n, lane);
        }
        std::memcpy(&acc[b], lane, sizeof lane);
      }
      const float* wp = packed.data();
      for (int i : live) {
        for (int ky = 0; ky < p.k_h; ++ky) {
          const float* src_row = x.row(i, y + ky) + x0;
          for (int kx = 0; kx < p.k_w; ++kx, wp += kOutBlock) {
            VecTile v;
            std::memcpy(&v, src_row + kx, sizeof v);
            acc[0] += wp[0] * v;
            acc[1] += wp[1] * v;
            acc[2] += wp[2] * v;
            acc[3] += wp[3] * v;
          }
        }
      }
      for (int b = 0; b < kOutBlock && b < nb; ++b) {
        float lane[kTile];
        std::memcpy(lane, &acc[b], sizeof lane);
        std::copy(lane, lane + n, dst[b] + x0);
      }
    }
  }
}

}  // namespace

Tensor::Tensor(int channels, int height, int width, float fill)
    : channels_(channels), height_(height), width_(width) {
  if (channels < 0 || height < 0 || width < 0) fail(ErrorCode::kInvalidArgument, "negative extent");
  data_.assign(static_cast<std::size_t>(channels) * height * width, fill);
}

Tensor::Tensor(int channels, int height, int width, std::vector<float> data)
    : channels_(channels), height_(height), width_(width), data_(std::move(data)) {
  if (channels < 0 || height < 0 || width < 0) fail(ErrorCode::kInvalidArgument, "negative extent");
  if (data_.size() != static_cast<std::size_t>(channels) * height * width)
    fail(ErrorCode::kShapeMismatch, "tensor data length does not match C*H*W");
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

ConvParams ConvParams::zeros(int out_channels, int in_channels, int k_h, int k_w) {
  ConvParams p;
  p.out_channels = out_channels;
  p.in_channels = in_channels;
  p.k_h = k_h;
  p.k_w = k_w;
  p.weights.assign(p.weight_count(), 0.0f);
  p.bias.assign(out_channels, 0.0f);
  p.validate();
  return p;
}

void ConvParams::validate() const {
  if (out_channels <= 0 || in_channels <= 0 || k_h <= 0 || k_w <= 0)
    fail(ErrorCode::kShapeMismatch, "conv extents must be positive");
  if (k_h % 2 == 0 || k_w % 2 == 0) fail(ErrorCode::kShapeMismatch, "conv kernel size must be odd");
  if (weights.size() != weight_count())
    fail(ErrorCode::kShapeMismatch, "conv weight length does not match out*in*kh*kw");
  if (bias.size() != static_cast<std::size_t>(out_channels))
    fail(ErrorCode::kShapeMismatch, "conv bias length does not match out_channels");
}

namespace {

void run_conv(const Tensor& x, const ConvParams& p, Tensor& out, int in_offset, bool init_bias) {
  if (x.plane_size() == 0) return;
  const PaddedInput padded(x, (p.k_h - 1) / 2, (p.k_w - 1) / 2);
  const int blocks = (p.out_channels + kOutBlock - 1) / kOutBlock;
  parallel_for(static_cast<std::size_t>(blocks), [&](std::size_t blk) {
    const int o_begin = static_cast<int>(blk) * kOutBlock;
    const int o_end = std::min(p.out_channels, o_begin + kOutBlock);
    conv_block(padded, x.height(), x.width(), p, out, o_begin, o_end, in_offset, init_bias);
  });
}

}  // namespace

Tensor conv2d(const Tensor& x, const ConvParams& p) {
  p.validate();
  if (x.channels() != p.in_channels)
    fail(ErrorCode::kShapeMismatch, "conv2d expects " + std::to_string(p.in_channels) +
                                        " input channels, got " + shape_str(x));
  Tensor out(p.out_channels, x.height(), x.width());
  run_conv(x, p, out, 0, true);
  return out;
}

Tensor conv2d_bias(const ConvParams& p, int height, int width) {
  p.validate();
  Tensor out(p.out_channels, height, width);
  for (int o = 0; o < p.out_channels; ++o) {
    auto ch = out.channel(o);
    std::fill(ch.begin(), ch.end(), p.bias[o]);
  }
  return out;
}

void conv2d_accumulate(Tensor& acc, const Tensor& x, const ConvParams& p, int in_offset) {
  p.validate();
  if (in_offset < 0 || in_offset + x.channels() > p.in_channels)
    fail(ErrorCode::kShapeMismatch, "conv2d_accumulate input slice out of range");
  if (acc.channels() != p.out_channels || acc.height() != x.height() || acc.width() != x.width())
    fail(ErrorCode::kShapeMismatch, "conv2d_accumulate accumulator shape mismatch");
  run_conv(x, p, acc, in_offset, false);
}

Tensor relu(Tensor x) {
  for (float& v : x.data()) v = v > 0.0f ? v : 0.0f;
  return x;
}

Tensor concat_channels(std::span<const Tensor> xs) {
  if (xs.empty()) fail(ErrorCode::kInvalidArgument, "concat_channels needs at least one tensor");
  const int H = xs.front().height();
  const int W = xs.front().width();
  int channels = 0;
  for (const Tensor& t : xs) {
    if (t.height() != H || t.width() != W)
      fail(ErrorCode::kShapeMismatch, "concat_channels spatial mismatch: " + shape_str(xs.front()) +
                                          " vs " + shape_str(t));
    channels += t.channels();
  }
  std::vector<float> data;
  data.reserve(static_cast<std::size_t>(channels) * H * W);
  for (const Tensor& t : xs) data.insert(data.end(), t.data().begin(), t.data().end());
  return Tensor(channels, H, W, std::move(data));
}

Tensor add(const Tensor& x, const Tensor& y) {
  if (!x.same_shape(y))
    fail(ErrorCode::kShapeMismatch, "add shape mismatch: " + shape_str(x) + " vs " + shape_str(y));
  Tensor out = x;
  auto dst = out.data();
  auto src = y.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  return out;
}

Tensor pixel_shuffle(const Tensor& x, int r) {
  if (r <= 0) fail(ErrorCode::kInvalidArgument, "pixel_shuffle factor must be positive");
  const int rr = r * r;
  if (x.channels() % rr != 0)
    fail(ErrorCode::kShapeMismatch, "pixel_shuffle: channels " + std::to_string(x.channels()) +
                                        " not divisible by " + std::to_string(rr));
  const int C = x.channels() / rr;
  const int H = x.height();
  const int W = x.width();
  Tensor out(C, H * r, W * r);
  for (int c = 0; c < C; ++c)
    for (int di = 0; di < r; ++di)
      for (int dj = 0; dj < r; ++dj) {
        const int src_c = c * rr + di * r + dj;
        for (int i = 0; i < H; ++i)
          for (int j = 0; j < W; ++j) out.at(c, r * i + di, r * j + dj) = x.at(src_c, i, j);
      }
  return out;
}

}  // namespace scalechain
