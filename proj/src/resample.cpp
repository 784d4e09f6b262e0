#include "scalechain/resample.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "scalechain/error.hpp"
#include "scalechain/parallel.hpp"

namespace scalechain {

namespace {

int clamp_index(int i, int n) { return std::clamp(i, 0, n - 1); }

// Collects taps for output positions whose source-space centre is
// `center(x)`. `stretch` widens the kernel (antialias) and scales weights.
template <class CenterFn>
AxisTaps build_taps(int in_size, int out_size, double stretch, double a, CenterFn center) {
  AxisTaps taps;
  taps.offsets.reserve(out_size + 1);
  taps.offsets.push_back(0);
  const double half = 2.0 * stretch;
  for (int x = 0; x < out_size; ++x) {
    const double c = center(x);
    const int first = static_cast<int>(std::ceil(c - half));
    const int last = static_cast<int>(std::floor(c + half));
    const std::size_t begin = taps.weight.size();
    double sum = 0.0;
    for (int j = first; j <= last; ++j) {
      const double w = cubic_kernel((c - j) / stretch, a) / stretch;
      if (w == 0.0) continue;
      taps.index.push_back(clamp_index(j, in_size));
      taps.weight.push_back(w);
      sum += w;
    }
    for (std::size_t k = begin; k < taps.weight.size(); ++k) taps.weight[k] /= sum;
    taps.offsets.push_back(static_cast<int>(taps.weight.size()));
  }
  return taps;
}

Image apply_separable(const Image& in, const AxisTaps& tx, int out_w, const AxisTaps& ty, int out_h) {
  Image tmp(out_w, in.height);
  parallel_for(static_cast<std::size_t>(in.height), [&](std::size_t yy) {
    const int y = static_cast<int>(yy);
    const double* src = in.data.data() + static_cast<std::size_t>(y) * in.width;
    double* dst = tmp.data.data() + static_cast<std::size_t>(y) * out_w;
    for (int x = 0; x < out_w; ++x) {
      double acc = 0.0;
      for (int k = tx.offsets[x]; k < tx.offsets[x + 1]; ++k) acc += tx.weight[k] * src[tx.index[k]];
      dst[x] = acc;
    }
  });

  Image out(out_w, out_h);
  parallel_for(static_cast<std::size_t>(out_h), [&](std::size_t yy) {
    const int y = static_cast<int>(yy);
    double* dst = out.data.data() + static_cast<std::size_t>(y) * out_w;
    for (int k = ty.offsets[y]; k < ty.offsets[y + 1]; ++k) {
      const double w = ty.weight[k];
      const double* src = tmp.data.data() + static_cast<std::size_t>(ty.index[k]) * out_w;
      for (int x = 0; x < out_w; ++x) dst[x] += w * src[x];
    }
  });
  return out;
}

void require_nonempty(const Image& img) {
  if (img.width <= 0 || img.height <= 0) fail(ErrorCode::kInvalidArgument, "empty image");
  if (img.data.size() != static_cast<std::size_t>(img.width) * img.height)
    fail(ErrorCode::kShapeMismatch, "image buffer does not match its size");
}

}  // namespace

ScaleFactor::ScaleFactor(int s) : s_(s) {
  if (s != 2) fail(ErrorCode::kInvalidArgument, "only a scale factor of 2 is supported, got " + std::to_string(s));
}

double cubic_kernel(double x, double a) {
  const double t = std::abs(x);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

AxisTaps downscale_taps(int in_size, int s, const KernelSpec& kernel) {
  const double stretch = kernel.antialias ? static_cast<double>(s) : 1.0;
  return build_taps(in_size, in_size / s, stretch, kernel.a,
                    [s](int x) { return (x + 0.5) * s - 0.5; });
}

AxisTaps upscale_taps(int in_size, int s, const KernelSpec& kernel) {
  return build_taps(in_size, in_size * s, 1.0, kernel.a,
                    [s](int x) { return (x + 0.5) / s - 0.5; });
}

Image downscale_bicubic(const Image& in, ScaleFactor s, const KernelSpec& kernel) {
  require_nonempty(in);
  const int f = s.value();
  if (in.width % f != 0 || in.height % f != 0)
    fail(ErrorCode::kIndivisibleDimensions, std::to_string(in.width) + "x" + std::to_string(in.height) +
                                                " is not divisible by " + std::to_string(f));
  return apply_separable(in, downscale_taps(in.width, f, kernel), in.width / f,
                         downscale_taps(in.height, f, kernel), in.height / f);
}

Image upscale_bicubic(const Image& in, ScaleFactor s, const KernelSpec& kernel) {
  require_nonempty(in);
  const int f = s.value();
  return apply_separable(in, upscale_taps(in.width, f, kernel), in.width * f,
                         upscale_taps(in.height, f, kernel), in.height * f);
}

std::array<double, 5> gaussian_taps(double sigma) {
  if (!(sigma > 0.0)) fail(ErrorCode::kInvalidArgument, "gaussian sigma must be positive");
  std::array<double, 5> taps{};
  double sum = 0.0;
  for (int k = -2; k <= 2; ++k) {
    taps[k + 2] = std::exp(-(k * k) / (2.0 * sigma * sigma));
    sum += taps[k + 2];
  }
  for (double& t : taps) t /= sum;
  return taps;
}

Image gaussian5x5(const Image& in, double sigma) {
  require_nonempty(in);
  const auto g = gaussian_taps(sigma);
  auto axis = [&](int n) {
    AxisTaps taps;
    taps.offsets.push_back(0);
    for (int x = 0; x < n; ++x) {
      for (int k = -2; k <= 2; ++k) {
        taps.index.push_back(clamp_index(x + k, n));
        taps.weight.push_back(g[k + 2]);
      }
      taps.offsets.push_back(static_cast<int>(taps.weight.size()));
    }
    return taps;
  };
  return apply_separable(in, axis(in.width), in.width, axis(in.height), in.height);
}

Image back_projection_upscale(const Image& lr, ScaleFactor s, int iterations,
                              const KernelSpec& kernel, double lo, double hi) {
  if (iterations < 0) fail(ErrorCode::kInvalidArgument, "iterations must be >= 0");
  Image h = upscale_bicubic(lr, s, kernel);
  for (int k = 0; k < iterations; ++k) {
    Image residual = downscale_bicubic(h, s, kernel);
    for (std::size_t i = 0; i < residual.data.size(); ++i)
      residual.data[i] = lr.data[i] - residual.data[i];
    const Image correction = upscale_bicubic(residual, s, kernel);
    for (std::size_t i = 0; i < h.data.size(); ++i) h.data[i] += correction.data[i];
  }
  for (double& v : h.data) v = std::clamp(v, lo, hi);
  return h;
}

Image plane_to_image(std::span<const std::uint8_t> plane, int width, int height) {
  if (plane.size() != static_cast<std::size_t>(width) * height)
    fail(ErrorCode::kShapeMismatch, "plane length does not match its size");
  Image img(width, height);
  std::copy(plane.begin(), plane.end(), img.data.begin());
  return img;
}

std::vector<std::uint8_t> image_to_plane(const Image& img) {
  std::vector<std::uint8_t> plane(img.data.size());
  std::transform(img.data.begin(), img.data.end(), plane.begin(), quantize_sample);
  return plane;
}

Image tensor_channel_to_image(const Tensor& t, int c) {
  Image img(t.width(), t.height());
  auto src = t.channel(c);
  std::copy(src.begin(), src.end(), img.data.begin());
  return img;
}

Tensor image_to_tensor(const Image& img) {
  Tensor t(1, img.height, img.width);
  auto dst = t.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<float>(img.data[i]);
  return t;
}

namespace {

template <class Fn>
Tensor per_channel(const Tensor& in, Fn fn) {
  std::vector<Image> planes;
  for (int c = 0; c < in.channels(); ++c) planes.push_back(fn(tensor_channel_to_image(in, c)));
  if (planes.empty()) return in;
  Tensor out(in.channels(), planes.front().height, planes.front().width);
  for (int c = 0; c < in.channels(); ++c) {
    auto dst = out.channel(c);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<float>(planes[c].data[i]);
  }
  return out;
}

}  // namespace

Tensor downscale_bicubic(const Tensor& in, ScaleFactor s, const KernelSpec& kernel) {
  return per_channel(in, [&](const Image& img) { return downscale_bicubic(img, s, kernel); });
}

Tensor upscale_bicubic(const Tensor& in, ScaleFactor s, const KernelSpec& kernel) {
  return per_channel(in, [&](const Image& img) { return upscale_bicubic(img, s, kernel); });
}

FrameBuffer downscale_frame(const FrameBuffer& frame, ScaleFactor s, const DownscaleOptions& opts) {
  const int f = s.value();
  const VideoSpec& spec = frame.spec();
  if (spec.width % (2 * f) != 0 || spec.height % (2 * f) != 0)
    fail(ErrorCode::kIndivisibleDimensions,
         "frame " + std::to_string(spec.width) + "x" + std::to_string(spec.height) +
             " cannot be downscaled by " + std::to_string(f) + " into a 4:2:0 frame");
  auto scale = [&](std::span<const std::uint8_t> plane, int w, int h) {
    Image img = plane_to_image(plane, w, h);
    if (opts.prefilter_sigma) img = gaussian5x5(img, *opts.prefilter_sigma);
    return image_to_plane(downscale_bicubic(img, s, opts.kernel));
  };
  const VideoSpec lr = spec.with_size(spec.width / f, spec.height / f);
  return FrameBuffer(lr, scale(frame.y(), spec.width, spec.height),
                     scale(frame.cb(), spec.chroma_width(), spec.chroma_height()),
                     scale(frame.cr(), spec.chroma_width(), spec.chroma_height()));
}

std::vector<std::uint8_t> upscale_plane_bicubic(std::span<const std::uint8_t> plane, int width,
                                                int height, ScaleFactor s, const KernelSpec& kernel) {
  return image_to_plane(upscale_bicubic(plane_to_image(plane, width, height), s, kernel));
}

}  // namespace scalechain
