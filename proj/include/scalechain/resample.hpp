#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "scalechain/frame_io.hpp"
#include "scalechain/tensor.hpp"

namespace scalechain {

// Integer resampling factor. Only 2 is supported.
class ScaleFactor {
 public:
  constexpr ScaleFactor() = default;
  explicit ScaleFactor(int s);

  constexpr int value() const { return s_; }

 private:
  int s_ = 2;
};

// Single float64 plane, row-major.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, double fill = 0.0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

struct KernelSpec {
  double a = -0.5;
  // Widen the kernel by s when downscaling (imresize-style antialiasing).
  bool antialias = true;
};

// Keys cubic convolution kernel.
double cubic_kernel(double x, double a = -0.5);

// Per-output-sample taps along one axis. Indices are already edge-clamped
// and weights are normalized to sum to one.
struct AxisTaps {
  std::vector<int> offsets;  // first entry of each output sample in index/weight
  std::vector<int> index;
  std::vector<double> weight;

  int count(int out) const { return offsets[out + 1] - offsets[out]; }
};

AxisTaps downscale_taps(int in_size, int s, const KernelSpec& kernel);
AxisTaps upscale_taps(int in_size, int s, const KernelSpec& kernel);

Image downscale_bicubic(const Image& in, ScaleFactor s, const KernelSpec& kernel = {});
Image upscale_bicubic(const Image& in, ScaleFactor s, const KernelSpec& kernel = {});

std::array<double, 5> gaussian_taps(double sigma);
Image gaussian5x5(const Image& in, double sigma);

// Iterative back-projection: h0 = up(lr), h[k+1] = h[k] + up(lr - down(h[k])).
// The result is clamped to [lo, hi]. This is a generic bicubic
// back-projection upscaler, not an edge-adaptive one.
Image back_projection_upscale(const Image& lr, ScaleFactor s, int iterations,
                              const KernelSpec& kernel = {}, double lo = 0.0, double hi = 255.0);

Image plane_to_image(std::span<const std::uint8_t> plane, int width, int height);
std::vector<std::uint8_t> image_to_plane(const Image& img);
Image tensor_channel_to_image(const Tensor& t, int c);
Tensor image_to_tensor(const Image& img);

Tensor downscale_bicubic(const Tensor& in, ScaleFactor s, const KernelSpec& kernel = {});
Tensor upscale_bicubic(const Tensor& in, ScaleFactor s, const KernelSpec& kernel = {});

struct DownscaleOptions {
  KernelSpec kernel;
  // Apply the 5x5 Gaussian to every plane before downscaling.
  std::optional<double> prefilter_sigma;
};

// Downscales all three planes. Width and height must be multiples of 2*s so
// the result is still a valid 4:2:0 frame.
FrameBuffer downscale_frame(const FrameBuffer& frame, ScaleFactor s, const DownscaleOptions& opts = {});

std::vector<std::uint8_t> upscale_plane_bicubic(std::span<const std::uint8_t> plane, int width,
                                                int height, ScaleFactor s,
                                                const KernelSpec& kernel = {});

}  // namespace scalechain
