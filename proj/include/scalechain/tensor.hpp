#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace scalechain {

// Rank-3 float tensor laid out channel-major, then row-major.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int channels, int height, int width, float fill = 0.0f);
  Tensor(int channels, int height, int width, std::vector<float> data);

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t plane_size() const { return static_cast<std::size_t>(height_) * width_; }
  std::size_t size() const { return data_.size(); }

  float& at(int c, int y, int x) { return data_[index(c, y, x)]; }
  float at(int c, int y, int x) const { return data_[index(c, y, x)]; }

  std::span<float> channel(int c) { return {data_.data() + c * plane_size(), plane_size()}; }
  std::span<const float> channel(int c) const {
    return {data_.data() + c * plane_size(), plane_size()};
  }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  bool same_shape(const Tensor& other) const {
    return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
  }

  bool all_finite() const;

 private:
  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }

  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<float> data_;
};

// Weights are stored [out][in][k_h][k_w]. Kernel sizes must be odd.
struct ConvParams {
  int out_channels = 0;
  int in_channels = 0;
  int k_h = 0;
  int k_w = 0;
  std::vector<float> weights;
  std::vector<float> bias;

  static ConvParams zeros(int out_channels, int in_channels, int k_h, int k_w);

  std::size_t weight_count() const {
    return static_cast<std::size_t>(out_channels) * in_channels * k_h * k_w;
  }
  float weight(int o, int i, int ky, int kx) const {
    return weights[((static_cast<std::size_t>(o) * in_channels + i) * k_h + ky) * k_w + kx];
  }
  void validate() const;
};

// Stride 1, zero padding (k-1)/2, so output spatial size equals input size.
// Each output element starts from its bias and accumulates in float over
// (input channel, kernel row, kernel column) in ascending order. The result
// is independent of the thread count.
Tensor conv2d(const Tensor& x, const ConvParams& p);

// Split form of conv2d over channel slices of its input: start from
// conv2d_bias, then accumulate each consecutive slice in order. Visiting the
// slices in ascending channel order reproduces conv2d on their concat
// bit for bit without materializing the concat.
Tensor conv2d_bias(const ConvParams& p, int height, int width);
void conv2d_accumulate(Tensor& acc, const Tensor& x, const ConvParams& p, int in_offset);

Tensor relu(Tensor x);
Tensor concat_channels(std::span<const Tensor> xs);
Tensor add(const Tensor& x, const Tensor& y);

// out[c, r*i+di, r*j+dj] = in[c*r*r + di*r + dj, i, j]
Tensor pixel_shuffle(const Tensor& x, int r);

}  // namespace scalechain
