#pragma once

// Straightforward reference implementations used to check the optimized code.
// They share no code with the library beyond plain data types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "scalechain/frame_io.hpp"
#include "scalechain/tensor.hpp"

namespace oracle {

// Direct convolution in double: zero padding, stride 1, odd kernels.
inline std::vector<double> conv2d(const std::vector<float>& x, int cin, int h, int w, const std::vector<float>& wt,
                                  const std::vector<float>& bias, int cout, int kh, int kw) {
  std::vector<double> out(static_cast<std::size_t>(cout) * h * w);
  const int py = kh / 2, px = kw / 2;
  for (int o = 0; o < cout; ++o)
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) {
        double s = bias[o];
        for (int i = 0; i < cin; ++i)
          for (int a = 0; a < kh; ++a)
            for (int b = 0; b < kw; ++b) {
              int sy = y + a - py, sx = xx + b - px;
              if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
              s += static_cast<double>(wt[((o * cin + i) * kh + a) * kw + b]) * x[(i * h + sy) * w + sx];
            }
        out[(o * h + y) * w + xx] = s;
      }
  return out;
}

inline double keys(double t, double a) {
  t = std::fabs(t);
  if (t <= 1.0) return (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0;
  if (t < 2.0) return a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a;
  return 0.0;
}

// Weights over every candidate input index for one output sample, mapping
// output x to input coordinate (x + 0.5) * ratio - 0.5 with ratio = in/out.
// Antialiased when shrinking: the kernel is stretched by the ratio.
inline std::vector<std::pair<int, double>> axis_weights(int out_x, int in_size, double ratio, double a, bool antialias) {
  const double centre = (out_x + 0.5) * ratio - 0.5;
  const double stretch = (ratio > 1.0 && antialias) ? ratio : 1.0;
  std::vector<std::pair<int, double>> taps;
  double sum = 0.0;
  for (int j = static_cast<int>(std::floor(centre - 2.0 * stretch)) - 1;
       j <= static_cast<int>(std::ceil(centre + 2.0 * stretch)) + 1; ++j) {
    double wgt = keys((centre - j) / stretch, a) / stretch;
    if (wgt == 0.0) continue;
    taps.push_back({std::clamp(j, 0, in_size - 1), wgt});
    sum += wgt;
  }
  for (auto& t : taps) t.second /= sum;
  return taps;
}

// Non-separable evaluation: every output pixel sums over the full 2-D tap
// product directly.
inline std::vector<double> resize(const std::vector<double>& in, int w, int h, int ow, int oh, double a = -0.5,
                                  bool antialias = true) {
  std::vector<double> out(static_cast<std::size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y) {
    auto ty = axis_weights(y, h, static_cast<double>(h) / oh, a, antialias);
    for (int x = 0; x < ow; ++x) {
      auto tx = axis_weights(x, w, static_cast<double>(w) / ow, a, antialias);
      double s = 0.0;
      for (auto [iy, wy] : ty)
        for (auto [ix, wx] : tx) s += wy * wx * in[static_cast<std::size_t>(iy) * w + ix];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  return out;
}

// Luma PSNR over a sequence: mean of per-frame MSE, then 10 log10(255^2/mse).
inline double psnr(const std::vector<std::vector<std::uint8_t>>& ref, const std::vector<std::vector<std::uint8_t>>& test) {
  long double total = 0.0L;
  for (std::size_t f = 0; f < ref.size(); ++f) {
    long double se = 0.0L;
    for (std::size_t i = 0; i < ref[f].size(); ++i) {
      long double d = static_cast<long double>(ref[f][i]) - test[f][i];
      se += d * d;
    }
    total += se / ref[f].size();
  }
  long double mse = total / ref.size();
  if (mse == 0.0L) return INFINITY;
  return static_cast<double>(10.0L * std::log10(255.0L * 255.0L / mse));
}

// Monotone cubic Hermite interpolation, written from the textbook
// description (harmonic-mean interior slopes, three-point edge slopes with
// the shape-preserving limits).
struct Hermite {
  std::vector<double> x, y, m;

  Hermite(std::vector<double> xs, std::vector<double> ys) : x(std::move(xs)), y(std::move(ys)) {
    const std::size_t n = x.size();
    std::vector<double> d(n - 1), hh(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      hh[i] = x[i + 1] - x[i];
      d[i] = (y[i + 1] - y[i]) / hh[i];
    }
    m.assign(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
      if (d[i - 1] * d[i] <= 0.0) continue;
      double w1 = 2 * hh[i] + hh[i - 1], w2 = hh[i] + 2 * hh[i - 1];
      m[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
    }
    auto end_slope = [](double h0, double h1, double d0, double d1) {
      double s = ((2 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
      if (s * d0 <= 0.0) return 0.0;
      if (d0 * d1 < 0.0 && std::fabs(s) > 3 * std::fabs(d0)) return 3 * d0;
      return s;
    };
    m[0] = end_slope(hh[0], hh[1], d[0], d[1]);
    m[n - 1] = end_slope(hh[n - 2], hh[n - 3], d[n - 2], d[n - 3]);
  }

  double operator()(double v) const {
    std::size_t k = 0;
    while (k + 2 < x.size() && v > x[k + 1]) ++k;
    double hk = x[k + 1] - x[k], t = (v - x[k]) / hk;
    double h00 = (1 + 2 * t) * (1 - t) * (1 - t), h10 = t * (1 - t) * (1 - t);
    double h01 = t * t * (3 - 2 * t), h11 = t * t * (t - 1);
    return h00 * y[k] + h10 * hk * m[k] + h01 * y[k + 1] + h11 * hk * m[k + 1];
  }
};

// Least-squares cubic via Gram-Schmidt on the raw monomials.
inline std::vector<double> lsq_cubic(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  std::vector<std::vector<long double>> cols(4, std::vector<long double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    long double p = 1.0L;
    for (int k = 0; k < 4; ++k, p *= x[i]) cols[k][i] = p;
  }
  std::vector<std::vector<long double>> q = cols;
  long double r[4][4] = {};
  for (int k = 0; k < 4; ++k) {
    for (int j = 0; j < k; ++j) {
      long double dot = 0;
      for (std::size_t i = 0; i < n; ++i) dot += q[j][i] * cols[k][i];
      r[j][k] = dot;
      for (std::size_t i = 0; i < n; ++i) q[k][i] -= dot * q[j][i];
    }
    long double norm = 0;
    for (std::size_t i = 0; i < n; ++i) norm += q[k][i] * q[k][i];
    norm = std::sqrt(norm);
    r[k][k] = norm;
    for (std::size_t i = 0; i < n; ++i) q[k][i] /= norm;
  }
  long double qty[4];
  for (int k = 0; k < 4; ++k) {
    qty[k] = 0;
    for (std::size_t i = 0; i < n; ++i) qty[k] += q[k][i] * y[i];
  }
  std::vector<double> c(4);
  for (int k = 3; k >= 0; --k) {
    long double s = qty[k];
    for (int j = k + 1; j < 4; ++j) s -= r[k][j] * c[j];
    c[k] = static_cast<double>(s / r[k][k]);
  }
  return c;
}

// BD saving in percent from dense Simpson integration of two log-rate
// models over [lo, hi].
template <typename FA, typename FT>
double dense_bd(FA anchor, FT test, double lo, double hi, int intervals = 200000) {
  double h = (hi - lo) / intervals, s = 0.0;
  for (int i = 0; i <= intervals; ++i) {
    double q = lo + i * h;
    double wgt = (i == 0 || i == intervals) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    s += wgt * (test(q) - anchor(q));
  }
  double mean = s * h / 3.0 / (hi - lo);
  return (1.0 - std::pow(10.0, mean)) * 100.0;
}

inline scalechain::FrameBuffer random_frame(std::mt19937& rng, int w, int h) {
  scalechain::VideoSpec spec;
  spec.width = w;
  spec.height = h;
  std::uniform_int_distribution<int> d(0, 255);
  std::vector<std::uint8_t> y(spec.luma_size()), cb(spec.chroma_size()), cr(spec.chroma_size());
  for (auto& v : y) v = static_cast<std::uint8_t>(d(rng));
  for (auto& v : cb) v = static_cast<std::uint8_t>(d(rng));
  for (auto& v : cr) v = static_cast<std::uint8_t>(d(rng));
  return {spec, std::move(y), std::move(cb), std::move(cr)};
}

// Smooth moving pattern with mild noise, closer to natural content than
// uniform noise.
inline scalechain::FrameBuffer textured_frame(std::mt19937& rng, int w, int h, int t) {
  scalechain::VideoSpec spec;
  spec.width = w;
  spec.height = h;
  std::normal_distribution<double> noise(0.0, 4.0);
  std::vector<std::uint8_t> y(spec.luma_size()), cb(spec.chroma_size()), cr(spec.chroma_size());
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double v = 128 + 50 * std::sin((c + 2 * t) / 6.0) + 40 * std::cos(r / 9.0) + 20 * std::sin((r + c) / 3.0) +
                 noise(rng);
      y[static_cast<std::size_t>(r) * w + c] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  for (int r = 0; r < h / 2; ++r)
    for (int c = 0; c < w / 2; ++c) {
      cb[static_cast<std::size_t>(r) * (w / 2) + c] = static_cast<std::uint8_t>(110 + (c * 40) / (w / 2));
      cr[static_cast<std::size_t>(r) * (w / 2) + c] = static_cast<std::uint8_t>(140 - (r * 30) / (h / 2));
    }
  return {spec, std::move(y), std::move(cb), std::move(cr)};
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "sctest-XXXXXX").string();
    path = mkdtemp(tmpl.data());
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

}  // namespace oracle
