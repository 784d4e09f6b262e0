#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "scalechain/frame_io.hpp"

namespace scalechain {

// ---------------------------------------------------------------------------
// PSNR

inline constexpr double kLosslessPsnr = std::numeric_limits<double>::infinity();

double mse_y(const FrameBuffer& ref, const FrameBuffer& test);
// 10*log10(255^2 / mean per-frame MSE); +inf when every frame is identical.
double psnr_y(std::span<const FrameBuffer> ref, std::span<const FrameBuffer> test);
double psnr_y(const FrameBuffer& ref, const FrameBuffer& test);

// ---------------------------------------------------------------------------
// Rate-distortion curves

struct RdPoint {
  double rate_kbps = 0.0;
  double quality = 0.0;
  int qp = 0;
  std::string branch;
};

struct RdCurve {
  std::vector<RdPoint> points;
  std::string sequence;
  std::string upscaler;
  std::string metric;

  // Points with finite quality and positive rate, sorted by rate.
  std::vector<RdPoint> usable_points() const;
  RdCurve subset(std::span<const int> qps) const;
};

enum class BdMode { kPchip, kPoly3 };

std::string_view to_string(BdMode mode);
BdMode parse_bd_mode(std::string_view name);

struct BdResult {
  // Positive means the test curve needs less rate than the anchor at equal
  // quality.
  double bd_rate_percent = 0.0;
  // Quality interval the two curves were compared over.
  double quality_low = 0.0;
  double quality_high = 0.0;

  // Rate ratio test/anchor implied by the result, 1 - saving.
  double rate_ratio() const { return 1.0 - bd_rate_percent / 100.0; }
};

BdResult bd_rate(const RdCurve& anchor, const RdCurve& test, BdMode mode = BdMode::kPchip);

// Monotone piecewise cubic Hermite interpolant (Fritsch-Carlson slopes).
class Pchip {
 public:
  Pchip(std::vector<double> x, std::vector<double> y);

  double operator()(double x) const;
  // Exact integral over [a, b] within the knot range.
  double integrate(double a, double b) const;
  double x_min() const { return x_.front(); }
  double x_max() const { return x_.back(); }

 private:
  std::vector<double> x_, y_, d_;
};

// Least-squares cubic through (x, y), coefficients c0 + c1 x + c2 x^2 + c3 x^3.
std::array<double, 4> fit_cubic(std::span<const double> x, std::span<const double> y);

// Lowest rate in the common range where the scaled chain quality drops below
// the conventional chain quality, to 0.1 kbit/s. nullopt when there is no
// such crossing.
std::optional<double> critical_bitrate(const RdCurve& conv, const RdCurve& scaled);

// ---------------------------------------------------------------------------
// External VMAF scorer

struct VmafScores {
  bool available = false;
  std::string reason;  // why scores are unavailable
  std::vector<double> per_frame;
  double pooled = 0.0;
  std::string model;
  std::string command;
};

struct VmafOptions {
  // Scorer binary; an empty string disables the metric.
  std::string binary;
  std::string model;
  std::string work_dir;
};

// Parses the JSON log written by `vmaf --json`.
VmafScores parse_vmaf_json(std::string_view json);

// Never throws for a missing or failing scorer; returns available = false.
VmafScores vmaf_external(const std::string& ref_path, const std::string& test_path, const VmafOptions& opts);

}  // namespace scalechain
