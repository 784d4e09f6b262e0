#include "scalechain/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "scalechain/error.hpp"

namespace scalechain {

double mse_y(const FrameBuffer& ref, const FrameBuffer& test) {
  if (ref.width() != test.width() || ref.height() != test.height())
    fail(ErrorCode::kGeometryMismatch, "PSNR inputs differ in geometry");
  auto a = ref.y();
  auto b = test.y();
  std::uint64_t sse = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const int d = static_cast<int>(a[i]) - static_cast<int>(b[i]);
    sse += static_cast<std::uint64_t>(d * d);
  }
  return static_cast<double>(sse) / static_cast<double>(a.size());
}

double psnr_y(std::span<const FrameBuffer> ref, std::span<const FrameBuffer> test) {
  if (ref.size() != test.size())
    fail(ErrorCode::kGeometryMismatch, "PSNR inputs differ in frame count (" + std::to_string(ref.size()) +
                                           " vs " + std::to_string(test.size()) + ")");
  if (ref.empty()) fail(ErrorCode::kInvalidArgument, "PSNR of an empty sequence");
  double total = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) total += mse_y(ref[i], test[i]);
  const double mse = total / static_cast<double>(ref.size());
  if (mse == 0.0) return kLosslessPsnr;
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

double psnr_y(const FrameBuffer& ref, const FrameBuffer& test) {
  return psnr_y(std::span(&ref, 1), std::span(&test, 1));
}

std::vector<RdPoint> RdCurve::usable_points() const {
  std::vector<RdPoint> out;
  for (const RdPoint& p : points)
    if (std::isfinite(p.quality) && std::isfinite(p.rate_kbps) && p.rate_kbps > 0.0) out.push_back(p);
  std::stable_sort(out.begin(), out.end(), [](const RdPoint& a, const RdPoint& b) { return a.rate_kbps < b.rate_kbps; });
  return out;
}

RdCurve RdCurve::subset(std::span<const int> qps) const {
  RdCurve c = *this;
  c.points.clear();
  for (const RdPoint& p : points)
    if (std::find(qps.begin(), qps.end(), p.qp) != qps.end()) c.points.push_back(p);
  return c;
}

std::optional<double> critical_bitrate(const RdCurve& conv, const RdCurve& scaled) {
  auto interpolant = [](const RdCurve& c) {
    const auto pts = c.usable_points();
    if (pts.size() < 2) fail(ErrorCode::kTooFewPoints, "critical bitrate needs two points per curve");
    std::vector<double> x, y;
    for (const RdPoint& p : pts) {
      if (!x.empty() && std::log10(p.rate_kbps) <= x.back())
        fail(ErrorCode::kNonMonotone, "duplicate rates in curve " + c.upscaler);
      x.push_back(std::log10(p.rate_kbps));
      y.push_back(p.quality);
    }
    return Pchip(std::move(x), std::move(y));
  };
  const Pchip qc = interpolant(conv);
  const Pchip qs = interpolant(scaled);
  const double lo = std::max(qc.x_min(), qs.x_min());
  const double hi = std::min(qc.x_max(), qs.x_max());
  if (!(hi > lo)) fail(ErrorCode::kNoOverlap, "RD curves share no rate range");

  auto diff = [&](double log_rate) { return qs(log_rate) - qc(log_rate); };

  constexpr int kSteps = 2048;
  double last_positive = std::nan("");
  for (int i = 0; i <= kSteps; ++i) {
    const double l = i == kSteps ? hi : lo + (hi - lo) * i / kSteps;
    const double d = diff(l);
    if (d > 0.0) {
      last_positive = l;
    } else if (d < 0.0 && !std::isnan(last_positive)) {
      double a = std::pow(10.0, last_positive);
      double b = std::pow(10.0, l);
      while (b - a > 0.05) {
        const double m = 0.5 * (a + b);
        if (diff(std::log10(m)) > 0.0) a = m;
        else b = m;
      }
      return 0.5 * (a + b);
    }
  }
  return std::nullopt;
}

}  // namespace scalechain
