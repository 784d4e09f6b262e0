#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "scalechain/error.hpp"
#include "scalechain/metrics.hpp"

namespace scalechain {

std::string_view to_string(BdMode mode) { return mode == BdMode::kPchip ? "pchip" : "poly3"; }

BdMode parse_bd_mode(std::string_view name) {
  if (name == "pchip") return BdMode::kPchip;
  if (name == "poly3") return BdMode::kPoly3;
  fail(ErrorCode::kInvalidArgument, "unknown BD mode '" + std::string(name) + "'");
}

namespace {

int sign(double v) { return (v > 0.0) - (v < 0.0); }

// Integral of the Hermite segment from its left knot to fraction tau.
double hermite_partial(double y0, double y1, double d0, double d1, double h, double tau) {
  const double t2 = tau * tau, t3 = t2 * tau, t4 = t3 * tau;
  const double H00 = tau - t3 + t4 / 2.0;
  const double H10 = t2 / 2.0 - 2.0 * t3 / 3.0 + t4 / 4.0;
  const double H01 = t3 - t4 / 2.0;
  const double H11 = -t3 / 3.0 + t4 / 4.0;
  return h * (y0 * H00 + h * d0 * H10 + y1 * H01 + h * d1 * H11);
}

}  // namespace

Pchip::Pchip(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
  const std::size_t n = x_.size();
  if (n < 2 || y_.size() != n) fail(ErrorCode::kTooFewPoints, "pchip needs at least two matching knots");
  for (std::size_t i = 1; i < n; ++i)
    if (!(x_[i] > x_[i - 1])) fail(ErrorCode::kNonMonotone, "pchip knots must be strictly increasing");

  std::vector<double> h(n - 1), delta(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    h[i] = x_[i + 1] - x_[i];
    delta[i] = (y_[i + 1] - y_[i]) / h[i];
  }
  d_.assign(n, 0.0);
  if (n == 2) {
    d_[0] = d_[1] = delta[0];
    return;
  }
  for (std::size_t k = 1; k + 1 < n; ++k) {
    if (sign(delta[k - 1]) * sign(delta[k]) <= 0) continue;
    const double w1 = 2.0 * h[k] + h[k - 1];
    const double w2 = h[k] + 2.0 * h[k - 1];
    d_[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
  }
  auto edge = [](double h0, double h1, double m0, double m1) {
    double d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if (sign(d) != sign(m0)) d = 0.0;
    else if (sign(m0) != sign(m1) && std::abs(d) > 3.0 * std::abs(m0)) d = 3.0 * m0;
    return d;
  };
  d_[0] = edge(h[0], h[1], delta[0], delta[1]);
  d_[n - 1] = edge(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
}

double Pchip::operator()(double x) const {
  const std::size_t n = x_.size();
  std::size_t k = static_cast<std::size_t>(std::upper_bound(x_.begin(), x_.end(), x) - x_.begin());
  k = std::clamp<std::size_t>(k, 1, n - 1) - 1;
  const double h = x_[k + 1] - x_[k];
  const double t = (x - x_[k]) / h;
  const double t2 = t * t, t3 = t2 * t;
  return y_[k] * (2 * t3 - 3 * t2 + 1) + h * d_[k] * (t3 - 2 * t2 + t) + y_[k + 1] * (-2 * t3 + 3 * t2) +
         h * d_[k + 1] * (t3 - t2);
}

double Pchip::integrate(double a, double b) const {
  if (a > b) return -integrate(b, a);
  if (a < x_.front() || b > x_.back()) fail(ErrorCode::kInvalidArgument, "pchip integral outside knot range");
  auto cumulative = [&](double x) {
    double total = 0.0;
    for (std::size_t k = 0; k + 1 < x_.size(); ++k) {
      const double h = x_[k + 1] - x_[k];
      if (x >= x_[k + 1]) {
        total += hermite_partial(y_[k], y_[k + 1], d_[k], d_[k + 1], h, 1.0);
      } else {
        if (x > x_[k]) total += hermite_partial(y_[k], y_[k + 1], d_[k], d_[k + 1], h, (x - x_[k]) / h);
        break;
      }
    }
    return total;
  };
  return cumulative(b) - cumulative(a);
}

std::array<double, 4> fit_cubic(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 4) fail(ErrorCode::kTooFewPoints, "cubic fit needs four points");
  // Normal equations, solved with partial pivoting in long double.
  long double a[4][5] = {};
  for (std::size_t i = 0; i < x.size(); ++i) {
    long double pw[7];
    pw[0] = 1.0L;
    for (int k = 1; k < 7; ++k) pw[k] = pw[k - 1] * x[i];
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) a[r][c] += pw[r + c];
      a[r][4] += pw[r] * y[i];
    }
  }
  for (int col = 0; col < 4; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 4; ++r)
      if (std::fabs(a[r][col]) > std::fabs(a[pivot][col])) pivot = r;
    if (std::fabs(a[pivot][col]) < 1e-300L) fail(ErrorCode::kNonMonotone, "cubic fit is singular");
    std::swap(a[col], a[pivot]);
    for (int r = 0; r < 4; ++r) {
      if (r == col) continue;
      const long double f = a[r][col] / a[col][col];
      for (int c = col; c < 5; ++c) a[r][c] -= f * a[col][c];
    }
  }
  return {static_cast<double>(a[0][4] / a[0][0]), static_cast<double>(a[1][4] / a[1][1]),
          static_cast<double>(a[2][4] / a[2][2]), static_cast<double>(a[3][4] / a[3][3])};
}

namespace {

// Integral of log10(rate) as a function of quality over [lo, hi].
struct LogRateModel {
  virtual ~LogRateModel() = default;
  virtual double integral(double lo, double hi) const = 0;
};

struct PchipModel final : LogRateModel {
  explicit PchipModel(Pchip p) : f(std::move(p)) {}
  double integral(double lo, double hi) const override { return f.integrate(lo, hi); }
  Pchip f;
};

struct CubicModel final : LogRateModel {
  // Fitted on t = (q - centre) / span for conditioning.
  double centre = 0.0, span = 1.0;
  std::array<double, 4> c{};
  double primitive(double q) const {
    const double t = (q - centre) / span;
    return span * t * (c[0] + t * (c[1] / 2.0 + t * (c[2] / 3.0 + t * c[3] / 4.0)));
  }
  double integral(double lo, double hi) const override { return primitive(hi) - primitive(lo); }
};

struct Prepared {
  std::unique_ptr<LogRateModel> model;
  double q_min, q_max;
};

Prepared prepare(const RdCurve& curve, BdMode mode) {
  const auto pts = curve.usable_points();
  if (pts.size() < 4)
    fail(ErrorCode::kTooFewPoints, "BD-rate needs at least four finite points, curve '" + curve.upscaler +
                                       "' has " + std::to_string(pts.size()));
  std::vector<double> q, lr;
  for (const RdPoint& p : pts) {
    q.push_back(p.quality);
    lr.push_back(std::log10(p.rate_kbps));
  }
  const auto [qmin, qmax] = std::minmax_element(q.begin(), q.end());
  Prepared out{nullptr, *qmin, *qmax};
  if (mode == BdMode::kPchip) {
    for (std::size_t i = 1; i < q.size(); ++i)
      if (!(q[i] > q[i - 1]))
        fail(ErrorCode::kNonMonotone, "quality must increase strictly with rate for pchip BD (curve '" +
                                          curve.upscaler + "')");
    out.model = std::make_unique<PchipModel>(Pchip(q, lr));
  } else {
    auto m = std::make_unique<CubicModel>();
    m->centre = 0.5 * (out.q_min + out.q_max);
    m->span = std::max(0.5 * (out.q_max - out.q_min), 1e-12);
    std::vector<double> t;
    for (double v : q) t.push_back((v - m->centre) / m->span);
    m->c = fit_cubic(t, lr);
    out.model = std::move(m);
  }
  return out;
}

}  // namespace

BdResult bd_rate(const RdCurve& anchor, const RdCurve& test, BdMode mode) {
  const Prepared a = prepare(anchor, mode);
  const Prepared t = prepare(test, mode);
  const double lo = std::max(a.q_min, t.q_min);
  const double hi = std::min(a.q_max, t.q_max);
  if (!(hi > lo)) fail(ErrorCode::kNoOverlap, "RD curves share no quality range");

  const double mean_diff = (t.model->integral(lo, hi) - a.model->integral(lo, hi)) / (hi - lo);
  BdResult r;
  r.bd_rate_percent = (1.0 - std::pow(10.0, mean_diff)) * 100.0;
  r.quality_low = lo;
  r.quality_high = hi;
  return r;
}

}  // namespace scalechain
