// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "scalechain/error.hpp"
#include "scalechain/experiment.hpp"
#include "scalechain/metrics.hpp"
#include "scalechain/resample.hpp"
#include "scalechain/sr_models.hpp"
#include "scalechain/tensor.hpp"

using namespace scalechain;
namespace fs = std::filesystem;

namespace {

constexpr double kConvRelTol = 1e-5;
constexpr double kConvSeconds = 10.0;
constexpr double kResampleTol = 1e-6;
constexpr double kPsnrTol = 1e-9;
constexpr double kDeltaPsnr = 24.05, kDeltaPsnrTol = 0.01;
constexpr double kHalvingTol = 1e-9;
constexpr double kAntiSymTol = 1e-6;
constexpr double kDenseTol = 0.01;
constexpr double kCriticalTarget = 9000.0, kCriticalTol = 0.1;
constexpr double kE2eSeconds = 120.0;
constexpr double kQp4Psnr = 50.0;

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
  std::printf("%s %-22s %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

void guarded(const std::string& name, const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(name, false, std::string("exception: ") + e.what());
  }
}

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

bool throws(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error&) {
    return true;
  }
  return false;
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

void convolution_oracle() {
  std::mt19937 rng(2024);
  std::uniform_int_distribution<int> ch(1, 12), sz(1, 24), kk(0, 2);
  std::normal_distribution<float> nd(0.0f, 1.0f);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  // Per case: max |y - ref| over max |ref|, the norm-wise relative error.
  // The elementwise figure (floored at 1) is printed for information.
  double worst = 0.0, worst_elem = 0.0;
  auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < 200; ++i) {
    const int cin = ch(rng), cout = ch(rng), h = sz(rng), w = sz(rng), k = 2 * kk(rng) + 1;
    const double zeros = i % 5 == 0 ? 0.5 : 0.0;
    Tensor x(cin, h, w);
    for (float& v : x.data()) v = nd(rng);
    ConvParams p = ConvParams::zeros(cout, cin, k, k);
    for (float& v : p.weights) v = u(rng) < zeros ? 0.0f : nd(rng);
    for (float& v : p.bias) v = nd(rng);
    Tensor y = conv2d(x, p);
    std::vector<float> xs(x.data().begin(), x.data().end());
    auto ref = oracle::conv2d(xs, cin, h, w, p.weights, p.bias, cout, k, k);
    double err = 0.0, scale = 0.0;
    for (std::size_t j = 0; j < ref.size(); ++j) {
      err = std::max(err, std::abs(y.data()[j] - ref[j]));
      scale = std::max(scale, std::abs(ref[j]));
      worst_elem = std::max(worst_elem, std::abs(y.data()[j] - ref[j]) / std::max(1.0, std::abs(ref[j])));
    }
    worst = std::max(worst, err / std::max(scale, 1e-30));
  }
  const double secs = seconds_since(start);
  report("conv-oracle", worst <= kConvRelTol && secs < kConvSeconds,
         fmt("200 cases, worst rel err %.2e (tol %.0e; elementwise %.2e), %.2f s (limit %.0f s)", worst, kConvRelTol,
             worst_elem, secs, kConvSeconds));
}

ModelWeights vdsr_perturbed(int index, int dim, int delta) {
  ModelWeights w;
  for (int i = 1; i <= kVdsrDepth; ++i) {
    auto s = vdsr_layer_shape(i);
    if (i == index) s[dim] += delta;
    w.add(vdsr_layer_name(i), s, std::vector<float>(static_cast<std::size_t>(s[0]) * s[1] * s[2] * s[3], 0.0f));
  }
  return w;
}

ModelWeights rdn_perturbed(const std::string& target, int dim, int delta) {
  ModelWeights w;
  for (auto [name, shape] : rdn_layer_table({})) {
    if (name == target) shape[dim] += delta;
    std::size_t n = 1;
    for (int e : shape) n *= e;
    w.add(name, shape, std::vector<float>(n, 0.0f));
  }
  return w;
}

void graph_fidelity() {
  std::size_t total = 0;
  for (int i = 1; i <= kVdsrDepth; ++i) {
    auto s = vdsr_layer_shape(i);
    total += static_cast<std::size_t>(s[0]) * s[1] * s[2] * s[3];
  }
  const bool table_ok = vdsr_layer_shape(1) == std::vector<int>{64, 1, 3, 3} &&
                        vdsr_layer_shape(20) == std::vector<int>{1, 64, 3, 3} && total == 576 + 18 * 36864 + 576;
  int vdsr_rejected = 0, vdsr_cases = 0;
  for (int layer : {1, 2, 10, 19, 20})
    for (int dim = 0; dim < 4; ++dim)
      for (int delta : {-1, 1}) {
        ++vdsr_cases;
        vdsr_rejected += throws([&] { VdsrGraph::bind(vdsr_perturbed(layer, dim, delta)); });
      }
  const bool vdsr_accepts = !throws([&] { VdsrGraph::bind(vdsr_perturbed(0, 0, 0)); });

  RdnConfig c;
  int rdn_rejected = 0, rdn_cases = 0;
  for (const std::string& target : {"rdb1.lff", "rdb20.lff", "gff1", "rdb5.conv1", "rdb5.conv6", "up", "sfe1"})
    for (int dim = 0; dim < 2; ++dim)
      for (int delta : {-1, 1}) {
        ++rdn_cases;
        rdn_rejected += throws([&] { RdnGraph::bind(rdn_perturbed(target, dim, delta)); });
      }
  const bool rdn_accepts = !throws([&] { RdnGraph::bind(rdn_perturbed("", 0, 0)); });
  std::map<std::string, std::vector<int>> table;
  for (const auto& [name, shape] : rdn_layer_table(c)) table[name] = shape;
  const bool depths = c.rdb_concat_depth() == 448 && c.global_concat_depth() == 1280 && table["rdb1.lff"][1] == 448 &&
                      table["gff1"][1] == 1280;
  report("graph-fidelity",
         table_ok && vdsr_accepts && rdn_accepts && depths && vdsr_rejected == vdsr_cases && rdn_rejected == rdn_cases,
         fmt("VDSR 20 layers, total %zu from the layer table (the stated 672,064 does not follow from it); "
             "RDN concat 448/1280; off-by-one rejected VDSR %d/%d, RDN %d/%d",
             total, vdsr_rejected, vdsr_cases, rdn_rejected, rdn_cases));
}

void identities() {
  std::mt19937 rng(77);
  UpscaleContext ctx;
  ctx.vdsr = VdsrGraph::bind(make_vdsr_weights(0, 0.0f));
  int mismatched = 0;
  for (int i = 0; i < 5; ++i) {
    FrameBuffer f = i % 2 ? oracle::random_frame(rng, 48, 32) : oracle::textured_frame(rng, 48, 32, i);
    if (!(upscale_frame(f, Upscaler::kVdsr, ctx) == upscale_frame(f, Upscaler::kBicubic, ctx))) ++mismatched;
  }
  std::uniform_real_distribution<float> d(0.0f, 1.0f);
  Tensor y(1, 40, 40);
  for (float& v : y.data()) v = d(rng);
  Tensor back = bt601_luma(concat_channels(std::vector<Tensor>{y, y, y}));
  double worst = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i)
    worst = std::max(worst, static_cast<double>(std::abs(back.data()[i] - y.data()[i])) /
                                std::max(1e-30f, std::abs(y.data()[i])));
  const double eps = std::numeric_limits<float>::epsilon();
  report("model-identities", mismatched == 0 && worst <= 2 * eps,
         fmt("zero-weight VDSR vs bicubic: %d/5 frames differ; BT.601 of equal channels rel err %.2e (tol %.2e)",
             mismatched, worst, 2 * eps));
}

void resampling() {
  Image big(3840, 2160, 1.0);
  Image hd = downscale_bicubic(big, ScaleFactor{});
  Image back = upscale_bicubic(hd, ScaleFactor{});
  const bool dims = hd.width == 1920 && hd.height == 1080 && back.width == 3840 && back.height == 2160;

  bool constant = true;
  for (double v : {0.0, 63.0, 200.0, 255.0}) {
    Image img(40, 22, v);
    for (const Image& r : {downscale_bicubic(img, ScaleFactor{}), upscale_bicubic(img, ScaleFactor{})})
      for (double s : r.data) constant &= std::abs(s - v) <= 1e-12 * std::max(1.0, v);
    std::vector<std::uint8_t> plane(40 * 22, static_cast<std::uint8_t>(v));
    for (std::uint8_t s : upscale_plane_bicubic(plane, 40, 22, ScaleFactor{})) constant &= s == plane[0];
  }

  std::mt19937 rng(5);
  std::uniform_real_distribution<double> d(0.0, 255.0);
  double worst = 0.0;
  for (auto [w, h] : {std::pair{32, 18}, std::pair{14, 26}, std::pair{64, 36}}) {
    Image img(w, h);
    for (double& v : img.data) v = d(rng);
    auto diff = [&](const Image& got, const std::vector<double>& ref) {
      for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(got.data[i] - ref[i]));
    };
    diff(downscale_bicubic(img, ScaleFactor{}), oracle::resize(img.data, w, h, w / 2, h / 2));
    diff(upscale_bicubic(img, ScaleFactor{}), oracle::resize(img.data, w, h, 2 * w, 2 * h));
  }
  report("resampling", dims && constant && worst <= kResampleTol,
         fmt("4K->HD->4K dims %s; constant planes %s; separable vs direct max err %.2e (tol %.0e)",
             dims ? "exact" : "WRONG", constant ? "preserved" : "CHANGED", worst, kResampleTol));
}

void psnr_check() {
  std::mt19937 rng(9);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<FrameBuffer> a, b;
    std::vector<std::vector<std::uint8_t>> ya, yb;
    for (int f = 0; f < 3; ++f) {
      a.push_back(oracle::random_frame(rng, 40, 24));
      b.push_back(oracle::textured_frame(rng, 40, 24, f));
      ya.emplace_back(a.back().y().begin(), a.back().y().end());
      yb.emplace_back(b.back().y().begin(), b.back().y().end());
    }
    worst = std::max(worst, std::abs(psnr_y(a, b) - oracle::psnr(ya, yb)));
  }
  VideoSpec s;
  s.width = 64;
  s.height = 64;
  const double delta = psnr_y(FrameBuffer::filled(s, 50), FrameBuffer::filled(s, 66));
  report("psnr", worst <= kPsnrTol && std::abs(delta - kDeltaPsnr) <= kDeltaPsnrTol,
         fmt("oracle max diff %.2e dB (tol %.0e); dY=16 gives %.4f dB (expect %.2f +- %.2f)", worst, kPsnrTol, delta,
             kDeltaPsnr, kDeltaPsnrTol));
}

RdCurve rd_curve(double rate_scale, double offset, double bend) {
  RdCurve c;
  c.metric = "psnr_y";
  for (int i = 0; i < 7; ++i) {
    double r = 300.0 * std::pow(1.7, i) * rate_scale;
    double l = std::log10(r / rate_scale);
    c.points.push_back({r, 21.0 + 6.5 * l - 0.5 * l * l + offset + bend * std::sin(2.0 * l), 20 + i, "x"});
  }
  return c;
}

void bd_check() {
  RdCurve a = rd_curve(1.0, 0.0, 0.0);
  double identity = 0.0, halving = 0.0, anti = 0.0, dense = 0.0;
  for (BdMode m : {BdMode::kPchip, BdMode::kPoly3}) {
    identity = std::max(identity, std::abs(bd_rate(a, a, m).bd_rate_percent));
    halving = std::max(halving, std::abs(bd_rate(a, rd_curve(0.5, 0.0, 0.0), m).bd_rate_percent - 50.0));
    for (auto [scale, off, bend] : {std::tuple{0.8, 0.3, 0.2}, std::tuple{1.3, -0.2, 0.4}, std::tuple{0.6, 0.5, 0.1}}) {
      RdCurve b = rd_curve(scale, off, bend);
      anti = std::max(anti, std::abs(bd_rate(a, b, m).rate_ratio() * bd_rate(b, a, m).rate_ratio() - 1.0));

      std::vector<double> qa, la, qb, lb;
      for (const auto& p : a.points) qa.push_back(p.quality), la.push_back(std::log10(p.rate_kbps));
      for (const auto& p : b.points) qb.push_back(p.quality), lb.push_back(std::log10(p.rate_kbps));
      const double lo = std::max(qa.front(), qb.front()), hi = std::min(qa.back(), qb.back());
      double ref;
      if (m == BdMode::kPchip) {
        oracle::Hermite ha(qa, la), hb(qb, lb);
        ref = oracle::dense_bd([&](double q) { return ha(q); }, [&](double q) { return hb(q); }, lo, hi);
      } else {
        auto ca = oracle::lsq_cubic(qa, la), cb = oracle::lsq_cubic(qb, lb);
        auto ev = [](const std::vector<double>& c, double q) { return c[0] + q * (c[1] + q * (c[2] + q * c[3])); };
        ref = oracle::dense_bd([&](double q) { return ev(ca, q); }, [&](double q) { return ev(cb, q); }, lo, hi);
      }
      dense = std::max(dense, std::abs(bd_rate(a, b, m).bd_rate_percent - ref));
    }
  }
  report("bd-rate", identity == 0.0 && halving <= kHalvingTol && anti <= kAntiSymTol && dense <= kDenseTol,
         fmt("identity %.1e; halving err %.1e (tol %.0e); anti-symmetry %.1e (tol %.0e); dense oracle %.2e %% "
             "(tol %.2f)",
             identity, halving, kHalvingTol, anti, kAntiSymTol, dense, kDenseTol));
}

void critical_check() {
  const double lt = std::log10(kCriticalTarget);
  RdCurve conv, scaled;
  for (int i = 0; i <= 10; ++i) {
    double r = 700.0 * std::pow(1.5, i);
    conv.points.push_back({r, 18.0 + 7.0 * std::log10(r), 30 + 2 * i, "conventional"});
    double rs = r * 0.93;
    scaled.points.push_back({rs, 18.0 + 7.0 * std::log10(rs) + 0.8 * (lt - std::log10(rs)), 20 + 2 * i, "scaled"});
  }
  auto cb = critical_bitrate(conv, scaled);
  const bool ok = cb && std::abs(*cb - kCriticalTarget) <= kCriticalTol;
  report("critical-bitrate", ok,
         cb ? fmt("crossing at %.3f kbit/s (expect %.0f +- %.1f)", *cb, kCriticalTarget, kCriticalTol)
            : std::string("no crossing found"));
}

void end_to_end() {
  oracle::TempDir dir;
  std::mt19937 rng(31);
  std::vector<FrameBuffer> frames;
  for (int t = 0; t < 3; ++t) frames.push_back(oracle::textured_frame(rng, 128, 128, t));
  write_sequence(dir / "clip.y4m", frames[0].spec(), frames, Container::kY4m);
  const std::string cfg = R"({
    "version": 1,
    "sequences": [{"name": "synthetic", "path": "clip.y4m", "frames": 3}],
    "upscalers": ["bicubic", "backproj", "vdsr", "rdn"],
    "codec": {"type": "mock"},
    "weights": {"vdsr": "random:1", "rdn": "zero"},
    "output_dir": "out",
    "jobs": 0
  })";
  auto start = std::chrono::steady_clock::now();
  ExperimentConfig config = parse_config(cfg, dir.path.string());
  ExperimentReport rep = run_experiment(config, cfg);
  const double secs = seconds_since(start);

  ParsedRdCsv csv = parse_rd_csv(rep.rd_csv());
  std::set<std::string> cells;
  for (const auto& c : csv.curves)
    if (c.metric == kMetricPsnr)
      for (const auto& p : c.points)
        if (std::isfinite(p.rate_kbps) && p.rate_kbps > 0 && !std::isnan(p.quality))
          cells.insert(c.upscaler + "|" + std::to_string(p.qp));
  const std::size_t expected = 11 + 4 * 11;

  std::map<std::string, std::map<int, double>> rates;
  for (const auto& c : csv.curves)
    if (c.metric == kMetricPsnr)
      for (const auto& p : c.points) rates[c.upscaler][p.qp] = p.rate_kbps;
  bool shared = rates["bicubic"].size() == 11;
  for (const auto& [qp, r] : rates["bicubic"]) shared &= rates["vdsr"][qp] == r && rates["rdn"][qp] == r;

  report("end-to-end", secs < kE2eSeconds && rep.failures.empty() && cells.size() == expected && shared,
         fmt("%.1f s (limit %.0f s); %zu/%zu RD cells, %zu failures; bicubic/vdsr/rdn rates %s", secs, kE2eSeconds,
             cells.size(), expected, rep.failures.size(), shared ? "identical per QP" : "DIFFER"));
}

void mock_codec_check() {
  std::mt19937 rng(64);
  int rate_violations = 0, psnr_violations = 0;
  double worst_qp4 = INFINITY;
  for (int f = 0; f < 20; ++f) {
    std::vector<FrameBuffer> frame{f % 2 ? oracle::random_frame(rng, 64, 64) : oracle::textured_frame(rng, 64, 64, f)};
    double prev_rate = INFINITY, prev_psnr = INFINITY;
    for (int qp = 0; qp <= 51; ++qp) {
      CodecRun run = mock_codec(frame, qp);
      const double rate = bitrate_kbps(run, 30.0, 1), p = psnr_y(frame, run.decoded);
      if (rate > prev_rate) ++rate_violations;
      if (p > prev_psnr) ++psnr_violations;
      if (qp == 4) worst_qp4 = std::min(worst_qp4, p);
      prev_rate = rate;
      prev_psnr = p;
    }
  }
  report("mock-codec", rate_violations == 0 && psnr_violations == 0 && worst_qp4 > kQp4Psnr,
         fmt("20 frames x QP 0..51: %d rate and %d PSNR increases; worst QP 4 PSNR %.2f dB (need > %.0f)",
             rate_violations, psnr_violations, worst_qp4, kQp4Psnr));
}

// Runs only when a compatible checkpoint and a natural test clip are supplied.
void checkpoint_check() {
  const char* weights = std::getenv("SCALECHAIN_VDSR_WEIGHTS");
  const char* image = std::getenv("SCALECHAIN_NATURAL_Y4M");
  if (!weights || !image) {
    std::printf("SKIP %-22s set SCALECHAIN_VDSR_WEIGHTS and SCALECHAIN_NATURAL_Y4M to run\n", "vdsr-checkpoint");
    return;
  }
  Sequence seq = read_sequence(image, std::nullopt, 1);
  const FrameBuffer& hr = seq.frames.at(0);
  FrameBuffer lr = downscale_frame(hr, ScaleFactor{});
  UpscaleContext ctx;
  ctx.vdsr = VdsrGraph::bind(load_weights(weights));
  if (const char* s = std::getenv("SCALECHAIN_INPUT_SCALE")) ctx.vdsr->input_scale = std::strtof(s, nullptr);
  const double bic = psnr_y(hr, upscale_frame(lr, Upscaler::kBicubic, ctx));
  const double vdsr = psnr_y(hr, upscale_frame(lr, Upscaler::kVdsr, ctx));
  report("vdsr-checkpoint", vdsr >= bic, fmt("VDSR %.3f dB vs bicubic %.3f dB", vdsr, bic));
}

}  // namespace

int main() {
  guarded("conv-oracle", convolution_oracle);
  guarded("graph-fidelity", graph_fidelity);
  guarded("model-identities", identities);
  guarded("resampling", resampling);
  guarded("psnr", psnr_check);
  guarded("bd-rate", bd_check);
  guarded("critical-bitrate", critical_check);
  guarded("end-to-end", end_to_end);
  guarded("mock-codec", mock_codec_check);
  guarded("vdsr-checkpoint", checkpoint_check);
  std::printf("%s: %d criterion(s) failed\n", failures ? "FAILED" : "OK", failures);
  return failures ? 1 : 0;
}
