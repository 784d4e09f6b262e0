#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "scalechain/error.hpp"
#include "scalechain/experiment.hpp"

using namespace scalechain;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_clip(const std::string& path, int w, int h, int n, unsigned seed = 3) {
  std::mt19937 rng(seed);
  std::vector<FrameBuffer> frames;
  for (int t = 0; t < n; ++t) frames.push_back(oracle::textured_frame(rng, w, h, t));
  write_sequence(path, frames.front().spec(), frames, Container::kY4m);
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::kInvalidArgument;
}

const RdCurve* find(const std::vector<RdCurve>& curves, const std::string& up, const std::string& metric = "psnr_y") {
  for (const auto& c : curves)
    if (c.upscaler == up && c.metric == metric) return &c;
  return nullptr;
}

RdCurve make_curve(const std::string& seq, const std::string& up, double rate_scale, std::vector<int> qps) {
  RdCurve c;
  c.sequence = seq;
  c.upscaler = up;
  c.metric = "psnr_y";
  const bool conv = up == "none";
  for (std::size_t i = 0; i < qps.size(); ++i) {
    double r = 5000.0 / std::pow(1.3, static_cast<double>(i)) * rate_scale;
    c.points.push_back({r, 20.0 + 5.0 * std::log10(r / rate_scale), qps[i], conv ? "conventional" : "scaled"});
  }
  return c;
}

const char* kSmallConfig = R"({
  "version": 1,
  "sequences": [{"name": "clip", "path": "clip.y4m", "frames": 2}],
  "qp_conv": [30, 36, 42, 48],
  "qp_scaled": [22, 28, 34, 40],
  "upscalers": ["bicubic", "backproj", "vdsr"],
  "codec": {"type": "mock"},
  "weights": {"vdsr": "zero"},
  "output_dir": "out",
  "jobs": 2
})";

}  // namespace

TEST_SUITE("experiment") {
  TEST_CASE("config parsing and relative paths") {
    ExperimentConfig c = parse_config(kSmallConfig, "/data/exp");
    CHECK(c.sequences.size() == 1);
    CHECK(c.sequences[0].path == "/data/exp/clip.y4m");
    CHECK(c.sequences[0].frames == 2);
    CHECK(c.output_dir == "/data/exp/out");
    CHECK(c.upscalers.size() == 3);
    CHECK(c.vdsr_weights == "zero");
    CHECK(c.jobs == 2);

    ExperimentConfig d = parse_config(R"({"sequences":[{"path":"/v/a.yuv","width":64,"height":32,"fps":"30000/1001"}]})");
    REQUIRE(d.sequences[0].raw_spec.has_value());
    CHECK(d.sequences[0].raw_spec->width == 64);
    CHECK(d.sequences[0].raw_spec->fps_den == 1001);
    CHECK(d.sequences[0].name == "a");
    CHECK(d.qps.qp_conv.size() == 11);
    CHECK(d.upscalers.size() == 4);
    CHECK(d.canonical_json() == parse_config(d.canonical_json()).canonical_json());
  }

  TEST_CASE("config errors") {
    auto err = [](const std::string& text) { return code_of([&] { parse_config(text).validate(); }); };
    CHECK(err("{") == ErrorCode::kConfig);
    CHECK(err(R"({"sequences":[]})") == ErrorCode::kConfig);
    CHECK(err(R"({"sequences":[{"path":"a.y4m"}],"colour":1})") == ErrorCode::kConfig);
    CHECK(err(R"({"sequences":[{"path":"a.y4m","fraems":3}]})") == ErrorCode::kConfig);
    CHECK(err(R"({"sequences":[{"path":"a.y4m"}],"codec":{"type":"x265"}})") == ErrorCode::kConfig);
    CHECK(err(R"({"sequences":[{"path":"a.y4m"}],"upscalers":["lanczos"]})") == ErrorCode::kConfig);
    CHECK(err(R"({"sequences":[{"path":"a.y4m"}],"qp_conv":[40,30]})") == ErrorCode::kConfig);
    CHECK(err(R"({"sequences":[{"path":"a.y4m"}],"version":2})") == ErrorCode::kConfig);
    CHECK(err(R"({"sequences":[{"path":"a.y4m"}],"bd_mode":"akima"})") == ErrorCode::kConfig);
    CHECK(err(R"({"sequences":[{"path":"a.y4m"}],"inference":{"rdn_input":"bgr"}})") == ErrorCode::kConfig);
  }

  TEST_CASE("weight sources") {
    ModelWeights z = resolve_weights("zero", false);
    CHECK(z.size() == 20);
    ModelWeights r1 = resolve_weights("random:5", false), r2 = resolve_weights("random:5", false);
    CHECK(r1.serialize() == r2.serialize());
    CHECK(resolve_weights("random:6:0.5", false).serialize() != r1.serialize());
    CHECK_THROWS_AS(resolve_weights("/nonexistent/weights.scw", true), Error);
  }

  TEST_CASE("codec cache shares runs and persists them") {
    oracle::TempDir dir;
    std::mt19937 rng(1);
    std::vector<FrameBuffer> frames{oracle::textured_frame(rng, 32, 32, 0)};
    MockCodec codec;
    {
      CodecCache cache(dir / "cache");
      auto a = cache.get(codec, frames, 30);
      auto b = cache.get(codec, frames, 30);
      CHECK(a.get() == b.get());
      cache.get(codec, frames, 34);
      CHECK(cache.codec_invocations() == 2);
    }
    CodecCache again(dir / "cache");
    auto c = again.get(codec, frames, 30);
    CHECK(again.codec_invocations() == 0);
    CHECK(again.disk_hits() == 1);
    CHECK(c->decoded[0] == mock_codec(frames, 30).decoded[0]);

    // Corrupt records are recomputed, not trusted.
    for (const auto& e : fs::directory_iterator(dir.path / "cache")) {
      std::fstream f(e.path(), std::ios::in | std::ios::out | std::ios::binary);
      f.seekp(20);
      f.put('\x7f');
    }
    CodecCache third(dir / "cache");
    auto d = third.get(codec, frames, 30);
    CHECK(third.codec_invocations() == 1);
    CHECK(d->decoded[0] == c->decoded[0]);
  }

  TEST_CASE("end-to-end run on a small clip") {
    oracle::TempDir dir;
    write_clip(dir / "clip.y4m", 64, 48, 2);
    ExperimentConfig config = parse_config(kSmallConfig, dir.path.string());
    ExperimentReport rep = run_experiment(config, kSmallConfig);
    CHECK(rep.failures.empty());
    CHECK(rep.expected_cells == 4 + 3 * 4);
    CHECK(rep.present_cells == rep.expected_cells);
    for (const char* f : {"rd_points.csv", "bd_table.csv", "report.txt", "plots/clip_psnr_y.svg"})
      CHECK(fs::exists(fs::path(config.output_dir) / f));

    const RdCurve* bic = find(rep.curves, "bicubic");
    const RdCurve* vdsr = find(rep.curves, "vdsr");
    const RdCurve* bp = find(rep.curves, "backproj");
    REQUIRE(bic);
    REQUIRE(vdsr);
    REQUIRE(bp);
    bool bp_differs = false;
    for (std::size_t i = 0; i < bic->points.size(); ++i) {
      // Same low-resolution input, same codec runs.
      CHECK(bic->points[i].rate_kbps == vdsr->points[i].rate_kbps);
      // Zero weights reduce VDSR to its bicubic path.
      CHECK(bic->points[i].quality == vdsr->points[i].quality);
      bp_differs |= bp->points[i].rate_kbps != bic->points[i].rate_kbps;
    }
    CHECK(bp_differs);
    // Conventional and three scaled upscalers, two of which share input.
    CHECK(rep.provenance.codec_invocations == 4 + 4 + 4);

    std::string text = rep.text();
    CHECK(text.find("back-projection stand-in") != std::string::npos);
    CHECK(text.find(rep.provenance.config_hash) != std::string::npos);

    const std::string first = slurp(fs::path(config.output_dir) / "rd_points.csv");
    ExperimentReport again = run_experiment(config, kSmallConfig);
    CHECK(again.provenance.codec_invocations == 0);
    CHECK(again.provenance.cache_hits == 12);
    CHECK(slurp(fs::path(config.output_dir) / "rd_points.csv") == first);

    ParsedRdCsv parsed = parse_rd_csv(first);
    auto windows = default_qp_windows();
    auto rows = compute_bd_table(parsed.curves, BdMode::kPchip, windows);
    CHECK(format_bd_csv(rows, BdMode::kPchip) == rep.bd_csv());
  }

  TEST_CASE("a failing cell is recorded and the rest still runs") {
    oracle::TempDir dir;
    write_clip(dir / "clip.y4m", 32, 32, 1);
    std::string cfg = R"({"sequences":[{"name":"clip","path":"clip.y4m","frames":1}],
      "qp_conv":[30,40],"qp_scaled":[30,55],"upscalers":["bicubic"],"output_dir":"out"})";
    ExperimentReport rep = run_experiment(parse_config(cfg, dir.path.string()), cfg);
    REQUIRE(rep.failures.size() == 1);
    CHECK(rep.failures[0].qp == 55);
    CHECK(rep.failures[0].branch == "scaled");
    CHECK(rep.present_cells == rep.expected_cells);
    const std::string csv = rep.rd_csv();
    CHECK(csv.find("FAILED") != std::string::npos);
    ParsedRdCsv back = parse_rd_csv(csv);
    CHECK(back.failures.size() == 1);
  }

  TEST_CASE("BD table sign, averages and windows") {
    std::vector<int> conv_qps{28, 30, 32, 34, 36, 38, 40, 42, 44, 46, 48};
    std::vector<int> scaled_qps{20, 22, 24, 26, 28, 30, 32, 34, 36, 38, 40};
    std::vector<RdCurve> curves{make_curve("s1", "none", 1.0, conv_qps), make_curve("s1", "bicubic", 0.8, scaled_qps)};
    auto windows = default_qp_windows();
    auto rows = compute_bd_table(curves, BdMode::kPchip, windows);
    REQUIRE(rows.size() == 6);
    for (const auto& r : rows) {
      // A scaled chain needing 80 % of the rate saves 20 %.
      CHECK(r.value == doctest::Approx(20.0).epsilon(1e-9));
      CHECK_FALSE(r.modes_disagree);
    }
    CHECK(rows[1].sequence == kAverageRow);
    CHECK(rows[1].value == rows[0].value);

    curves.push_back(make_curve("s2", "none", 1.0, conv_qps));
    curves.push_back(make_curve("s2", "bicubic", 1.25, scaled_qps));
    rows = compute_bd_table(curves, BdMode::kPoly3, windows);
    for (const auto& r : rows)
      if (r.sequence == "s2") CHECK(r.value == doctest::Approx(-25.0).epsilon(1e-9));
    for (const auto& r : rows)
      if (r.sequence == kAverageRow) CHECK(r.value == doctest::Approx(-2.5).epsilon(1e-9));
  }

  TEST_CASE("RD CSV round trip keeps lossless points") {
    RdCurve c = make_curve("s", "vdsr", 1.0, {20, 22, 24, 26});
    c.points[0].quality = kLosslessPsnr;
    std::vector<RdCurve> curves{c};
    ParsedRdCsv back = parse_rd_csv(format_rd_csv(curves));
    REQUIRE(back.curves.size() == 1);
    CHECK(std::isinf(back.curves[0].points[0].quality));
    CHECK(back.curves[0].points[2].rate_kbps == doctest::Approx(c.points[2].rate_kbps).epsilon(1e-9));
    CHECK_THROWS_AS(parse_rd_csv("a,b\n1,2\n"), Error);
  }
}
