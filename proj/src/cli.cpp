#include "scalechain/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "scalechain/codec.hpp"
#include "scalechain/error.hpp"
#include "scalechain/experiment.hpp"
#include "scalechain/frame_io.hpp"
#include "scalechain/metrics.hpp"
#include "scalechain/parallel.hpp"
#include "scalechain/resample.hpp"
#include "scalechain/sr_models.hpp"
#include "scalechain/weights.hpp"

namespace scalechain {

namespace fs = std::filesystem;

namespace {

struct InputOptions {
  int width = 0;
  int height = 0;
  std::string fps;
  std::size_t frames = 0;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--width", width, "Width of headerless .yuv input");
    cmd->add_option("--height", height, "Height of headerless .yuv input");
    cmd->add_option("--fps", fps, "Frame rate num/den for .yuv input (default 30/1)");
    cmd->add_option("--frames", frames, "Read at most this many frames (0 = all)");
  }

  std::optional<VideoSpec> raw_spec() const {
    if (width == 0 && height == 0) return std::nullopt;
    VideoSpec s;
    s.width = width;
    s.height = height;
    if (!fps.empty()) {
      char sep = 0;
      std::istringstream in(fps);
      in >> s.fps_num;
      if (in >> sep) in >> s.fps_den;
      if (s.fps_num <= 0 || s.fps_den <= 0) fail(ErrorCode::kInvalidArgument, "bad --fps '" + fps + "'");
    }
    return s;
  }
};

Sequence load_input(const std::string& path, const InputOptions& in) {
  Sequence seq = read_sequence(path, in.raw_spec(), in.frames);
  if (seq.frames.empty()) fail(ErrorCode::kTruncated, "no frames in " + path);
  return seq;
}

Container container_for(const std::string& path) {
  return fs::path(path).extension() == ".yuv" ? Container::kRaw : Container::kY4m;
}

void save_output(const std::string& path, const VideoSpec& spec, std::span<const FrameBuffer> frames) {
  if (!fs::path(path).parent_path().empty()) fs::create_directories(fs::path(path).parent_path());
  write_sequence(path, spec, frames, container_for(path));
}

struct ResampleOptions {
  int scale = 2;
  double kernel_a = -0.5;
  bool antialias = true;
  double gauss_sigma = 1.0;
  int bp_iters = 5;

  void add_to(CLI::App* cmd, bool upscaling) {
    cmd->add_option("--scale", scale, "Scale factor (only 2 is supported)")->capture_default_str();
    cmd->add_option("--kernel-a", kernel_a, "Cubic kernel parameter a")->capture_default_str();
    cmd->add_option("--antialias", antialias, "Widen the kernel when downscaling (true/false)")->capture_default_str();
    if (upscaling) {
      cmd->add_option("--bp-iters", bp_iters, "Back-projection iterations")->capture_default_str();
    } else {
      cmd->add_option("--gauss-sigma", gauss_sigma, "Sigma of the 5x5 Gaussian prefilter")->capture_default_str();
    }
  }

  KernelSpec kernel() const { return {kernel_a, antialias}; }
};

struct ModelOptions {
  std::string weights = "zero";
  float input_scale = 1.0f;
  int tile = 0;
  int halo = -1;
  bool rgb = false;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--weights", weights, "Weight file, 'zero' or 'random:SEED'")->capture_default_str();
    cmd->add_option("--input-scale", input_scale, "Network input scale (255 for [0,255] checkpoints)")
        ->capture_default_str();
    cmd->add_option("--tile", tile, "Tile size in low-resolution pixels (0 = whole frame)")->capture_default_str();
    cmd->add_option("--halo", halo, "Tile halo (negative = receptive reach)")->capture_default_str();
    cmd->add_flag("--rdn-rgb", rgb, "Feed RDN full RGB instead of the replicated luma");
  }
};

UpscaleContext build_context(Upscaler method, const ResampleOptions& r, const ModelOptions& m) {
  UpscaleContext ctx;
  ctx.kernel = r.kernel();
  ctx.bp_iterations = r.bp_iters;
  ctx.tiles = {m.tile, m.halo};
  ctx.rdn_input = m.rgb ? RdnInputMode::kRgb : RdnInputMode::kReplicateY;
  if (method == Upscaler::kVdsr) {
    ctx.vdsr = VdsrGraph::bind(resolve_weights(m.weights, false));
    ctx.vdsr->input_scale = m.input_scale;
  } else if (method == Upscaler::kRdn) {
    ctx.rdn = RdnGraph::bind(resolve_weights(m.weights, true));
    ctx.rdn->input_scale = m.input_scale;
  }
  return ctx;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Either an RD CSV (first curve of `metric`) or plain "rate_kbps,quality" rows.
RdCurve load_curve(const std::string& path, const std::string& metric) {
  std::string text = read_text(path);
  if (text.rfind("sequence,", 0) == 0) {
    auto parsed = parse_rd_csv(text);
    for (auto& c : parsed.curves)
      if (c.metric == metric) return c;
    fail(ErrorCode::kTooFewPoints, "no '" + metric + "' curve in " + path);
  }
  RdCurve curve;
  curve.metric = metric;
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto comma = line.find(',');
    if (comma == std::string::npos) fail(ErrorCode::kMalformedHeader, path + ":" + std::to_string(n) + ": expected rate,quality");
    std::string a = line.substr(0, comma), b = line.substr(comma + 1);
    try {
      curve.points.push_back({std::stod(a), b == "inf" ? kLosslessPsnr : std::stod(b), 0, ""});
    } catch (const std::exception&) {
      if (n == 1) continue;  // header row
      fail(ErrorCode::kMalformedHeader, path + ":" + std::to_string(n) + ": bad number");
    }
  }
  return curve;
}

std::string format_db(double v) {
  if (std::isinf(v)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string format_percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", v);
  std::string s = buf;
  if (s == "-0.00%") s = "0.00%";
  return s;
}

int exit_code_for(const Error& e) {
  switch (category_of(e.code())) {
    case ErrorCategory::kUsage: return kExitUsage;
    case ErrorCategory::kData: return kExitData;
    case ErrorCategory::kExternal: return kExitExternal;
  }
  return kExitData;
}

}  // namespace

int dispatch(int argc, char** argv) {
  CLI::App app{"Resolution-adaptive video coding harness", "scalechain"};
  app.set_version_flag("--version", std::string("scalechain ") + SCALECHAIN_VERSION + " (weight format v" +
                                        std::to_string(kWeightFormatVersion) + ")");
  app.require_subcommand(1);
  int jobs = 0;
  app.add_option("--jobs,-j", jobs, "Worker threads (0 = hardware concurrency)");

  // downscale
  auto* down = app.add_subcommand("downscale", "Bicubic 2x downscale of a Y4M/YUV sequence");
  std::string down_in, down_out;
  InputOptions down_io;
  ResampleOptions down_rs;
  bool down_prefilter = false;
  down->add_option("input", down_in, "Input .y4m or .yuv")->required();
  down->add_option("output", down_out, "Output .y4m or .yuv")->required();
  down->add_flag("--prefilter", down_prefilter, "Apply the 5x5 Gaussian before downscaling");
  down_io.add_to(down);
  down_rs.add_to(down, false);

  // upscale
  auto* up = app.add_subcommand("upscale", "2x upscale with bicubic, backproj, vdsr or rdn");
  std::string up_in, up_out, up_method = "bicubic";
  InputOptions up_io;
  ResampleOptions up_rs;
  ModelOptions up_model;
  up->add_option("input", up_in, "Input .y4m or .yuv")->required();
  up->add_option("output", up_out, "Output .y4m or .yuv")->required();
  up->add_option("--method", up_method, "bicubic | backproj | vdsr | rdn")->capture_default_str();
  up_io.add_to(up);
  up_rs.add_to(up, true);
  up_model.add_to(up);

  // infer
  auto* infer = app.add_subcommand("infer", "Run a super-resolution network on the luma plane");
  std::string inf_in, inf_out, inf_model = "vdsr", inf_ref;
  InputOptions inf_io;
  ModelOptions inf_opts;
  bool inf_manifest = false;
  infer->add_option("input", inf_in, "Low-resolution .y4m or .yuv")->required();
  infer->add_option("output", inf_out, "Output .y4m or .yuv");
  infer->add_option("--model", inf_model, "vdsr | rdn")->capture_default_str();
  infer->add_option("--reference", inf_ref, "High-resolution reference; prints Y-PSNR of the result");
  infer->add_flag("--manifest", inf_manifest, "Print the bound weight manifest and exit");
  inf_io.add_to(infer);
  inf_opts.add_to(infer);

  // psnr
  auto* psnr = app.add_subcommand("psnr", "Y-PSNR between two sequences");
  std::string ps_ref, ps_test;
  InputOptions ps_io;
  bool ps_per_frame = false;
  psnr->add_option("reference", ps_ref)->required();
  psnr->add_option("test", ps_test)->required();
  psnr->add_flag("--per-frame", ps_per_frame, "Also print one line per frame");
  ps_io.add_to(psnr);

  // bdrate
  auto* bd = app.add_subcommand("bdrate", "BD-rate saving of a test curve against an anchor");
  std::string bd_anchor, bd_test, bd_points, bd_mode = "pchip", bd_metric = std::string(kMetricPsnr);
  bd->add_option("--anchor", bd_anchor, "Anchor curve CSV");
  bd->add_option("--test", bd_test, "Test curve CSV");
  bd->add_option("--points", bd_points, "rd_points.csv; prints the full BD table");
  bd->add_option("--mode", bd_mode, "pchip | poly3")->capture_default_str();
  bd->add_option("--metric", bd_metric, "Metric column to use from RD CSVs")->capture_default_str();

  // codec-run
  auto* cr = app.add_subcommand("codec-run", "Encode and decode a sequence at one QP");
  std::string cr_in, cr_out, cr_codec = "mock", cr_enc, cr_dec, cr_suffix = ".bin", cr_work;
  InputOptions cr_io;
  int cr_qp = 32;
  bool cr_y4m = false, cr_keep = false;
  cr->add_option("input", cr_in)->required();
  cr->add_option("--qp", cr_qp)->required();
  cr->add_option("--output", cr_out, "Write decoded frames here");
  cr->add_option("--codec", cr_codec, "mock | external")->capture_default_str();
  cr->add_option("--encode", cr_enc, "Encoder command template");
  cr->add_option("--decode", cr_dec, "Decoder command template");
  cr->add_option("--bitstream-suffix", cr_suffix)->capture_default_str();
  cr->add_flag("--input-y4m", cr_y4m, "Hand the encoder Y4M instead of raw YUV");
  cr->add_flag("--keep", cr_keep, "Keep scratch files");
  cr->add_option("--work-dir", cr_work, "Parent directory for scratch files");
  cr_io.add_to(cr);

  // experiment
  auto* ex = app.add_subcommand("experiment", "Run both coding chains from a JSON config");
  std::string ex_config, ex_out;
  ex->add_option("config", ex_config)->required();
  ex->add_option("--output-dir", ex_out, "Override output_dir from the config");

  // plot
  auto* pl = app.add_subcommand("plot", "Render RD plots from rd_points.csv");
  std::string pl_points, pl_out = ".";
  pl->add_option("points", pl_points)->required();
  pl->add_option("--output-dir", pl_out, "Plots go to <dir>/plots")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e, std::cerr, std::cerr);
    if (argc <= 1 || e.get_name() == "ExtrasError" || e.get_name() == "RequiredError") std::cerr << app.help();
    return kExitUsage;
  }

  try {
    set_max_threads(jobs);

    if (*down) {
      Sequence seq = load_input(down_in, down_io);
      DownscaleOptions opts;
      opts.kernel = down_rs.kernel();
      if (down_prefilter) opts.prefilter_sigma = down_rs.gauss_sigma;
      ScaleFactor s(down_rs.scale);
      std::vector<FrameBuffer> out;
      for (const auto& f : seq.frames) out.push_back(downscale_frame(f, s, opts));
      save_output(down_out, out.front().spec(), out);
      std::cout << down_out << "\n";
    } else if (*up) {
      Upscaler method = parse_upscaler(up_method);
      Sequence seq = load_input(up_in, up_io);
      UpscaleContext ctx = build_context(method, up_rs, up_model);
      ScaleFactor s(up_rs.scale);
      std::vector<FrameBuffer> out;
      for (const auto& f : seq.frames) out.push_back(upscale_frame(f, method, ctx, s));
      save_output(up_out, out.front().spec(), out);
      std::cout << up_out << "\n";
    } else if (*infer) {
      Upscaler method = parse_upscaler(inf_model);
      if (!needs_weights(method)) fail(ErrorCode::kInvalidArgument, "--model must be vdsr or rdn");
      if (inf_manifest) {
        ModelWeights w = resolve_weights(inf_opts.weights, method == Upscaler::kRdn);
        if (method == Upscaler::kVdsr) {
          VdsrGraph::bind(w);
        } else {
          RdnGraph::bind(w);
        }
        std::cout << w.manifest();
        return kExitOk;
      }
      if (inf_out.empty()) fail(ErrorCode::kInvalidArgument, "infer needs an output path");
      Sequence seq = load_input(inf_in, inf_io);
      UpscaleContext ctx = build_context(method, ResampleOptions{}, inf_opts);
      auto t0 = std::chrono::steady_clock::now();
      std::vector<FrameBuffer> out;
      for (const auto& f : seq.frames) out.push_back(upscale_frame(f, method, ctx));
      double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::cerr << "inference: " << out.size() << " frame(s) in " << secs << " s\n";
      save_output(inf_out, out.front().spec(), out);
      if (!inf_ref.empty()) {
        Sequence ref = read_sequence(inf_ref, std::nullopt, out.size());
        std::cout << format_db(psnr_y(ref.frames, out)) << "\n";
      } else {
        std::cout << inf_out << "\n";
      }
    } else if (*psnr) {
      Sequence ref = load_input(ps_ref, ps_io);
      Sequence test = load_input(ps_test, ps_io);
      if (ref.frames.size() != test.frames.size())
        fail(ErrorCode::kShapeMismatch, "frame counts differ: " + std::to_string(ref.frames.size()) + " vs " +
                                            std::to_string(test.frames.size()));
      double v = psnr_y(ref.frames, test.frames);
      if (ps_per_frame) {
        for (std::size_t i = 0; i < ref.frames.size(); ++i)
          std::cout << i << "," << format_db(psnr_y(ref.frames[i], test.frames[i])) << "\n";
      }
      std::cout << format_db(v) << "\n";
    } else if (*bd) {
      BdMode mode = parse_bd_mode(bd_mode);
      if (!bd_points.empty()) {
        auto parsed = parse_rd_csv(read_text(bd_points));
        auto windows = default_qp_windows();
        std::cout << format_bd_csv(compute_bd_table(parsed.curves, mode, windows), mode);
      } else {
        if (bd_anchor.empty() || bd_test.empty())
          fail(ErrorCode::kInvalidArgument, "bdrate needs --anchor and --test, or --points");
        BdResult r = bd_rate(load_curve(bd_anchor, bd_metric), load_curve(bd_test, bd_metric), mode);
        std::cout << format_percent(r.bd_rate_percent) << "\n";
      }
    } else if (*cr) {
      Sequence seq = load_input(cr_in, cr_io);
      CodecChoice choice;
      if (cr_codec == "external") {
        choice.kind = CodecChoice::Kind::kExternal;
        choice.tmpl = {cr_enc, cr_dec, cr_suffix, cr_y4m};
        choice.keep = cr_keep;
        if (cr_enc.empty() || cr_dec.empty())
          fail(ErrorCode::kInvalidArgument, "--codec external needs --encode and --decode");
      } else if (cr_codec != "mock") {
        fail(ErrorCode::kInvalidArgument, "--codec must be mock or external");
      }
      auto codec = make_codec(choice, cr_work);
      CodecRun run = codec->run(seq.frames, cr_qp);
      if (!run.encode_command.empty()) std::cerr << "encode: " << run.encode_command << "\n";
      if (!run.decode_command.empty()) std::cerr << "decode: " << run.decode_command << "\n";
      if (!cr_out.empty()) save_output(cr_out, run.spec, run.decoded);
      std::cout << "qp,bytes,rate_kbps,psnr_y\n"
                << cr_qp << "," << run.bitstream_bytes << "," << bitrate_kbps(run, seq.spec.fps(), seq.frames.size())
                << "," << format_db(psnr_y(seq.frames, run.decoded)) << "\n";
    } else if (*ex) {
      std::string text = read_text(ex_config);
      std::string base = fs::path(ex_config).parent_path().string();
      ExperimentConfig config = parse_config(text, base.empty() ? "." : base);
      if (!ex_out.empty()) config.output_dir = ex_out;
      if (jobs > 0) config.jobs = jobs;
      ExperimentReport report = run_experiment(config, text);
      std::cerr << report.text();
      std::cout << (fs::path(config.output_dir) / "rd_points.csv").string() << "\n";
      if (!report.failures.empty()) return kExitData;
    } else if (*pl) {
      auto parsed = parse_rd_csv(read_text(pl_points));
      for (const auto& p : write_plots(parsed.curves, pl_out)) std::cout << p << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "scalechain: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "scalechain: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

}  // namespace scalechain
