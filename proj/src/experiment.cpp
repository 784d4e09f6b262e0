#include "scalechain/experiment.hpp"

#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <future>
#include <set>
#include <sstream>

#include <json.hpp>

#include "scalechain/error.hpp"
#include "scalechain/parallel.hpp"
#include "scalechain/weights.hpp"

namespace scalechain {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) fail(ErrorCode::kConfig, "unknown key '" + key + "' in " + where);
  }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, std::string("bad value for '") + key + "': " + e.what());
  }
}

std::string resolve_path(const std::string& p, const std::string& base) {
  if (p.empty() || fs::path(p).is_absolute()) return p;
  return (fs::path(base) / p).lexically_normal().string();
}

std::pair<int, int> parse_fps(const json& v) {
  if (v.is_number_integer()) return {v.get<int>(), 1};
  if (v.is_string()) {
    std::string s = v.get<std::string>();
    int num = 0, den = 1;
    char sep = 0;
    std::istringstream in(s);
    in >> num;
    if (in >> sep) {
      if (sep != '/' && sep != ':') fail(ErrorCode::kConfig, "bad fps '" + s + "'");
      in >> den;
    }
    if (num <= 0 || den <= 0) fail(ErrorCode::kConfig, "bad fps '" + s + "'");
    return {num, den};
  }
  fail(ErrorCode::kConfig, "fps must be an integer or \"num/den\"");
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t hash_string(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ULL) {
  return fnv1a64({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}, seed);
}

bool is_weight_spec_synthetic(const std::string& s) { return s == "zero" || s.rfind("random:", 0) == 0; }

}  // namespace

void ExperimentConfig::validate() const {
  if (version != kConfigVersion) fail(ErrorCode::kConfig, "unsupported config version " + std::to_string(version));
  if (sequences.empty()) fail(ErrorCode::kConfig, "no sequences configured");
  if (upscalers.empty()) fail(ErrorCode::kConfig, "at least one upscaler is required");
  for (const auto& s : sequences) {
    if (s.frames < 1) fail(ErrorCode::kConfig, "sequence '" + s.name + "': frames must be >= 1");
    if (!fs::exists(s.path)) fail(ErrorCode::kConfig, "sequence file not found: " + s.path);
  }
  try {
    qps.validate();
  } catch (const Error& e) {
    fail(ErrorCode::kConfig, e.what());
  }
  for (Upscaler u : upscalers) {
    if (!needs_weights(u)) continue;
    const std::string& w = u == Upscaler::kVdsr ? vdsr_weights : rdn_weights;
    if (w.empty()) fail(ErrorCode::kConfig, std::string(to_string(u)) + " needs a weights entry");
    if (!is_weight_spec_synthetic(w) && !fs::exists(w)) fail(ErrorCode::kConfig, "weights not found: " + w);
  }
  if (codec.kind == CodecChoice::Kind::kExternal && (codec.tmpl.encode.empty() || codec.tmpl.decode.empty()))
    fail(ErrorCode::kConfig, "external codec needs encode and decode templates");
  if (bp_iterations < 0) fail(ErrorCode::kConfig, "bp_iters must be >= 0");
  if (!(gauss_sigma > 0.0)) fail(ErrorCode::kConfig, "gauss_sigma must be > 0");
  if (jobs < 0) fail(ErrorCode::kConfig, "jobs must be >= 0");
}

std::string ExperimentConfig::canonical_json() const {
  json j;
  j["version"] = version;
  json seqs = json::array();
  for (const auto& s : sequences) {
    json e{{"name", s.name}, {"path", s.path}, {"frames", s.frames}};
    if (s.raw_spec) {
      e["width"] = s.raw_spec->width;
      e["height"] = s.raw_spec->height;
    }
    if (s.fps_override) e["fps"] = std::to_string(s.fps_override->first) + "/" + std::to_string(s.fps_override->second);
    seqs.push_back(e);
  }
  j["sequences"] = seqs;
  j["qp_conv"] = qps.qp_conv;
  j["qp_scaled"] = qps.qp_scaled;
  json ups = json::array();
  for (Upscaler u : upscalers) ups.push_back(std::string(to_string(u)));
  j["upscalers"] = ups;
  if (codec.kind == CodecChoice::Kind::kMock) {
    j["codec"] = {{"type", "mock"}};
  } else {
    j["codec"] = {{"type", "external"},
                  {"encode", codec.tmpl.encode},
                  {"decode", codec.tmpl.decode},
                  {"bitstream_suffix", codec.tmpl.bitstream_suffix},
                  {"input_y4m", codec.tmpl.input_y4m}};
  }
  j["weights"] = {{"vdsr", vdsr_weights}, {"rdn", rdn_weights}};
  j["vmaf"] = {{"binary", vmaf.binary}, {"model", vmaf.model}};
  j["resample"] = {{"kernel_a", kernel.a},
                   {"antialias", kernel.antialias},
                   {"gauss_sigma", gauss_sigma},
                   {"bp_iters", bp_iterations}};
  j["bd_mode"] = std::string(to_string(bd_mode));
  j["inference"] = {{"input_scale", input_scale},
                    {"rdn_input", rdn_input == RdnInputMode::kRgb ? "rgb" : "y"},
                    {"tile", tiles.tile},
                    {"halo", tiles.halo}};
  return j.dump();
}

ExperimentConfig parse_config(const std::string& json_text, const std::string& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kConfig, std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorCode::kConfig, "config root must be an object");
  reject_unknown_keys(j,
                      {"version", "sequences", "qp_conv", "qp_scaled", "upscalers", "codec", "weights",
                       "output_dir", "vmaf", "resample", "bd_mode", "jobs", "cache", "inference"},
                      "config");

  ExperimentConfig c;
  c.version = get_or(j, "version", kConfigVersion);
  if (!j.contains("sequences") || !j["sequences"].is_array()) fail(ErrorCode::kConfig, "'sequences' array is required");
  for (const auto& s : j["sequences"]) {
    reject_unknown_keys(s, {"name", "path", "frames", "width", "height", "fps"}, "sequence");
    SequenceEntry e;
    e.path = resolve_path(get_or<std::string>(s, "path", ""), base_dir);
    if (e.path.empty()) fail(ErrorCode::kConfig, "sequence entry without 'path'");
    e.name = get_or<std::string>(s, "name", fs::path(e.path).stem().string());
    long long frames = get_or<long long>(s, "frames", 30);
    if (frames < 1) fail(ErrorCode::kConfig, "sequence '" + e.name + "': frames must be >= 1");
    e.frames = static_cast<std::size_t>(frames);
    if (s.contains("fps")) e.fps_override = parse_fps(s["fps"]);
    if (s.contains("width") || s.contains("height")) {
      VideoSpec spec;
      spec.width = get_or(s, "width", 0);
      spec.height = get_or(s, "height", 0);
      if (e.fps_override) {
        spec.fps_num = e.fps_override->first;
        spec.fps_den = e.fps_override->second;
      }
      e.raw_spec = spec;
    }
    c.sequences.push_back(std::move(e));
  }
  c.qps.qp_conv = get_or(j, "qp_conv", c.qps.qp_conv);
  c.qps.qp_scaled = get_or(j, "qp_scaled", c.qps.qp_scaled);
  if (j.contains("upscalers")) {
    c.upscalers.clear();
    for (const auto& u : j["upscalers"]) {
      try {
        c.upscalers.push_back(parse_upscaler(u.get<std::string>()));
      } catch (const std::exception& e) {
        fail(ErrorCode::kConfig, std::string("bad upscaler: ") + e.what());
      }
    }
  }
  if (j.contains("codec")) {
    const json& cj = j["codec"];
    reject_unknown_keys(cj, {"type", "encode", "decode", "bitstream_suffix", "input_y4m", "keep"}, "codec");
    std::string type = get_or<std::string>(cj, "type", "mock");
    if (type == "mock") {
      c.codec.kind = CodecChoice::Kind::kMock;
    } else if (type == "external") {
      c.codec.kind = CodecChoice::Kind::kExternal;
    } else {
      fail(ErrorCode::kConfig, "codec type must be 'mock' or 'external'");
    }
    c.codec.tmpl.encode = get_or<std::string>(cj, "encode", "");
    c.codec.tmpl.decode = get_or<std::string>(cj, "decode", "");
    c.codec.tmpl.bitstream_suffix = get_or<std::string>(cj, "bitstream_suffix", ".bin");
    c.codec.tmpl.input_y4m = get_or(cj, "input_y4m", false);
    c.codec.keep = get_or(cj, "keep", false);
  }
  if (j.contains("weights")) {
    const json& wj = j["weights"];
    reject_unknown_keys(wj, {"vdsr", "rdn"}, "weights");
    auto resolve_weight = [&](const char* key) {
      std::string v = get_or<std::string>(wj, key, "");
      return is_weight_spec_synthetic(v) ? v : resolve_path(v, base_dir);
    };
    c.vdsr_weights = resolve_weight("vdsr");
    c.rdn_weights = resolve_weight("rdn");
  }
  c.output_dir = resolve_path(get_or<std::string>(j, "output_dir", "out"), base_dir);
  if (j.contains("vmaf")) {
    const json& vj = j["vmaf"];
    reject_unknown_keys(vj, {"binary", "model"}, "vmaf");
    c.vmaf.binary = get_or<std::string>(vj, "binary", "");
    c.vmaf.model = get_or<std::string>(vj, "model", "");
  }
  if (j.contains("resample")) {
    const json& rj = j["resample"];
    reject_unknown_keys(rj, {"kernel_a", "antialias", "gauss_sigma", "bp_iters"}, "resample");
    c.kernel.a = get_or(rj, "kernel_a", c.kernel.a);
    c.kernel.antialias = get_or(rj, "antialias", c.kernel.antialias);
    c.gauss_sigma = get_or(rj, "gauss_sigma", c.gauss_sigma);
    c.bp_iterations = get_or(rj, "bp_iters", c.bp_iterations);
  }
  if (j.contains("bd_mode")) {
    try {
      c.bd_mode = parse_bd_mode(get_or<std::string>(j, "bd_mode", "pchip"));
    } catch (const Error& e) {
      fail(ErrorCode::kConfig, e.what());
    }
  }
  c.jobs = get_or(j, "jobs", c.jobs);
  c.cache = get_or(j, "cache", c.cache);
  if (j.contains("inference")) {
    const json& ij = j["inference"];
    reject_unknown_keys(ij, {"input_scale", "rdn_input", "tile", "halo"}, "inference");
    c.input_scale = get_or(ij, "input_scale", c.input_scale);
    std::string mode = get_or<std::string>(ij, "rdn_input", "y");
    if (mode == "y") {
      c.rdn_input = RdnInputMode::kReplicateY;
    } else if (mode == "rgb") {
      c.rdn_input = RdnInputMode::kRgb;
    } else {
      fail(ErrorCode::kConfig, "rdn_input must be 'y' or 'rgb'");
    }
    c.tiles.tile = get_or(ij, "tile", c.tiles.tile);
    c.tiles.halo = get_or(ij, "halo", c.tiles.halo);
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kConfig, "cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  std::string base = fs::path(path).parent_path().string();
  return parse_config(ss.str(), base.empty() ? "." : base);
}

ModelWeights resolve_weights(const std::string& source, bool rdn) {
  if (source == "zero") return rdn ? make_rdn_weights({}, 0, 0.0f) : make_vdsr_weights(0, 0.0f);
  if (source.rfind("random:", 0) == 0) {
    std::uint64_t seed = 0;
    float gain = kDefaultRandomGain;
    try {
      std::string rest = source.substr(7);
      auto colon = rest.find(':');
      seed = std::stoull(rest.substr(0, colon));
      if (colon != std::string::npos) gain = std::stof(rest.substr(colon + 1));
    } catch (const std::exception&) {
      fail(ErrorCode::kConfig, "bad random weight spec '" + source + "', expected random:SEED[:GAIN]");
    }
    return rdn ? make_rdn_weights({}, seed, gain, 0.001f) : make_vdsr_weights(seed, gain, 0.001f);
  }
  return load_weights(source);
}

UpscaleContext make_upscale_context(const ExperimentConfig& config) {
  UpscaleContext ctx;
  ctx.kernel = config.kernel;
  ctx.bp_iterations = config.bp_iterations;
  ctx.rdn_input = config.rdn_input;
  ctx.tiles = config.tiles;
  for (Upscaler u : config.upscalers) {
    if (u == Upscaler::kVdsr && !ctx.vdsr) {
      ctx.vdsr = VdsrGraph::bind(resolve_weights(config.vdsr_weights, false));
      ctx.vdsr->input_scale = config.input_scale;
    }
    if (u == Upscaler::kRdn && !ctx.rdn) {
      ctx.rdn = RdnGraph::bind(resolve_weights(config.rdn_weights, true));
      ctx.rdn->input_scale = config.input_scale;
    }
  }
  return ctx;
}

// ---------------------------------------------------------------------------
// Codecs

CodecRun MockCodec::run(std::span<const FrameBuffer> frames, int qp) const { return mock_codec(frames, qp); }

std::string MockCodec::identity() const { return "mock-dct8x8-v1"; }

CodecRun ExternalCodec::run(std::span<const FrameBuffer> frames, int qp) const {
  return run_external_codec(frames, qp, tmpl_, opts_);
}

std::string ExternalCodec::identity() const {
  return "external|" + tmpl_.encode + "|" + tmpl_.decode + "|" + tmpl_.bitstream_suffix + "|" +
         (tmpl_.input_y4m ? "y4m" : "yuv");
}

std::unique_ptr<Codec> make_codec(const CodecChoice& choice, const std::string& work_dir) {
  if (choice.kind == CodecChoice::Kind::kMock) return std::make_unique<MockCodec>();
  return std::make_unique<ExternalCodec>(choice.tmpl, ExternalCodecOptions{choice.keep, work_dir});
}

std::uint64_t content_hash(std::span<const FrameBuffer> frames) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& f : frames) {
    std::string dims = std::to_string(f.spec().width) + "x" + std::to_string(f.spec().height) + "@" +
                       std::to_string(f.spec().fps_num) + "/" + std::to_string(f.spec().fps_den) + ";";
    h = hash_string(dims, h);
    h = fnv1a64(f.y(), h);
    h = fnv1a64(f.cb(), h);
    h = fnv1a64(f.cr(), h);
  }
  return h;
}

namespace {

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_str(std::string& out, const std::string& s) {
  put_u64(out, s.size());
  out += s;
}

struct Cursor {
  const std::string& buf;
  std::size_t pos = 0;

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  std::string str() {
    std::uint64_t n = u64();
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
  void need(std::uint64_t n) {
    if (pos + n > buf.size()) fail(ErrorCode::kTruncated, "cache entry truncated");
  }
};

constexpr std::string_view kCacheMagic = "SCCACHE1";

std::string encode_cache_entry(const CodecRun& run) {
  std::string out(kCacheMagic);
  put_u64(out, static_cast<std::uint64_t>(run.qp));
  put_u64(out, static_cast<std::uint64_t>(run.spec.width));
  put_u64(out, static_cast<std::uint64_t>(run.spec.height));
  put_u64(out, static_cast<std::uint64_t>(run.spec.fps_num));
  put_u64(out, static_cast<std::uint64_t>(run.spec.fps_den));
  put_u64(out, run.bitstream_bytes);
  put_str(out, run.encode_command);
  put_str(out, run.decode_command);
  put_u64(out, run.decoded.size());
  for (const auto& f : run.decoded) {
    out.append(reinterpret_cast<const char*>(f.y().data()), f.y().size());
    out.append(reinterpret_cast<const char*>(f.cb().data()), f.cb().size());
    out.append(reinterpret_cast<const char*>(f.cr().data()), f.cr().size());
  }
  put_u64(out, fnv1a64({reinterpret_cast<const std::uint8_t*>(out.data()), out.size()}));
  return out;
}

std::optional<CodecRun> decode_cache_entry(const std::string& buf) {
  if (buf.size() < kCacheMagic.size() + 8 || buf.compare(0, kCacheMagic.size(), kCacheMagic) != 0) return std::nullopt;
  std::string body = buf.substr(0, buf.size() - 8);
  Cursor tail{buf, buf.size() - 8};
  if (tail.u64() != fnv1a64({reinterpret_cast<const std::uint8_t*>(body.data()), body.size()})) return std::nullopt;
  try {
    Cursor c{body, kCacheMagic.size()};
    CodecRun run;
    run.qp = static_cast<int>(c.u64());
    run.spec.width = static_cast<int>(c.u64());
    run.spec.height = static_cast<int>(c.u64());
    run.spec.fps_num = static_cast<int>(c.u64());
    run.spec.fps_den = static_cast<int>(c.u64());
    run.bitstream_bytes = c.u64();
    run.encode_command = c.str();
    run.decode_command = c.str();
    std::uint64_t n = c.u64();
    run.spec.validate();
    for (std::uint64_t i = 0; i < n; ++i) {
      c.need(run.spec.frame_bytes());
      const auto* p = reinterpret_cast<const std::uint8_t*>(body.data() + c.pos);
      std::vector<std::uint8_t> y(p, p + run.spec.luma_size());
      p += run.spec.luma_size();
      std::vector<std::uint8_t> cb(p, p + run.spec.chroma_size());
      p += run.spec.chroma_size();
      std::vector<std::uint8_t> cr(p, p + run.spec.chroma_size());
      c.pos += run.spec.frame_bytes();
      run.decoded.emplace_back(run.spec, std::move(y), std::move(cb), std::move(cr));
    }
    if (c.pos != body.size()) return std::nullopt;
    return run;
  } catch (const Error&) {
    return std::nullopt;
  }
}

}  // namespace

std::shared_ptr<const CodecRun> CodecCache::get(const Codec& codec, std::span<const FrameBuffer> frames, int qp) {
  std::string key = hex64(content_hash(frames)) + "-" + hex64(hash_string(codec.identity())) + "-qp" +
                    std::to_string(qp);
  std::promise<std::shared_ptr<const CodecRun>> promise;
  std::shared_future<std::shared_ptr<const CodecRun>> existing;
  {
    std::lock_guard lock(mutex_);
    auto it = runs_.find(key);
    if (it != runs_.end()) {
      existing = it->second;
    } else {
      runs_.emplace(key, promise.get_future().share());
    }
  }
  if (existing.valid()) return existing.get();

  try {
    fs::path file = dir_.empty() ? fs::path() : fs::path(dir_) / (key + ".run");
    std::shared_ptr<const CodecRun> result;
    if (!dir_.empty() && fs::exists(file)) {
      std::ifstream in(file, std::ios::binary);
      std::stringstream ss;
      ss << in.rdbuf();
      if (auto run = decode_cache_entry(ss.str())) {
        result = std::make_shared<const CodecRun>(std::move(*run));
        std::lock_guard lock(mutex_);
        ++disk_hits_;
      }
    }
    if (!result) {
      {
        std::lock_guard lock(mutex_);
        ++invocations_;
      }
      result = std::make_shared<const CodecRun>(codec.run(frames, qp));
      if (!dir_.empty()) {
        fs::create_directories(dir_);
        fs::path tmp = file;
        tmp += ".tmp";
        {
          std::ofstream out(tmp, std::ios::binary);
          std::string bytes = encode_cache_entry(*result);
          out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        }
        fs::rename(tmp, file);
      }
    }
    promise.set_value(result);
    return result;
  } catch (...) {
    {
      std::lock_guard lock(mutex_);
      runs_.erase(key);
    }
    promise.set_exception(std::current_exception());
    throw;
  }
}

// ---------------------------------------------------------------------------
// Branches

LoadedSequence load_sequence(const SequenceEntry& entry) {
  Sequence seq = read_sequence(entry.path, entry.raw_spec, entry.frames);
  if (seq.frames.empty()) fail(ErrorCode::kTruncated, "no frames in " + entry.path);
  LoadedSequence out;
  out.name = entry.name;
  out.path = entry.path;
  out.spec = seq.spec;
  if (entry.fps_override) {
    out.spec.fps_num = entry.fps_override->first;
    out.spec.fps_den = entry.fps_override->second;
    for (auto& f : seq.frames) {
      VideoSpec s = out.spec;
      f = FrameBuffer(s, std::vector<std::uint8_t>(f.y().begin(), f.y().end()),
                      std::vector<std::uint8_t>(f.cb().begin(), f.cb().end()),
                      std::vector<std::uint8_t>(f.cr().begin(), f.cr().end()));
    }
  }
  out.frames = std::move(seq.frames);
  return out;
}

namespace {

struct CellResult {
  int qp = 0;
  bool ok = false;
  double rate = 0.0;
  double psnr = 0.0;
  std::optional<double> vmaf;
  std::string vmaf_status;
  std::string error;
  std::vector<std::string> commands;
};

std::string write_temp_y4m(const std::string& dir, const std::string& stem, const VideoSpec& spec,
                           std::span<const FrameBuffer> frames) {
  fs::create_directories(dir);
  fs::path p = fs::path(dir) / (stem + ".y4m");
  write_sequence(p.string(), spec, frames, Container::kY4m);
  return p.string();
}

std::optional<double> score_vmaf(const LoadedSequence& seq, std::span<const FrameBuffer> test, const std::string& tag,
                                 const BranchOptions& opts, std::string& status) {
  if (opts.vmaf.binary.empty()) {
    status = "disabled";
    return std::nullopt;
  }
  std::string dir = opts.work_dir.empty() ? (fs::temp_directory_path() / "scalechain-vmaf").string()
                                          : (fs::path(opts.work_dir) / "vmaf").string();
  std::string ref = write_temp_y4m(dir, seq.name + "-ref", seq.spec, seq.frames);
  std::string dist = write_temp_y4m(dir, seq.name + "-" + tag, seq.spec, test);
  VmafScores s = vmaf_external(ref, dist, opts.vmaf);
  std::error_code ec;
  fs::remove(dist, ec);
  if (!s.available) {
    status = "unavailable: " + s.reason;
    return std::nullopt;
  }
  status = "ok (model " + (s.model.empty() ? std::string("default") : s.model) + ")";
  return s.pooled;
}

BranchResult collect(const LoadedSequence& seq, std::string_view branch, const std::string& upscaler,
                     std::vector<CellResult>& cells) {
  BranchResult out;
  RdCurve psnr{{}, seq.name, upscaler, std::string(kMetricPsnr)};
  RdCurve vmaf{{}, seq.name, upscaler, std::string(kMetricVmaf)};
  bool any_vmaf = false;
  for (auto& c : cells) {
    for (auto& cmd : c.commands) out.commands.push_back(cmd);
    if (!c.ok) {
      out.failures.push_back({seq.name, std::string(branch), upscaler, c.qp, c.error});
      continue;
    }
    psnr.points.push_back({c.rate, c.psnr, c.qp, std::string(branch)});
    if (c.vmaf) {
      vmaf.points.push_back({c.rate, *c.vmaf, c.qp, std::string(branch)});
      any_vmaf = true;
    }
    if (out.vmaf_status.empty() || c.vmaf_status != "disabled") out.vmaf_status = c.vmaf_status;
  }
  out.curves.push_back(std::move(psnr));
  if (any_vmaf) out.curves.push_back(std::move(vmaf));
  return out;
}

// Runs `cell` for every QP, at most `jobs` at a time; each worker handles one
// QP from codec run through scoring.
void run_cells(std::span<const int> qps, int jobs, std::vector<CellResult>& cells,
               const std::function<void(CellResult&)>& cell) {
  cells.assign(qps.size(), {});
  for (std::size_t i = 0; i < qps.size(); ++i) cells[i].qp = qps[i];
  auto body = [&](std::size_t i) {
    try {
      cell(cells[i]);
      cells[i].ok = true;
    } catch (const std::exception& e) {
      cells[i].ok = false;
      cells[i].error = e.what();
    }
  };
  int workers = jobs <= 0 ? max_threads() : jobs;
  if (workers <= 1 || qps.size() <= 1) {
    for (std::size_t i = 0; i < qps.size(); ++i) body(i);
    return;
  }
  int saved = max_threads();
  set_max_threads(std::min<int>(workers, static_cast<int>(qps.size())));
  try {
    parallel_for(qps.size(), body);
  } catch (...) {
    set_max_threads(saved);
    throw;
  }
  set_max_threads(saved);
}

}  // namespace

BranchResult run_conventional_branch(const LoadedSequence& seq, std::span<const int> qps, const Codec& codec,
                                     CodecCache& cache, const BranchOptions& opts) {
  std::vector<CellResult> cells;
  run_cells(qps, opts.jobs, cells, [&](CellResult& c) {
    auto run = cache.get(codec, seq.frames, c.qp);
    if (run->decoded.size() != seq.frames.size())
      fail(ErrorCode::kGeometryMismatch, "decoder returned a different frame count");
    c.rate = bitrate_kbps(*run, seq.spec.fps(), seq.frames.size());
    c.psnr = psnr_y(seq.frames, run->decoded);
    c.vmaf = score_vmaf(seq, run->decoded, "conv-qp" + std::to_string(c.qp), opts, c.vmaf_status);
    if (!run->encode_command.empty()) c.commands.push_back(run->encode_command);
    if (!run->decode_command.empty()) c.commands.push_back(run->decode_command);
  });
  return collect(seq, kBranchConventional, "none", cells);
}

BranchResult run_scaled_branch(const LoadedSequence& seq, std::span<const int> qps, const Codec& codec,
                               CodecCache& cache, const ScaledBranchSettings& settings, const BranchOptions& opts) {
  if (!settings.context) fail(ErrorCode::kInvalidArgument, "scaled branch needs an upscale context");
  const UpscaleContext& ctx = *settings.context;
  if (settings.upscaler == Upscaler::kVdsr && !ctx.vdsr) fail(ErrorCode::kMissingWeights, "no VDSR weights bound");
  if (settings.upscaler == Upscaler::kRdn && !ctx.rdn) fail(ErrorCode::kMissingWeights, "no RDN weights bound");

  DownscaleOptions dopts;
  dopts.kernel = ctx.kernel;
  if (settings.upscaler == Upscaler::kBackProjection) dopts.prefilter_sigma = settings.gauss_sigma;
  std::vector<FrameBuffer> lr;
  lr.reserve(seq.frames.size());
  for (const auto& f : seq.frames) lr.push_back(downscale_frame(f, ScaleFactor{}, dopts));

  std::string name(to_string(settings.upscaler));
  std::vector<CellResult> cells;
  run_cells(qps, opts.jobs, cells, [&](CellResult& c) {
    auto run = cache.get(codec, lr, c.qp);
    if (run->decoded.size() != lr.size()) fail(ErrorCode::kGeometryMismatch, "decoder returned a different frame count");
    std::vector<FrameBuffer> up;
    up.reserve(run->decoded.size());
    for (const auto& f : run->decoded) up.push_back(upscale_frame(f, settings.upscaler, ctx));
    c.rate = bitrate_kbps(*run, seq.spec.fps(), seq.frames.size());
    c.psnr = psnr_y(seq.frames, up);
    c.vmaf = score_vmaf(seq, up, name + "-qp" + std::to_string(c.qp), opts, c.vmaf_status);
    if (!run->encode_command.empty()) c.commands.push_back(run->encode_command);
    if (!run->decode_command.empty()) c.commands.push_back(run->decode_command);
  });
  return collect(seq, kBranchScaled, name, cells);
}

// ---------------------------------------------------------------------------

ExperimentReport run_experiment(const ExperimentConfig& config, const std::string& config_text) {
  auto t0 = std::chrono::steady_clock::now();
  config.validate();
  fs::create_directories(config.output_dir);
  std::string work_dir = (fs::path(config.output_dir) / "work").string();
  UpscaleContext ctx = make_upscale_context(config);
  auto codec = make_codec(config.codec, work_dir);
  CodecCache cache(config.cache ? (fs::path(config.output_dir) / "cache").string() : std::string());

  BranchOptions bopts;
  bopts.jobs = config.jobs;
  bopts.vmaf = config.vmaf;
  bopts.vmaf.work_dir = work_dir;
  bopts.work_dir = work_dir;

  std::vector<RdCurve> curves;
  std::vector<CellFailure> failures;
  std::vector<std::string> commands;
  std::string vmaf_status = config.vmaf.binary.empty() ? "disabled" : "";
  auto absorb = [&](BranchResult&& r) {
    for (auto& c : r.curves) curves.push_back(std::move(c));
    for (auto& f : r.failures) failures.push_back(std::move(f));
    for (auto& c : r.commands) commands.push_back(std::move(c));
    if (!r.vmaf_status.empty() && (vmaf_status.empty() || vmaf_status == "disabled")) vmaf_status = r.vmaf_status;
  };

  for (const auto& entry : config.sequences) {
    LoadedSequence seq = load_sequence(entry);
    absorb(run_conventional_branch(seq, config.qps.qp_conv, *codec, cache, bopts));
    for (Upscaler u : config.upscalers) {
      ScaledBranchSettings s{u, &ctx, config.gauss_sigma};
      absorb(run_scaled_branch(seq, config.qps.qp_scaled, *codec, cache, s, bopts));
    }
  }

  Provenance prov;
  prov.version = SCALECHAIN_VERSION;
  prov.config_hash = hex64(hash_string(config_text.empty() ? config.canonical_json() : config_text));
  std::set<std::string> seen;
  for (auto& c : commands)
    if (seen.insert(c).second) prov.commands.push_back(c);
  if (config.codec.kind == CodecChoice::Kind::kMock) prov.commands.insert(prov.commands.begin(), "mock codec (in-process)");
  for (Upscaler u : config.upscalers) {
    if (u == Upscaler::kVdsr) {
      std::string src = config.vdsr_weights;
      std::string sum = is_weight_spec_synthetic(src) ? "synthetic" : hex64(fnv1a64(load_weights(src).serialize()));
      prov.weights["vdsr"] = src + " (" + sum + ")";
    }
    if (u == Upscaler::kRdn) {
      std::string src = config.rdn_weights;
      std::string sum = is_weight_spec_synthetic(src) ? "synthetic" : hex64(fnv1a64(load_weights(src).serialize()));
      prov.weights["rdn"] = src + " (" + sum + ")";
    }
  }
  prov.vmaf_status = vmaf_status.empty() ? "disabled" : vmaf_status;
  prov.codec_invocations = cache.codec_invocations();
  prov.cache_hits = cache.disk_hits();

  ExperimentReport report = build_report(std::move(curves), std::move(failures), config.bd_mode, std::move(prov));
  report.expected_cells = config.sequences.size() *
                          (config.qps.qp_conv.size() + config.upscalers.size() * config.qps.qp_scaled.size());
  report.provenance.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  auto write_file = [&](const std::string& name, const std::string& text) {
    std::ofstream out(fs::path(config.output_dir) / name, std::ios::binary);
    if (!out) fail(ErrorCode::kIo, "cannot write " + name);
    out << text;
  };
  write_file("rd_points.csv", report.rd_csv());
  write_file("bd_table.csv", report.bd_csv());
  write_file("report.txt", report.text());
  write_plots(report.curves, config.output_dir);
  if (!config.codec.keep) {
    std::error_code ec;
    fs::remove_all(work_dir, ec);
  }
  return report;
}

}  // namespace scalechain
