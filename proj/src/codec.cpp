#include "scalechain/codec.hpp"

#include <fcntl.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>

#include "scalechain/error.hpp"

extern char** environ;

namespace scalechain {

namespace fs = std::filesystem;

void QpProtocol::validate() const {
  for (const auto* list : {&qp_conv, &qp_scaled}) {
    if (list->empty()) fail(ErrorCode::kConfig, "QP list must not be empty");
    for (std::size_t i = 0; i < list->size(); ++i) {
      if ((*list)[i] < 0 || (*list)[i] > 63) fail(ErrorCode::kConfig, "QP out of range");
      if (i > 0 && (*list)[i] <= (*list)[i - 1]) fail(ErrorCode::kConfig, "QP list must be strictly increasing");
    }
  }
}

// ---------------------------------------------------------------------------
// External codec

std::vector<std::string> substitute_template(const std::string& tmpl,
                                             const std::map<std::string, std::string>& values) {
  std::vector<std::string> argv;
  std::istringstream words(tmpl);
  std::string word;
  while (words >> word) {
    std::string out;
    for (std::size_t i = 0; i < word.size(); ++i) {
      if (word[i] != '{') {
        out.push_back(word[i]);
        continue;
      }
      const std::size_t close = word.find('}', i);
      if (close == std::string::npos)
        fail(ErrorCode::kInvalidArgument, "unterminated placeholder in '" + tmpl + "'");
      const std::string key = word.substr(i + 1, close - i - 1);
      auto it = values.find(key);
      if (it == values.end()) fail(ErrorCode::kInvalidArgument, "unknown placeholder {" + key + "}");
      out += it->second;
      i = close;
    }
    argv.push_back(std::move(out));
  }
  if (argv.empty()) fail(ErrorCode::kInvalidArgument, "empty command template");
  return argv;
}

std::string join_command(const std::vector<std::string>& argv) {
  std::string s;
  for (const auto& a : argv) {
    if (!s.empty()) s.push_back(' ');
    s += a;
  }
  return s;
}

ProcessResult run_process(const std::vector<std::string>& argv, const std::string& log_path) {
  std::vector<char*> args;
  for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
  args.push_back(nullptr);

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  const std::string sink = log_path.empty() ? "/dev/null" : log_path;
  posix_spawn_file_actions_addopen(&actions, STDOUT_FILENO, sink.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  posix_spawn_file_actions_adddup2(&actions, STDOUT_FILENO, STDERR_FILENO);

  const auto start = std::chrono::steady_clock::now();
  pid_t pid = 0;
  const int rc = posix_spawnp(&pid, args[0], &actions, nullptr, args.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  ProcessResult result;
  if (rc != 0) {
    result.exit_code = 127;
    return result;
  }
  int status = 0;
  while (waitpid(pid, &status, 0) < 0) {
    if (errno != EINTR) fail(ErrorCode::kExternalTool, "waitpid failed");
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
  return result;
}

namespace {

class ScratchDir {
 public:
  ScratchDir(const std::string& parent, bool keep) : keep_(keep) {
    fs::path base = parent.empty() ? fs::temp_directory_path() : fs::path(parent);
    fs::create_directories(base);
    std::string pattern = (base / "scalechain-XXXXXX").string();
    if (!mkdtemp(pattern.data())) fail(ErrorCode::kIo, "cannot create scratch directory in " + base.string());
    path_ = pattern;
  }
  ~ScratchDir() {
    if (keep_) return;
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
  bool keep_;
};

std::string fps_string(const VideoSpec& spec) {
  if (spec.fps_num % spec.fps_den == 0) return std::to_string(spec.fps_num / spec.fps_den);
  std::ostringstream s;
  s.precision(6);
  s << spec.fps();
  return s.str();
}

std::vector<FrameBuffer> read_decoded(const fs::path& path, const VideoSpec& spec, std::size_t count) {
  if (!fs::exists(path)) fail(ErrorCode::kExternalTool, "decoder produced no output " + path.string());
  std::ifstream probe(path, std::ios::binary);
  char magic[9] = {};
  probe.read(magic, 9);
  probe.close();

  Sequence seq;
  if (std::string_view(magic, 9) == "YUV4MPEG2") {
    seq = read_sequence(path.string());
    if (seq.spec.width != spec.width || seq.spec.height != spec.height)
      fail(ErrorCode::kGeometryMismatch,
           "decoder emitted " + std::to_string(seq.spec.width) + "x" + std::to_string(seq.spec.height) +
               " for " + std::to_string(spec.width) + "x" + std::to_string(spec.height) + " input");
  } else {
    const auto size = fs::file_size(path);
    if (size != count * spec.frame_bytes())
      fail(ErrorCode::kGeometryMismatch, "decoded file has " + std::to_string(size) + " bytes, expected " +
                                             std::to_string(count * spec.frame_bytes()));
    seq = read_sequence(path.string(), spec);
  }
  if (seq.frames.size() != count)
    fail(ErrorCode::kGeometryMismatch, "decoder emitted " + std::to_string(seq.frames.size()) +
                                           " frames, expected " + std::to_string(count));
  for (auto& f : seq.frames) f = FrameBuffer(spec, {f.y().begin(), f.y().end()}, {f.cb().begin(), f.cb().end()},
                                             {f.cr().begin(), f.cr().end()});
  return std::move(seq.frames);
}

}  // namespace

CodecRun run_external_codec(std::span<const FrameBuffer> frames, int qp, const EncoderTemplate& tmpl,
                            const ExternalCodecOptions& opts) {
  if (frames.empty()) fail(ErrorCode::kInvalidArgument, "no frames to encode");
  const VideoSpec spec = frames.front().spec();
  ScratchDir scratch(opts.work_dir, opts.keep);
  const fs::path input = scratch.path() / (tmpl.input_y4m ? "input.y4m" : "input.yuv");
  const fs::path bitstream = scratch.path() / ("bitstream" + tmpl.bitstream_suffix);
  const fs::path decoded = scratch.path() / "decoded.yuv";
  const fs::path log = scratch.path() / "codec.log";

  write_sequence(input.string(), spec, frames, tmpl.input_y4m ? Container::kY4m : Container::kRaw);

  std::map<std::string, std::string> values{
      {"input", input.string()},        {"output", bitstream.string()},
      {"qp", std::to_string(qp)},       {"width", std::to_string(spec.width)},
      {"height", std::to_string(spec.height)}, {"fps", fps_string(spec)},
      {"frames", std::to_string(frames.size())}};

  CodecRun run;
  run.qp = qp;
  run.spec = spec;

  const auto enc_argv = substitute_template(tmpl.encode, values);
  run.encode_command = join_command(enc_argv);
  const ProcessResult enc = run_process(enc_argv, log.string());
  run.encode_seconds = enc.seconds;
  if (enc.exit_code != 0)
    fail(ErrorCode::kExternalTool, "encoder exited with " + std::to_string(enc.exit_code) + ": " + run.encode_command);
  if (!fs::exists(bitstream) || fs::file_size(bitstream) == 0)
    fail(ErrorCode::kExternalTool, "encoder wrote no bitstream: " + run.encode_command);
  run.bitstream_bytes = fs::file_size(bitstream);

  values["input"] = bitstream.string();
  values["output"] = decoded.string();
  const auto dec_argv = substitute_template(tmpl.decode, values);
  run.decode_command = join_command(dec_argv);
  const ProcessResult dec = run_process(dec_argv, log.string());
  run.decode_seconds = dec.seconds;
  if (dec.exit_code != 0)
    fail(ErrorCode::kExternalTool, "decoder exited with " + std::to_string(dec.exit_code) + ": " + run.decode_command);
  run.decoded = read_decoded(decoded, spec, frames.size());
  return run;
}

// ---------------------------------------------------------------------------
// Mock codec

namespace {

struct DctBasis {
  double c[8][8];
  DctBasis() {
    for (int k = 0; k < 8; ++k)
      for (int n = 0; n < 8; ++n) {
        const double scale = k == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
        c[k][n] = scale * std::cos(std::numbers::pi * (2 * n + 1) * k / 16.0);
      }
  }
};

const DctBasis& basis() {
  static const DctBasis b;
  return b;
}

std::int32_t round_level(double v) { return static_cast<std::int32_t>(std::round(v)); }

void check_qp(int qp) {
  if (qp < 0 || qp > 51) fail(ErrorCode::kInvalidArgument, "mock codec QP must be in [0,51], got " + std::to_string(qp));
}

int blocks_along(int n) { return (n + 7) / 8; }

}  // namespace

double qstep_for_qp(int qp) { return std::pow(2.0, (qp - 4) / 6.0); }

void forward_dct8x8(const double in[64], double out[64]) {
  const auto& b = basis();
  double tmp[64];
  for (int y = 0; y < 8; ++y)
    for (int k = 0; k < 8; ++k) {
      double s = 0.0;
      for (int n = 0; n < 8; ++n) s += b.c[k][n] * in[y * 8 + n];
      tmp[y * 8 + k] = s;
    }
  for (int k = 0; k < 8; ++k)
    for (int x = 0; x < 8; ++x) {
      double s = 0.0;
      for (int n = 0; n < 8; ++n) s += b.c[k][n] * tmp[n * 8 + x];
      out[k * 8 + x] = s;
    }
}

void inverse_dct8x8(const double in[64], double out[64]) {
  const auto& b = basis();
  double tmp[64];
  for (int k = 0; k < 8; ++k)
    for (int n = 0; n < 8; ++n) {
      double s = 0.0;
      for (int j = 0; j < 8; ++j) s += b.c[j][n] * in[k * 8 + j];
      tmp[k * 8 + n] = s;
    }
  for (int n = 0; n < 8; ++n)
    for (int x = 0; x < 8; ++x) {
      double s = 0.0;
      for (int j = 0; j < 8; ++j) s += b.c[j][n] * tmp[j * 8 + x];
      out[n * 8 + x] = s;
    }
}

std::vector<std::int32_t> MockBlockCoder::quantize_plane(std::span<const std::uint8_t> plane, int width,
                                                         int height, double qstep) {
  const int bw = blocks_along(width), bh = blocks_along(height);
  std::vector<std::int32_t> levels;
  levels.reserve(static_cast<std::size_t>(bw) * bh * 64);
  double block[64], coef[64];
  for (int by = 0; by < bh; ++by)
    for (int bx = 0; bx < bw; ++bx) {
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
          const int sy = std::min(by * 8 + y, height - 1);
          const int sx = std::min(bx * 8 + x, width - 1);
          block[y * 8 + x] = plane[static_cast<std::size_t>(sy) * width + sx] - 128.0;
        }
      forward_dct8x8(block, coef);
      for (double c : coef) levels.push_back(round_level(c / qstep));
    }
  return levels;
}

std::vector<std::uint8_t> MockBlockCoder::reconstruct_plane(std::span<const std::int32_t> levels, int width,
                                                            int height, double qstep) {
  const int bw = blocks_along(width), bh = blocks_along(height);
  if (levels.size() != static_cast<std::size_t>(bw) * bh * 64)
    fail(ErrorCode::kShapeMismatch, "level count does not match plane geometry");
  std::vector<std::uint8_t> plane(static_cast<std::size_t>(width) * height);
  double coef[64], block[64];
  for (int by = 0; by < bh; ++by)
    for (int bx = 0; bx < bw; ++bx) {
      const std::int32_t* lv = levels.data() + (static_cast<std::size_t>(by) * bw + bx) * 64;
      for (int i = 0; i < 64; ++i) coef[i] = lv[i] * qstep;
      inverse_dct8x8(coef, block);
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
          const int py = by * 8 + y, px = bx * 8 + x;
          if (py < height && px < width)
            plane[static_cast<std::size_t>(py) * width + px] = quantize_sample(block[y * 8 + x] + 128.0);
        }
    }
  return plane;
}

std::uint64_t MockBlockCoder::block_bytes(std::span<const std::int32_t> levels) {
  // Zero-order entropy of the block's levels plus an Exp-Golomb cost for
  // signalling each distinct level value, and one byte of block header.
  std::map<std::int32_t, int> histogram;
  for (std::int32_t v : levels) ++histogram[v];
  const double n = static_cast<double>(levels.size());
  double bits = 0.0;
  for (const auto& [value, count] : histogram) {
    const double p = count / n;
    bits -= count * std::log2(p);
    const std::uint64_t mapped = value > 0 ? 2ull * value - 1 : 2ull * static_cast<std::uint64_t>(-static_cast<std::int64_t>(value));
    bits += 2.0 * std::floor(std::log2(static_cast<double>(mapped + 1))) + 1.0;
  }
  return 1 + static_cast<std::uint64_t>(std::ceil(bits / 8.0 - 1e-12));
}

namespace {

struct PlaneRef {
  std::span<const std::uint8_t> samples;
  int width, height;
};

std::array<PlaneRef, 3> planes_of(const FrameBuffer& f) {
  const auto& s = f.spec();
  return {PlaneRef{f.y(), s.width, s.height}, PlaneRef{f.cb(), s.chroma_width(), s.chroma_height()},
          PlaneRef{f.cr(), s.chroma_width(), s.chroma_height()}};
}

void check_frames(std::span<const FrameBuffer> frames) {
  if (frames.empty()) fail(ErrorCode::kInvalidArgument, "no frames to encode");
  for (const auto& f : frames)
    if (f.spec() != frames.front().spec()) fail(ErrorCode::kGeometryMismatch, "frames differ in geometry");
}

}  // namespace

CodecRun mock_codec(std::span<const FrameBuffer> frames, int qp) {
  check_qp(qp);
  check_frames(frames);
  const auto start = std::chrono::steady_clock::now();
  const double qstep = qstep_for_qp(qp);

  CodecRun run;
  run.qp = qp;
  run.spec = frames.front().spec();
  run.encode_command = "mock qp=" + std::to_string(qp);
  run.decode_command = "mock";
  for (const FrameBuffer& frame : frames) {
    std::array<std::vector<std::uint8_t>, 3> rec;
    const auto planes = planes_of(frame);
    for (int p = 0; p < 3; ++p) {
      const auto levels = MockBlockCoder::quantize_plane(planes[p].samples, planes[p].width, planes[p].height, qstep);
      for (std::size_t b = 0; b < levels.size(); b += 64)
        run.bitstream_bytes += MockBlockCoder::block_bytes(std::span(levels).subspan(b, 64));
      rec[p] = MockBlockCoder::reconstruct_plane(levels, planes[p].width, planes[p].height, qstep);
    }
    run.decoded.emplace_back(run.spec, std::move(rec[0]), std::move(rec[1]), std::move(rec[2]));
  }
  run.encode_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return run;
}

namespace {

constexpr char kMockMagic[4] = {'S', 'C', 'M', 'K'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t& pos) {
  if (b.size() - pos < 4) fail(ErrorCode::kTruncated, "mock bitstream truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[pos + i]) << (8 * i);
  pos += 4;
  return v;
}

}  // namespace

std::vector<std::uint8_t> mock_encode_bitstream(std::span<const FrameBuffer> frames, int qp) {
  check_qp(qp);
  check_frames(frames);
  const VideoSpec& spec = frames.front().spec();
  std::vector<std::uint8_t> out(std::begin(kMockMagic), std::end(kMockMagic));
  for (std::uint32_t v : {std::uint32_t(spec.width), std::uint32_t(spec.height), std::uint32_t(spec.fps_num),
                          std::uint32_t(spec.fps_den), std::uint32_t(frames.size()), std::uint32_t(qp)})
    put_u32(out, v);
  const double qstep = qstep_for_qp(qp);
  for (const FrameBuffer& frame : frames)
    for (const PlaneRef& p : planes_of(frame))
      for (std::int32_t level : MockBlockCoder::quantize_plane(p.samples, p.width, p.height, qstep)) {
        const auto v = static_cast<std::uint16_t>(static_cast<std::int16_t>(std::clamp(level, -32768, 32767)));
        out.push_back(static_cast<std::uint8_t>(v));
        out.push_back(static_cast<std::uint8_t>(v >> 8));
      }
  return out;
}

std::vector<FrameBuffer> mock_decode_bitstream(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || !std::equal(std::begin(kMockMagic), std::end(kMockMagic), bytes.begin()))
    fail(ErrorCode::kBadMagic, "not a mock bitstream");
  std::size_t pos = 4;
  VideoSpec spec;
  spec.width = static_cast<int>(get_u32(bytes, pos));
  spec.height = static_cast<int>(get_u32(bytes, pos));
  spec.fps_num = static_cast<int>(get_u32(bytes, pos));
  spec.fps_den = static_cast<int>(get_u32(bytes, pos));
  const std::uint32_t count = get_u32(bytes, pos);
  const int qp = static_cast<int>(get_u32(bytes, pos));
  spec.validate();
  check_qp(qp);
  const double qstep = qstep_for_qp(qp);

  std::vector<FrameBuffer> frames;
  for (std::uint32_t f = 0; f < count; ++f) {
    std::array<std::vector<std::uint8_t>, 3> rec;
    const int dims[3][2] = {{spec.width, spec.height},
                            {spec.chroma_width(), spec.chroma_height()},
                            {spec.chroma_width(), spec.chroma_height()}};
    for (int p = 0; p < 3; ++p) {
      const std::size_t n = static_cast<std::size_t>(blocks_along(dims[p][0])) * blocks_along(dims[p][1]) * 64;
      if ((bytes.size() - pos) / 2 < n) fail(ErrorCode::kTruncated, "mock bitstream truncated");
      std::vector<std::int32_t> levels(n);
      for (auto& l : levels) {
        l = static_cast<std::int16_t>(static_cast<std::uint16_t>(bytes[pos] | (bytes[pos + 1] << 8)));
        pos += 2;
      }
      rec[p] = MockBlockCoder::reconstruct_plane(levels, dims[p][0], dims[p][1], qstep);
    }
    frames.emplace_back(spec, std::move(rec[0]), std::move(rec[1]), std::move(rec[2]));
  }
  return frames;
}

double bitrate_kbps(const CodecRun& run, double fps, std::size_t frame_count) {
  if (frame_count == 0) fail(ErrorCode::kInvalidArgument, "bitrate needs at least one frame");
  if (!(fps > 0.0)) fail(ErrorCode::kInvalidArgument, "bitrate needs a positive frame rate");
  return 8.0 * static_cast<double>(run.bitstream_bytes) * fps / (static_cast<double>(frame_count) * 1000.0);
}

}  // namespace scalechain
