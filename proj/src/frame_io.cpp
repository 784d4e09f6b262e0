#include "scalechain/frame_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "scalechain/error.hpp"

namespace scalechain {

namespace {

constexpr std::string_view kY4mMagic = "YUV4MPEG2";
constexpr std::string_view kFrameMarker = "FRAME";

bool parse_int(std::string_view s, int& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

bool is_420_tag(std::string_view tag) {
  return tag == "420" || tag == "420jpeg" || tag == "420paldv" || tag == "420mpeg2";
}

void read_exact(std::istream& in, std::uint8_t* dst, std::size_t n, const char* what) {
  in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n)
    fail(ErrorCode::kTruncated, std::string(what) + ": stream ended after " +
                                    std::to_string(in.gcount()) + " of " + std::to_string(n) +
                                    " bytes");
}

}  // namespace

void VideoSpec::validate() const {
  if (width < 2 || height < 2)
    fail(ErrorCode::kInvalidArgument,
         "frame size " + std::to_string(width) + "x" + std::to_string(height) + " too small");
  if (width % 2 != 0 || height % 2 != 0)
    fail(ErrorCode::kOddDimensions, "4:2:0 needs even dimensions, got " + std::to_string(width) +
                                        "x" + std::to_string(height));
  if (fps_num <= 0 || fps_den < 1)
    fail(ErrorCode::kInvalidArgument,
         "invalid frame rate " + std::to_string(fps_num) + ":" + std::to_string(fps_den));
  if (bit_depth != 8) fail(ErrorCode::kUnsupportedFormat, "only 8-bit video is supported");
}

FrameBuffer::FrameBuffer(VideoSpec spec, std::vector<std::uint8_t> y, std::vector<std::uint8_t> cb,
                         std::vector<std::uint8_t> cr)
    : spec_(spec), y_(std::move(y)), cb_(std::move(cb)), cr_(std::move(cr)) {
  spec_.validate();
  if (y_.size() != spec_.luma_size() || cb_.size() != spec_.chroma_size() ||
      cr_.size() != spec_.chroma_size())
    fail(ErrorCode::kShapeMismatch, "plane lengths do not match " + std::to_string(spec_.width) +
                                        "x" + std::to_string(spec_.height) + " 4:2:0 geometry");
}

FrameBuffer FrameBuffer::filled(const VideoSpec& spec, std::uint8_t y, std::uint8_t cb,
                                std::uint8_t cr) {
  spec.validate();
  return FrameBuffer(spec, std::vector<std::uint8_t>(spec.luma_size(), y),
                     std::vector<std::uint8_t>(spec.chroma_size(), cb),
                     std::vector<std::uint8_t>(spec.chroma_size(), cr));
}

Y4mHeader parse_y4m_header(std::string_view bytes) {
  if (bytes.substr(0, kY4mMagic.size()) != kY4mMagic ||
      (bytes.size() > kY4mMagic.size() && bytes[kY4mMagic.size()] != ' ' &&
       bytes[kY4mMagic.size()] != '\n'))
    fail(ErrorCode::kMalformedHeader, "missing YUV4MPEG2 signature");
  const std::size_t eol = bytes.find('\n');
  if (eol == std::string_view::npos) fail(ErrorCode::kMalformedHeader, "unterminated header line");

  Y4mHeader header;
  header.length = eol + 1;
  bool have_w = false, have_h = false, have_f = false;
  std::string_view rest = bytes.substr(kY4mMagic.size(), eol - kY4mMagic.size());
  while (!rest.empty()) {
    while (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
    if (rest.empty()) break;
    const std::size_t end = std::min(rest.find(' '), rest.size());
    const std::string_view token = rest.substr(0, end);
    rest.remove_prefix(end);

    const char tag = token.front();
    const std::string_view value = token.substr(1);
    switch (tag) {
      case 'W':
        if (!parse_int(value, header.spec.width)) fail(ErrorCode::kMalformedHeader, "bad W token");
        have_w = true;
        break;
      case 'H':
        if (!parse_int(value, header.spec.height)) fail(ErrorCode::kMalformedHeader, "bad H token");
        have_h = true;
        break;
      case 'F': {
        const std::size_t colon = value.find(':');
        if (colon == std::string_view::npos || !parse_int(value.substr(0, colon), header.spec.fps_num) ||
            !parse_int(value.substr(colon + 1), header.spec.fps_den) || header.spec.fps_num <= 0 ||
            header.spec.fps_den <= 0)
          fail(ErrorCode::kMalformedHeader, "bad F token '" + std::string(token) + "'");
        have_f = true;
        break;
      }
      case 'I':
        header.interlace = std::string(value);
        break;
      case 'A':
        header.aspect = std::string(value);
        break;
      case 'C':
        if (!is_420_tag(value))
          fail(ErrorCode::kUnsupportedFormat, "unsupported chroma tag C" + std::string(value));
        header.chroma_tag = std::string(value);
        break;
      case 'X':
        break;
      default:
        fail(ErrorCode::kMalformedHeader, "unknown header token '" + std::string(token) + "'");
    }
  }
  if (!have_w || !have_h || !have_f)
    fail(ErrorCode::kMalformedHeader, "header must carry W, H and F tokens");
  if (header.interlace != "p" && header.interlace != "?")
    fail(ErrorCode::kUnsupportedFormat, "interlaced content is not supported");
  header.spec.validate();
  return header;
}

std::string format_y4m_header(const VideoSpec& spec) {
  return std::string(kY4mMagic) + " W" + std::to_string(spec.width) + " H" +
         std::to_string(spec.height) + " F" + std::to_string(spec.fps_num) + ":" +
         std::to_string(spec.fps_den) + " Ip A1:1 C420jpeg\n";
}

std::optional<FrameBuffer> read_frame(std::istream& in, const VideoSpec& spec, Container container) {
  spec.validate();
  if (in.peek() == std::char_traits<char>::eof()) return std::nullopt;

  if (container == Container::kY4m) {
    std::string line;
    if (!std::getline(in, line) || in.eof())
      fail(ErrorCode::kTruncated, "stream ended inside FRAME marker");
    if (line.compare(0, kFrameMarker.size(), kFrameMarker) != 0 ||
        (line.size() > kFrameMarker.size() && line[kFrameMarker.size()] != ' '))
      fail(ErrorCode::kMissingFrameMarker, "expected FRAME marker");
  }

  std::vector<std::uint8_t> y(spec.luma_size()), cb(spec.chroma_size()), cr(spec.chroma_size());
  read_exact(in, y.data(), y.size(), "Y plane");
  read_exact(in, cb.data(), cb.size(), "Cb plane");
  read_exact(in, cr.data(), cr.size(), "Cr plane");
  return FrameBuffer(spec, std::move(y), std::move(cb), std::move(cr));
}

std::size_t write_frame(std::ostream& out, const FrameBuffer& frame, Container container) {
  std::size_t written = 0;
  if (container == Container::kY4m) {
    out << kFrameMarker << '\n';
    written += kFrameMarker.size() + 1;
  }
  for (auto plane : {frame.y(), frame.cb(), frame.cr()}) {
    out.write(reinterpret_cast<const char*>(plane.data()), static_cast<std::streamsize>(plane.size()));
    written += plane.size();
  }
  if (!out) fail(ErrorCode::kIo, "write failed");
  return written;
}

Y4mReader::Y4mReader(std::istream& in) : in_(in) {
  std::string line;
  if (!std::getline(in_, line)) fail(ErrorCode::kMalformedHeader, "empty stream");
  if (in_.eof()) fail(ErrorCode::kMalformedHeader, "unterminated header line");
  line.push_back('\n');
  header_ = parse_y4m_header(line);
}

std::optional<FrameBuffer> Y4mReader::next() { return read_frame(in_, header_.spec, Container::kY4m); }

Y4mWriter::Y4mWriter(std::ostream& out, const VideoSpec& spec) : out_(out), spec_(spec) {
  spec_.validate();
  out_ << format_y4m_header(spec_);
}

std::size_t Y4mWriter::write(const FrameBuffer& frame) {
  if (frame.width() != spec_.width || frame.height() != spec_.height)
    fail(ErrorCode::kGeometryMismatch, "frame geometry differs from stream header");
  return write_frame(out_, frame, Container::kY4m);
}

Sequence read_sequence(const std::string& path, std::optional<VideoSpec> raw_spec,
                       std::size_t max_frames) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path);
  Sequence seq;
  auto take = [&](auto&& next) {
    while (max_frames == 0 || seq.frames.size() < max_frames) {
      auto frame = next();
      if (!frame) break;
      seq.frames.push_back(std::move(*frame));
    }
  };
  if (raw_spec) {
    seq.spec = *raw_spec;
    take([&] { return read_frame(in, seq.spec, Container::kRaw); });
  } else {
    Y4mReader reader(in);
    seq.spec = reader.spec();
    take([&] { return reader.next(); });
  }
  return seq;
}

void write_sequence(const std::string& path, const VideoSpec& spec,
                    std::span<const FrameBuffer> frames, Container container) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot create " + path);
  if (container == Container::kY4m) {
    Y4mWriter writer(out, spec);
    for (const auto& f : frames) writer.write(f);
  } else {
    for (const auto& f : frames) write_frame(out, f, Container::kRaw);
  }
  out.flush();
  if (!out) fail(ErrorCode::kIo, "write failed for " + path);
}

void write_raw_yuv(const std::string& path, std::span<const FrameBuffer> frames) {
  VideoSpec spec = frames.empty() ? VideoSpec{2, 2} : frames.front().spec();
  write_sequence(path, spec, frames, Container::kRaw);
}

std::uint8_t quantize_sample(double v) {
  if (!(v > 0.0)) return 0;  // also maps NaN to 0
  const double r = std::round(v);
  return r >= 255.0 ? 255 : static_cast<std::uint8_t>(r);
}

Tensor plane_to_tensor(std::span<const std::uint8_t> plane, int width, int height) {
  if (width < 0 || height < 0 || plane.size() != static_cast<std::size_t>(width) * height)
    fail(ErrorCode::kShapeMismatch, "plane length does not match " + std::to_string(width) + "x" +
                                        std::to_string(height));
  Tensor t(1, height, width);
  auto dst = t.data();
  for (std::size_t i = 0; i < plane.size(); ++i) dst[i] = static_cast<float>(plane[i] / 255.0);
  return t;
}

std::vector<std::uint8_t> tensor_to_plane(const Tensor& t) {
  if (t.channels() != 1) fail(ErrorCode::kShapeMismatch, "tensor_to_plane expects one channel");
  std::vector<std::uint8_t> plane(t.size());
  auto src = t.data();
  for (std::size_t i = 0; i < plane.size(); ++i)
    plane[i] = quantize_sample(static_cast<double>(src[i]) * 255.0);
  return plane;
}

}  // namespace scalechain
