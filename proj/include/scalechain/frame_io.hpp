#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "scalechain/tensor.hpp"

namespace scalechain {

enum class ChromaFormat { k420 };

struct VideoSpec {
  int width = 0;
  int height = 0;
  int fps_num = 30;
  int fps_den = 1;
  int bit_depth = 8;
  ChromaFormat chroma = ChromaFormat::k420;

  int chroma_width() const { return width / 2; }
  int chroma_height() const { return height / 2; }
  std::size_t luma_size() const { return static_cast<std::size_t>(width) * height; }
  std::size_t chroma_size() const {
    return static_cast<std::size_t>(chroma_width()) * chroma_height();
  }
  // Y + Cb + Cr bytes, i.e. 1.5 * width * height.
  std::size_t frame_bytes() const { return luma_size() + 2 * chroma_size(); }
  double fps() const { return static_cast<double>(fps_num) / fps_den; }

  // Throws OddDimensions / InvalidArgument / UnsupportedFormat.
  void validate() const;

  VideoSpec with_size(int w, int h) const {
    VideoSpec s = *this;
    s.width = w;
    s.height = h;
    return s;
  }

  bool operator==(const VideoSpec&) const = default;
};

// One 8-bit 4:2:0 frame. Plane sizes are checked at construction and the
// object is not mutated afterwards.
class FrameBuffer {
 public:
  FrameBuffer() = default;
  FrameBuffer(VideoSpec spec, std::vector<std::uint8_t> y, std::vector<std::uint8_t> cb,
              std::vector<std::uint8_t> cr);

  // Frame with every sample of each plane set to the given values.
  static FrameBuffer filled(const VideoSpec& spec, std::uint8_t y, std::uint8_t cb = 128,
                            std::uint8_t cr = 128);

  const VideoSpec& spec() const { return spec_; }
  int width() const { return spec_.width; }
  int height() const { return spec_.height; }
  std::span<const std::uint8_t> y() const { return y_; }
  std::span<const std::uint8_t> cb() const { return cb_; }
  std::span<const std::uint8_t> cr() const { return cr_; }

  bool operator==(const FrameBuffer& other) const {
    return spec_ == other.spec_ && y_ == other.y_ && cb_ == other.cb_ && cr_ == other.cr_;
  }

 private:
  VideoSpec spec_;
  std::vector<std::uint8_t> y_, cb_, cr_;
};

// Parsed stream header. `length` counts the bytes of the header line
// including its terminating newline.
struct Y4mHeader {
  VideoSpec spec;
  std::size_t length = 0;
  std::string interlace = "p";
  std::string aspect = "1:1";
  std::string chroma_tag = "420jpeg";
};

Y4mHeader parse_y4m_header(std::string_view bytes);
std::string format_y4m_header(const VideoSpec& spec);

enum class Container { kY4m, kRaw };

// Reads one frame. Returns nullopt on a clean end of stream (no bytes left
// before the frame); throws Truncated on a partial frame.
std::optional<FrameBuffer> read_frame(std::istream& in, const VideoSpec& spec, Container container);

// Returns the number of bytes written including the FRAME marker for Y4M.
std::size_t write_frame(std::ostream& out, const FrameBuffer& frame, Container container);

class Y4mReader {
 public:
  explicit Y4mReader(std::istream& in);

  const Y4mHeader& header() const { return header_; }
  const VideoSpec& spec() const { return header_.spec; }
  std::optional<FrameBuffer> next();

 private:
  std::istream& in_;
  Y4mHeader header_;
};

class Y4mWriter {
 public:
  Y4mWriter(std::ostream& out, const VideoSpec& spec);

  std::size_t write(const FrameBuffer& frame);

 private:
  std::ostream& out_;
  VideoSpec spec_;
};

struct Sequence {
  VideoSpec spec;
  std::vector<FrameBuffer> frames;
};

// File helpers. For Container::kRaw the spec must be supplied.
Sequence read_sequence(const std::string& path, std::optional<VideoSpec> raw_spec = std::nullopt,
                       std::size_t max_frames = 0);
void write_sequence(const std::string& path, const VideoSpec& spec,
                    std::span<const FrameBuffer> frames, Container container = Container::kY4m);
void write_raw_yuv(const std::string& path, std::span<const FrameBuffer> frames);

// v -> v/255 into a (1,h,w) tensor.
Tensor plane_to_tensor(std::span<const std::uint8_t> plane, int width, int height);
// Channel 0 only: v*255, rounded half away from zero, clamped to [0,255].
std::vector<std::uint8_t> tensor_to_plane(const Tensor& t);
std::uint8_t quantize_sample(double v);

}  // namespace scalechain
