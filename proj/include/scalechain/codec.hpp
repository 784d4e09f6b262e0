#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "scalechain/frame_io.hpp"

namespace scalechain {

struct QpProtocol {
  std::vector<int> qp_conv{28, 30, 32, 34, 36, 38, 40, 42, 44, 46, 48};
  std::vector<int> qp_scaled{20, 22, 24, 26, 28, 30, 32, 34, 36, 38, 40};

  void validate() const;
};

struct CodecRun {
  int qp = 0;
  VideoSpec spec;
  std::uint64_t bitstream_bytes = 0;
  std::vector<FrameBuffer> decoded;
  double encode_seconds = 0.0;
  double decode_seconds = 0.0;
  std::string encode_command;
  std::string decode_command;
};

// Command templates for an external encoder/decoder pair. Placeholders:
// {input} {output} {qp} {width} {height} {fps} {frames}. The encoder reads
// {input} (raw .yuv, or .y4m when input_y4m is set) and writes the bitstream
// to {output}; the decoder reads the bitstream from {input} and writes
// decoded frames to {output} as raw .yuv or Y4M.
struct EncoderTemplate {
  std::string encode;
  std::string decode;
  std::string bitstream_suffix = ".bin";
  bool input_y4m = false;
};

// Whitespace-separated argv with every placeholder replaced. Unknown or
// unterminated placeholders throw InvalidArgument.
std::vector<std::string> substitute_template(const std::string& tmpl,
                                             const std::map<std::string, std::string>& values);

struct ProcessResult {
  int exit_code = -1;
  double seconds = 0.0;
};

// Runs argv (PATH lookup, no shell). Stdout/stderr of the child go to
// `log_path` when non-empty.
ProcessResult run_process(const std::vector<std::string>& argv, const std::string& log_path = {});

std::string join_command(const std::vector<std::string>& argv);

struct ExternalCodecOptions {
  // Keep temporary files instead of removing them.
  bool keep = false;
  // Parent of the per-run scratch directory; system temp dir when empty.
  std::string work_dir;
};

CodecRun run_external_codec(std::span<const FrameBuffer> frames, int qp, const EncoderTemplate& tmpl,
                            const ExternalCodecOptions& opts = {});

// ---------------------------------------------------------------------------
// Hermetic stand-in codec: intra-only 8x8 DCT-II with uniform quantization,
// Qstep = 2^((qp-4)/6). The rate is an entropy estimate, not a real
// bitstream.

double qstep_for_qp(int qp);

struct MockBlockCoder {
  // Quantizes one plane block-wise; returns quantized coefficients, blocks
  // in raster order, 64 coefficients per block in row-major frequency order.
  static std::vector<std::int32_t> quantize_plane(std::span<const std::uint8_t> plane, int width,
                                                  int height, double qstep);
  static std::vector<std::uint8_t> reconstruct_plane(std::span<const std::int32_t> levels, int width,
                                                     int height, double qstep);
  // Estimated bytes for one block of 64 levels.
  static std::uint64_t block_bytes(std::span<const std::int32_t> levels);
};

void forward_dct8x8(const double in[64], double out[64]);
void inverse_dct8x8(const double in[64], double out[64]);

CodecRun mock_codec(std::span<const FrameBuffer> frames, int qp);

// Mock bitstream file format used by the scalechain-mockcodec tool: header
// plus the quantized levels (int16). Decodes to exactly the frames
// mock_codec reconstructs.
std::vector<std::uint8_t> mock_encode_bitstream(std::span<const FrameBuffer> frames, int qp);
std::vector<FrameBuffer> mock_decode_bitstream(std::span<const std::uint8_t> bytes);

double bitrate_kbps(const CodecRun& run, double fps, std::size_t frame_count);

}  // namespace scalechain
