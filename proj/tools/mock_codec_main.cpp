// Stand-alone encoder/decoder around the in-process mock codec, so the
// external codec path can be exercised without a real encoder installed.
//
//   scalechain-mockcodec enc --qp 32 --width 128 --height 128 in.yuv out.bin
//   scalechain-mockcodec dec out.bin decoded.yuv

#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>

#include <CLI11.hpp>

#include "scalechain/codec.hpp"
#include "scalechain/error.hpp"
#include "scalechain/frame_io.hpp"

using namespace scalechain;

int main(int argc, char** argv) {
  CLI::App app{"Mock DCT codec as a command-line encoder/decoder", "scalechain-mockcodec"};
  app.require_subcommand(1);

  auto* enc = app.add_subcommand("enc", "Encode raw .yuv or .y4m to a mock bitstream");
  std::string enc_in, enc_out;
  int qp = 32, width = 0, height = 0;
  enc->add_option("--qp", qp)->required();
  enc->add_option("--width", width, "Width of raw input");
  enc->add_option("--height", height, "Height of raw input");
  enc->add_option("input", enc_in)->required();
  enc->add_option("output", enc_out)->required();

  auto* dec = app.add_subcommand("dec", "Decode a mock bitstream to raw .yuv or .y4m");
  std::string dec_in, dec_out;
  dec->add_option("input", dec_in)->required();
  dec->add_option("output", dec_out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*enc) {
      std::optional<VideoSpec> raw;
      if (width > 0 || height > 0) {
        VideoSpec s;
        s.width = width;
        s.height = height;
        raw = s;
      }
      Sequence seq = read_sequence(enc_in, raw);
      auto bytes = mock_encode_bitstream(seq.frames, qp);
      std::ofstream out(enc_out, std::ios::binary);
      out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
      if (!out) fail(ErrorCode::kIo, "cannot write " + enc_out);
    } else {
      std::ifstream in(dec_in, std::ios::binary);
      if (!in) fail(ErrorCode::kIo, "cannot open " + dec_in);
      std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      auto frames = mock_decode_bitstream(bytes);
      if (frames.empty()) fail(ErrorCode::kTruncated, "bitstream holds no frames");
      Container c = std::filesystem::path(dec_out).extension() == ".y4m" ? Container::kY4m : Container::kRaw;
      write_sequence(dec_out, frames.front().spec(), frames, c);
    }
  } catch (const std::exception& e) {
    std::cerr << "scalechain-mockcodec: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
