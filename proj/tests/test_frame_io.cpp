#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "scalechain/error.hpp"
#include "scalechain/frame_io.hpp"

using namespace scalechain;

namespace {

VideoSpec spec_of(int w, int h) {
  VideoSpec s;
  s.width = w;
  s.height = h;
  return s;
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

}  // namespace

TEST_SUITE("frame_io") {
  TEST_CASE("header parse accepts the 4:2:0 tags and reads geometry") {
    for (const char* tag : {"", " C420", " C420jpeg", " C420paldv", " C420mpeg2"}) {
      std::string text = std::string("YUV4MPEG2 W352 H288 F25:1 Ip A1:1") + tag + "\n";
      Y4mHeader h = parse_y4m_header(text);
      CHECK(h.spec.width == 352);
      CHECK(h.spec.height == 288);
      CHECK(h.spec.fps_num == 25);
      CHECK(h.spec.fps_den == 1);
      CHECK(h.length == text.size());
    }
  }

  TEST_CASE("header parse errors") {
    CHECK(code_of([] { parse_y4m_header("YUV4MPEG W2 H2 F1:1\n"); }) == ErrorCode::kMalformedHeader);
    CHECK(code_of([] { parse_y4m_header("YUV4MPEG2 W16 H16 F30:1"); }) == ErrorCode::kMalformedHeader);
    CHECK(code_of([] { parse_y4m_header("YUV4MPEG2 W16 F30:1\n"); }) == ErrorCode::kMalformedHeader);
    CHECK(code_of([] { parse_y4m_header("YUV4MPEG2 W16 H16 F30:1 C444\n"); }) == ErrorCode::kUnsupportedFormat);
    CHECK(code_of([] { parse_y4m_header("YUV4MPEG2 W16 H16 F30:1 It\n"); }) == ErrorCode::kUnsupportedFormat);
    CHECK(code_of([] { parse_y4m_header("YUV4MPEG2 W15 H16 F30:1\n"); }) == ErrorCode::kOddDimensions);
    CHECK(code_of([] { parse_y4m_header("YUV4MPEG2 Wx H16 F30:1\n"); }) == ErrorCode::kMalformedHeader);
  }

  TEST_CASE("formatted header parses back") {
    VideoSpec s = spec_of(64, 32);
    s.fps_num = 30000;
    s.fps_den = 1001;
    Y4mHeader h = parse_y4m_header(format_y4m_header(s));
    CHECK(h.spec == s);
  }

  TEST_CASE("Y4M and raw round trips are byte exact") {
    std::mt19937 rng(7);
    VideoSpec s = spec_of(48, 32);
    std::vector<FrameBuffer> frames;
    for (int i = 0; i < 3; ++i) frames.push_back(oracle::random_frame(rng, 48, 32));
    oracle::TempDir dir;

    write_sequence(dir / "a.y4m", s, frames, Container::kY4m);
    Sequence back = read_sequence(dir / "a.y4m");
    CHECK(back.spec == s);
    REQUIRE(back.frames.size() == 3);
    for (int i = 0; i < 3; ++i) CHECK(back.frames[i] == frames[i]);
    CHECK(std::filesystem::file_size(dir / "a.y4m") == format_y4m_header(s).size() + 3 * (6 + s.frame_bytes()));

    write_raw_yuv(dir / "a.yuv", frames);
    CHECK(std::filesystem::file_size(dir / "a.yuv") == 3 * s.frame_bytes());
    Sequence raw = read_sequence(dir / "a.yuv", s);
    REQUIRE(raw.frames.size() == 3);
    CHECK(raw.frames[2] == frames[2]);

    Sequence limited = read_sequence(dir / "a.y4m", std::nullopt, 2);
    CHECK(limited.frames.size() == 2);
  }

  TEST_CASE("truncated and malformed frame data") {
    VideoSpec s = spec_of(16, 16);
    FrameBuffer f = FrameBuffer::filled(s, 100);
    std::ostringstream out;
    Y4mWriter w(out, s);
    w.write(f);
    std::string bytes = out.str();

    std::istringstream cut(bytes.substr(0, bytes.size() - 5));
    Y4mReader r(cut);
    CHECK(code_of([&] { r.next(); }) == ErrorCode::kTruncated);

    std::string bad = bytes;
    bad.replace(bad.find("FRAME"), 5, "FRAMX");
    std::istringstream bin(bad);
    Y4mReader r2(bin);
    CHECK(code_of([&] { r2.next(); }) == ErrorCode::kMissingFrameMarker);

    std::istringstream whole(bytes);
    Y4mReader r3(whole);
    CHECK(r3.next().has_value());
    CHECK_FALSE(r3.next().has_value());

    std::istringstream raw(std::string(s.frame_bytes() - 1, '\0'));
    CHECK(code_of([&] { read_frame(raw, s, Container::kRaw); }) == ErrorCode::kTruncated);
  }

  TEST_CASE("frame marker parameters are skipped") {
    VideoSpec s = spec_of(2, 2);
    std::string data = format_y4m_header(s) + "FRAME Ixyz\n" + std::string(6, 'a');
    std::istringstream in(data);
    Y4mReader r(in);
    auto f = r.next();
    REQUIRE(f.has_value());
    CHECK(f->y()[0] == 'a');
  }

  TEST_CASE("geometry validation") {
    CHECK(code_of([] { spec_of(0, 16).validate(); }) == ErrorCode::kInvalidArgument);
    CHECK(code_of([] { spec_of(17, 16).validate(); }) == ErrorCode::kOddDimensions);
    VideoSpec s = spec_of(4, 4);
    CHECK(code_of([&] { FrameBuffer(s, std::vector<std::uint8_t>(15), std::vector<std::uint8_t>(4),
                                    std::vector<std::uint8_t>(4)); }) == ErrorCode::kShapeMismatch);
    CHECK(s.frame_bytes() == 24);
  }

  TEST_CASE("plane and tensor conversions") {
    std::vector<std::uint8_t> plane{0, 1, 128, 255, 17, 200};
    Tensor t = plane_to_tensor(plane, 3, 2);
    CHECK(t.channels() == 1);
    CHECK(t.at(0, 1, 0) == doctest::Approx(1.0f));
    CHECK(tensor_to_plane(t) == plane);
    CHECK(quantize_sample(-3.0) == 0);
    CHECK(quantize_sample(255.6) == 255);
    CHECK(quantize_sample(127.5) == 128);
    CHECK(quantize_sample(std::nan("")) == 0);
  }
}
