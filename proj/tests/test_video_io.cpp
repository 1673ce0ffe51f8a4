#include "test_support.hpp"

#include "turbseg/error.hpp"
#include "turbseg/video_io.hpp"

#include <doctest.h>
#include <opencv2/imgcodecs.hpp>

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

using namespace turbseg;
using testing::TempDir;

namespace {

std::vector<char> file_bytes(const std::filesystem::path &p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path &p, const std::vector<char> &bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

template <typename T>
void append(std::vector<char> &buf, T v) {
  char raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));  // host is little-endian (checked below)
  buf.insert(buf.end(), raw, raw + sizeof(T));
}

bool host_little_endian() {
  const std::uint32_t one = 1;
  unsigned char b = 0;
  std::memcpy(&b, &one, 1);
  return b == 1;
}

ErrorKind kind_of(const std::function<void()> &fn) {
  try {
    fn();
  } catch (const Error &e) {
    return e.kind();
  }
  FAIL("expected an Error");
  return ErrorKind::kInternal;
}

}  // namespace

TEST_CASE("flow file decodes the documented layout") {
  REQUIRE(host_little_endian());
  TempDir dir;
  std::vector<char> buf;
  append(buf, 202021.25f);
  append(buf, std::int32_t{2});
  append(buf, std::int32_t{1});
  for (float v : {1.0f, 0.0f, 2.0f, 0.5f}) append(buf, v);
  write_bytes(dir / "a.flo", buf);

  const FlowField f = read_flow_file(dir / "a.flo");
  CHECK(f.width() == 2);
  CHECK(f.height() == 1);
  CHECK(f.u(0, 0) == 1.0f);
  CHECK(f.u(1, 0) == 2.0f);
  CHECK(f.v(0, 0) == 0.0f);
  CHECK(f.v(1, 0) == 0.5f);
}

TEST_CASE("flow file with a bad magic or truncated payload is a format error") {
  TempDir dir;
  std::vector<char> buf;
  append(buf, 0.0f);
  append(buf, std::int32_t{1});
  append(buf, std::int32_t{1});
  append(buf, 0.0f);
  append(buf, 0.0f);
  write_bytes(dir / "bad.flo", buf);
  CHECK(kind_of([&] { read_flow_file(dir / "bad.flo"); }) == ErrorKind::kFormat);

  std::vector<char> trunc;
  append(trunc, 202021.25f);
  append(trunc, std::int32_t{2});
  append(trunc, std::int32_t{2});
  append(trunc, 1.0f);
  write_bytes(dir / "trunc.flo", trunc);
  CHECK(kind_of([&] { read_flow_file(dir / "trunc.flo"); }) == ErrorKind::kFormat);

  CHECK(kind_of([&] { read_flow_file(dir / "missing.flo"); }) == ErrorKind::kIo);
}

TEST_CASE("1x1 zero flow is a 20-byte file") {
  TempDir dir;
  write_flow_file(FlowField(1, 1), dir / "z.flo");
  const auto bytes = file_bytes(dir / "z.flo");
  REQUIRE(bytes.size() == 20);
  float magic = 0.0f;
  std::memcpy(&magic, bytes.data(), 4);
  CHECK(magic == 202021.25f);
  for (std::size_t i = 12; i < 20; ++i) CHECK(bytes[i] == 0);
}

TEST_CASE("flow round trip is bit exact and rewrites identical bytes") {
  TempDir dir;
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::uniform_int_distribution<int> dim(1, 9);
    FlowField f(dim(rng), dim(rng));
    // Arbitrary finite bit patterns, including subnormals and negative zero.
    std::uniform_int_distribution<std::uint32_t> bits;
    for (auto *plane : {&f.u, &f.v}) {
      for (auto &x : plane->values()) {
        float v;
        do {
          const std::uint32_t b = bits(rng);
          std::memcpy(&v, &b, 4);
        } while (!std::isfinite(v));
        x = v;
      }
    }
    write_flow_file(f, dir / "r.flo");
    const FlowField g = read_flow_file(dir / "r.flo");
    REQUIRE(g.width() == f.width());
    REQUIRE(std::memcmp(g.u.data(), f.u.data(), f.u.size() * 4) == 0);
    REQUIRE(std::memcmp(g.v.data(), f.v.data(), f.v.size() * 4) == 0);
    write_flow_file(g, dir / "r2.flo");
    CHECK(file_bytes(dir / "r.flo") == file_bytes(dir / "r2.flo"));
  }
}

TEST_CASE("non-finite flow is rejected before writing") {
  TempDir dir;
  FlowField f(2, 2);
  f.v(1, 1) = std::numeric_limits<float>::quiet_NaN();
  CHECK(kind_of([&] { write_flow_file(f, dir / "n.flo"); }) == ErrorKind::kValidation);
  CHECK_FALSE(std::filesystem::exists(dir / "n.flo"));
  f.v(1, 1) = std::numeric_limits<float>::infinity();
  CHECK(kind_of([&] { write_flow_file(f, dir / "n.flo"); }) == ErrorKind::kValidation);
}

TEST_CASE("flow write to an unwritable path is an I/O error") {
  TempDir dir;
  std::ofstream(dir / "file") << "x";
  CHECK(kind_of([&] { write_flow_file(FlowField(1, 1), dir / "file" / "sub.flo"); }) == ErrorKind::kIo);
}

TEST_CASE("load_frames: three identical images load unchanged") {
  TempDir dir;
  cv::Mat img(8, 8, CV_8UC1);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) img.at<std::uint8_t>(y, x) = static_cast<std::uint8_t>(x * 30 + y);
  for (const char *name : {"c.png", "a.png", "b.png"}) cv::imwrite((dir / name).string(), img);
  const FrameSequence seq = load_frames(dir.path());
  CHECK(seq.count() == 3);
  CHECK(seq.width() == 8);
  CHECK(seq.height() == 8);
  CHECK(seq.channels() == 1);
  for (int t = 0; t < 3; ++t) {
    CHECK(seq[t].planes[0] == seq[0].planes[0]);
    CHECK(seq[t].planes[0](3, 2) == doctest::Approx((3 * 30 + 2) / 255.0));
  }
}

TEST_CASE("load_frames: lexicographic order, 16-bit scaling and color channels") {
  TempDir dir;
  for (int i = 0; i < 3; ++i) {
    cv::Mat img(4, 5, CV_16UC3, cv::Scalar(0, 0, 0));
    // OpenCV stores BGR; blue carries the frame number.
    img.setTo(cv::Scalar(65535.0 * i / 4.0, 0, 65535));
    cv::imwrite((dir / ("f" + std::to_string(i) + ".png")).string(), img);
  }
  const FrameSequence seq = load_frames(dir.path());
  REQUIRE(seq.channels() == 3);
  for (int t = 0; t < 3; ++t) {
    CHECK(seq[t].planes[0](0, 0) == doctest::Approx(1.0));  // red
    CHECK(seq[t].planes[2](0, 0) == doctest::Approx(std::round(65535.0 * t / 4.0) / 65535.0));
  }
  const Grid<float> gray = seq.gray(0);
  CHECK(gray(1, 1) == doctest::Approx(0.299));
}

TEST_CASE("load_frames: resize to the working resolution") {
  TempDir dir;
  cv::Mat img(1080, 1920, CV_8UC3, cv::Scalar(10, 200, 255));
  for (int i = 0; i < 20; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%03d.png", i);
    cv::imwrite((dir / name).string(), img);
  }
  const FrameSequence seq = load_frames(dir.path(), Size2{432, 240});
  CHECK(seq.count() == 20);
  CHECK(seq.width() == 432);
  CHECK(seq.height() == 240);
  for (const Frame &f : seq.frames())
    for (const auto &p : f.planes)
      for (float v : p.values()) REQUIRE((v >= 0.0f && v <= 1.0f));
}

TEST_CASE("resizing keeps values inside [0, 1] on high-contrast input") {
  TempDir dir;
  std::mt19937_64 rng(3);
  for (int i = 0; i < 3; ++i) {
    cv::Mat img(37, 53, CV_8UC1);
    for (int y = 0; y < img.rows; ++y)
      for (int x = 0; x < img.cols; ++x) img.at<std::uint8_t>(y, x) = (rng() & 1) ? 255 : 0;
    cv::imwrite((dir / ("i" + std::to_string(i) + ".png")).string(), img);
  }
  for (Size2 s : {Size2{16, 16}, Size2{100, 71}, Size2{7, 5}}) {
    const FrameSequence seq = load_frames(dir.path(), s);
    for (const Frame &f : seq.frames())
      for (float v : f.planes[0].values()) REQUIRE((v >= 0.0f && v <= 1.0f));
  }
}

TEST_CASE("load_frames: error cases") {
  TempDir dir;
  CHECK(kind_of([&] { load_frames(dir / "nope"); }) == ErrorKind::kInput);

  cv::Mat a(8, 8, CV_8UC1, cv::Scalar(1));
  cv::imwrite((dir / "1.png").string(), a);
  cv::imwrite((dir / "2.png").string(), a);
  CHECK(kind_of([&] { load_frames(dir.path()); }) == ErrorKind::kInput);

  cv::Mat b(9, 8, CV_8UC1, cv::Scalar(1));
  cv::imwrite((dir / "3.png").string(), b);
  CHECK(kind_of([&] { load_frames(dir.path()); }) == ErrorKind::kDimensionMismatch);
  CHECK(load_frames(dir.path(), Size2{8, 8}).count() == 3);
}

TEST_CASE("load_frames is deterministic") {
  TempDir dir;
  std::mt19937_64 rng(5);
  for (int i = 0; i < 4; ++i) {
    cv::Mat img(12, 10, CV_8UC3);
    for (int y = 0; y < 12; ++y)
      for (int x = 0; x < 10; ++x)
        img.at<cv::Vec3b>(y, x) = cv::Vec3b(static_cast<uchar>(rng()), static_cast<uchar>(rng()),
                                            static_cast<uchar>(rng()));
    cv::imwrite((dir / ("f" + std::to_string(i) + ".png")).string(), img);
  }
  const FrameSequence a = load_frames(dir.path(), Size2{7, 9});
  const FrameSequence b = load_frames(dir.path(), Size2{7, 9});
  for (int t = 0; t < a.count(); ++t)
    for (int c = 0; c < 3; ++c) CHECK(a[t].planes[c] == b[t].planes[c]);
}

TEST_CASE("FrameSequence rejects out-of-range values") {
  std::vector<Frame> frames(3);
  for (auto &f : frames) f.planes.emplace_back(4, 4, 0.5f);
  frames[1].planes[0](2, 2) = 1.5f;
  CHECK(kind_of([&] { FrameSequence s(frames); }) == ErrorKind::kValidation);
  frames[1].planes[0](2, 2) = std::numeric_limits<float>::quiet_NaN();
  CHECK(kind_of([&] { FrameSequence s(frames); }) == ErrorKind::kValidation);
}

TEST_CASE("mask images: binary and soft encodings") {
  TempDir dir;
  MaskImage ones = make_binary_mask(4, 4);
  for (auto &v : ones.values.values()) v = 1.0;
  write_mask_image(ones, dir / "ones.png");
  cv::Mat img = cv::imread((dir / "ones.png").string(), cv::IMREAD_UNCHANGED);
  REQUIRE(img.type() == CV_8UC1);
  CHECK(cv::countNonZero(img == 255) == 16);

  write_mask_image(make_binary_mask(4, 4), dir / "zeros.png");
  img = cv::imread((dir / "zeros.png").string(), cv::IMREAD_UNCHANGED);
  CHECK(cv::countNonZero(img) == 0);

  MaskImage soft;
  soft.mode = MaskMode::kSoft;
  soft.values = Grid<double>(3, 1, 0.5);
  soft.values(1, 0) = 0.25;
  soft.values(2, 0) = 1.0;
  write_mask_image(soft, dir / "soft.png");
  img = cv::imread((dir / "soft.png").string(), cv::IMREAD_UNCHANGED);
  CHECK(static_cast<int>(img.at<std::uint8_t>(0, 0)) == 128);  // 127.5 rounds up
  CHECK(static_cast<int>(img.at<std::uint8_t>(0, 1)) == 64);   // 63.75
  CHECK(static_cast<int>(img.at<std::uint8_t>(0, 2)) == 255);

  const MaskImage back = read_mask_image(dir / "ones.png", 3, 7);
  CHECK(back.object_id == 3);
  CHECK(back.frame_index == 7);
  CHECK(back.area() == 16);
}

TEST_CASE("mask validation") {
  MaskImage m = make_binary_mask(2, 2);
  m.values(0, 0) = 0.5;
  CHECK(kind_of([&] { m.validate(); }) == ErrorKind::kValidation);
  m.mode = MaskMode::kSoft;
  CHECK_NOTHROW(m.validate());
  m.values(0, 0) = 1.2;
  CHECK(kind_of([&] { m.validate(); }) == ErrorKind::kValidation);
  m.values(0, 0) = 0.0;
  m.object_id = 0;
  CHECK(kind_of([&] { m.validate(); }) == ErrorKind::kValidation);
}
