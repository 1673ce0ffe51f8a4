#include "turbseg/video_io.hpp"

#include "turbseg/error.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <string>

namespace fs = std::filesystem;

namespace turbseg {

namespace {

const std::set<std::string> kRasterExtensions = {".png", ".tif", ".tiff", ".bmp",
                                                 ".pgm", ".ppm", ".pnm"};

bool is_raster(const fs::path &p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return kRasterExtensions.count(ext) > 0;
}

Frame frame_from_mat(const cv::Mat &raw) {
  double scale = 1.0;
  switch (raw.depth()) {
    case CV_8U: scale = 1.0 / 255.0; break;
    case CV_16U: scale = 1.0 / 65535.0; break;
    case CV_32F:
    case CV_64F: scale = 1.0; break;
    default:
      throw Error(ErrorKind::kFormat, "unsupported image bit depth");
  }
  cv::Mat img;
  raw.convertTo(img, CV_32F, scale);
  std::vector<cv::Mat> channels;
  cv::split(img, channels);
  Frame frame;
  if (channels.size() == 1) {
    frame.planes.resize(1);
  } else if (channels.size() == 3 || channels.size() == 4) {
    // OpenCV stores BGR(A); keep R, G, B and drop alpha.
    frame.planes.resize(3);
    std::swap(channels[0], channels[2]);
    channels.resize(3);
  } else {
    throw Error(ErrorKind::kFormat, "unsupported channel count");
  }
  for (std::size_t c = 0; c < frame.planes.size(); ++c) {
    Grid<float> plane(img.cols, img.rows);
    for (int y = 0; y < img.rows; ++y) {
      const float *row = channels[c].ptr<float>(y);
      for (int x = 0; x < img.cols; ++x) plane(x, y) = std::clamp(row[x], 0.0f, 1.0f);
    }
    frame.planes[c] = std::move(plane);
  }
  return frame;
}

template <typename T>
void put_le(std::vector<char> &buf, T value) {
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  buf.insert(buf.end(), bytes.begin(), bytes.end());
}

template <typename T>
T get_le(const char *p) {
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

void write_mat(const cv::Mat &img, const fs::path &path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), img);
  } catch (const cv::Exception &e) {
    throw Error(ErrorKind::kIo, "cannot write " + path.string() + ": " + e.what());
  }
  if (!ok) throw Error(ErrorKind::kIo, "cannot write " + path.string());
}

}  // namespace

Grid<float> to_gray(const Frame &frame) {
  if (frame.channels() == 1) return frame.planes.front();
  if (frame.channels() != 3) throw Error(ErrorKind::kValidation, "frame must have 1 or 3 channels");
  Grid<float> gray(frame.width(), frame.height());
  const auto r = frame.planes[0].values();
  const auto g = frame.planes[1].values();
  const auto b = frame.planes[2].values();
  auto out = gray.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<float>(0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i]);
  }
  return gray;
}

FrameSequence::FrameSequence(std::vector<Frame> frames) : frames_(std::move(frames)) {
  if (frames_.size() < 3) {
    throw Error(ErrorKind::kInput, "a sequence needs at least 3 frames, got " +
                                       std::to_string(frames_.size()));
  }
  const Frame &first = frames_.front();
  width_ = first.width();
  height_ = first.height();
  channels_ = first.channels();
  if (channels_ != 1 && channels_ != 3) {
    throw Error(ErrorKind::kValidation, "frames must have 1 or 3 channels");
  }
  for (const Frame &f : frames_) {
    if (f.channels() != channels_) {
      throw Error(ErrorKind::kDimensionMismatch, "frames disagree in channel count");
    }
    for (const auto &plane : f.planes) {
      if (plane.width() != width_ || plane.height() != height_) {
        throw Error(ErrorKind::kDimensionMismatch, "frames disagree in size");
      }
      for (float v : plane.values()) {
        if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
          throw Error(ErrorKind::kValidation, "frame values must be finite and in [0, 1]");
        }
      }
    }
  }
}

FrameSequence load_frames(const fs::path &directory, std::optional<Size2> resize_to) {
  if (!fs::is_directory(directory)) {
    throw Error(ErrorKind::kInput, "frame directory not found: " + directory.string());
  }
  std::vector<fs::path> files;
  for (const auto &entry : fs::directory_iterator(directory)) {
    if (entry.is_regular_file() && is_raster(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const fs::path &a, const fs::path &b) {
              return a.filename().string() < b.filename().string();
            });
  if (files.size() < 3) {
    throw Error(ErrorKind::kInput, "need at least 3 frames in " + directory.string() +
                                       ", found " + std::to_string(files.size()));
  }
  if (resize_to && (resize_to->width < 1 || resize_to->height < 1)) {
    throw Error(ErrorKind::kConfig, "resize target must be positive");
  }

  std::vector<Frame> frames;
  frames.reserve(files.size());
  for (const auto &file : files) {
    cv::Mat raw = cv::imread(file.string(), cv::IMREAD_ANYDEPTH | cv::IMREAD_ANYCOLOR);
    if (raw.empty()) throw Error(ErrorKind::kFormat, "cannot decode image " + file.string());
    if (resize_to && (raw.cols != resize_to->width || raw.rows != resize_to->height)) {
      cv::Mat resized;
      cv::Mat as_float;
      raw.convertTo(as_float, CV_32F);
      cv::resize(as_float, resized, cv::Size(resize_to->width, resize_to->height), 0, 0,
                 cv::INTER_LINEAR);
      // Keep the source depth's scale so frame_from_mat normalizes correctly.
      if (raw.depth() == CV_8U) {
        resized.convertTo(resized, CV_32F, 1.0 / 255.0);
      } else if (raw.depth() == CV_16U) {
        resized.convertTo(resized, CV_32F, 1.0 / 65535.0);
      }
      raw = resized;
    }
    frames.push_back(frame_from_mat(raw));
  }
  return FrameSequence(std::move(frames));
}

bool FlowField::all_finite() const {
  const auto fu = u.values();
  const auto fv = v.values();
  return std::all_of(fu.begin(), fu.end(), [](float x) { return std::isfinite(x); }) &&
         std::all_of(fv.begin(), fv.end(), [](float x) { return std::isfinite(x); });
}

FlowField read_flow_file(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open flow file " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12) throw Error(ErrorKind::kFormat, "truncated flow header in " + path.string());
  const float magic = get_le<float>(bytes.data());
  if (magic != kFlowMagic) throw Error(ErrorKind::kFormat, "bad flow magic in " + path.string());
  const std::int32_t width = get_le<std::int32_t>(bytes.data() + 4);
  const std::int32_t height = get_le<std::int32_t>(bytes.data() + 8);
  if (width < 1 || height < 1 || width > (1 << 16) || height > (1 << 16)) {
    throw Error(ErrorKind::kFormat, "implausible flow dimensions in " + path.string());
  }
  const std::size_t count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (bytes.size() != 12 + count * 8) {
    throw Error(ErrorKind::kFormat, "flow payload size mismatch in " + path.string());
  }
  FlowField flow(width, height);
  const char *p = bytes.data() + 12;
  auto fu = flow.u.values();
  auto fv = flow.v.values();
  for (std::size_t i = 0; i < count; ++i, p += 8) {
    fu[i] = get_le<float>(p);
    fv[i] = get_le<float>(p + 4);
  }
  return flow;
}

void write_flow_file(const FlowField &flow, const fs::path &path) {
  if (flow.width() < 1 || flow.height() < 1 || !flow.u.same_shape(flow.v)) {
    throw Error(ErrorKind::kValidation, "flow field has invalid dimensions");
  }
  if (!flow.all_finite()) throw Error(ErrorKind::kValidation, "flow field contains non-finite values");
  std::vector<char> buf;
  buf.reserve(12 + flow.u.size() * 8);
  put_le(buf, kFlowMagic);
  put_le(buf, static_cast<std::int32_t>(flow.width()));
  put_le(buf, static_cast<std::int32_t>(flow.height()));
  const auto fu = flow.u.values();
  const auto fv = flow.v.values();
  for (std::size_t i = 0; i < fu.size(); ++i) {
    put_le(buf, fu[i]);
    put_le(buf, fv[i]);
  }
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

std::size_t MaskImage::area() const {
  const auto v = values.values();
  return static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [](double x) { return x >= 0.5; }));
}

void MaskImage::validate() const {
  if (object_id < 1) throw Error(ErrorKind::kValidation, "mask object id must be >= 1");
  for (double x : values.values()) {
    if (mode == MaskMode::kBinary ? (x != 0.0 && x != 1.0) : !(x >= 0.0 && x <= 1.0)) {
      throw Error(ErrorKind::kValidation, "mask value out of range for its mode");
    }
  }
}

MaskImage make_binary_mask(int width, int height, int object_id, int frame_index) {
  MaskImage m;
  m.values = Grid<double>(width, height, 0.0);
  m.mode = MaskMode::kBinary;
  m.object_id = object_id;
  m.frame_index = frame_index;
  return m;
}

void write_mask_image(const MaskImage &mask, const fs::path &path) {
  mask.validate();
  cv::Mat img(mask.height(), mask.width(), CV_8UC1);
  for (int y = 0; y < mask.height(); ++y) {
    auto *row = img.ptr<std::uint8_t>(y);
    for (int x = 0; x < mask.width(); ++x) {
      const double v = mask.values(x, y);
      row[x] = mask.mode == MaskMode::kBinary
                   ? static_cast<std::uint8_t>(v != 0.0 ? 255 : 0)
                   : static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5));
    }
  }
  write_mat(img, path);
}

MaskImage read_mask_image(const fs::path &path, int object_id, int frame_index) {
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (raw.empty()) throw Error(ErrorKind::kInput, "cannot read mask " + path.string());
  MaskImage m = make_binary_mask(raw.cols, raw.rows, object_id, frame_index);
  for (int y = 0; y < raw.rows; ++y) {
    const auto *row = raw.ptr<std::uint8_t>(y);
    for (int x = 0; x < raw.cols; ++x) m.values(x, y) = row[x] >= 128 ? 1.0 : 0.0;
  }
  return m;
}

void write_gray_image(const Grid<double> &values, double scale, const fs::path &path) {
  cv::Mat img(values.height(), values.width(), CV_8UC1);
  for (int y = 0; y < values.height(); ++y) {
    auto *row = img.ptr<std::uint8_t>(y);
    for (int x = 0; x < values.width(); ++x) {
      const double v = std::floor(values(x, y) * scale + 0.5);
      row[x] = static_cast<std::uint8_t>(std::clamp(std::isfinite(v) ? v : 0.0, 0.0, 255.0));
    }
  }
  write_mat(img, path);
}

void write_gray_image(const Grid<std::uint8_t> &values, const fs::path &path) {
  cv::Mat img(values.height(), values.width(), CV_8UC1,
              const_cast<std::uint8_t *>(values.data()));
  write_mat(img, path);
}

void write_frame_image(const Frame &frame, const fs::path &path) {
  std::vector<cv::Mat> channels;
  for (auto it = frame.planes.rbegin(); it != frame.planes.rend(); ++it) {
    cv::Mat c(frame.height(), frame.width(), CV_8UC1);
    for (int y = 0; y < frame.height(); ++y) {
      auto *row = c.ptr<std::uint8_t>(y);
      for (int x = 0; x < frame.width(); ++x) {
        row[x] = static_cast<std::uint8_t>(std::floor((*it)(x, y) * 255.0 + 0.5));
      }
    }
    channels.push_back(c);
  }
  cv::Mat img;
  cv::merge(channels, img);
  write_mat(img, path);
}

}  // namespace turbseg
