#pragma once

#include "turbseg/grid.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace turbseg {

// One frame as C planes (1 = gray, 3 = R, G, B), values in [0, 1].
struct Frame {
  std::vector<Grid<float>> planes;

  int width() const { return planes.empty() ? 0 : planes.front().width(); }
  int height() const { return planes.empty() ? 0 : planes.front().height(); }
  int channels() const { return static_cast<int>(planes.size()); }
};

// Intensity of a frame; three-channel frames use 0.299 / 0.587 / 0.114.
Grid<float> to_gray(const Frame &frame);

class FrameSequence {
public:
  FrameSequence() = default;
  // Throws kValidation / kDimensionMismatch when invariants fail.
  explicit FrameSequence(std::vector<Frame> frames);

  int count() const { return static_cast<int>(frames_.size()); }
  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }

  const Frame &operator[](int t) const { return frames_.at(static_cast<std::size_t>(t)); }
  const std::vector<Frame> &frames() const { return frames_; }

  // Intensity of frame t (cached planes are not kept; callers hold the result).
  Grid<float> gray(int t) const { return to_gray((*this)[t]); }

private:
  std::vector<Frame> frames_;
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
};

struct Size2 {
  int width = 0;
  int height = 0;
};

// Loads every raster file of a directory in lexicographic filename order.
// With resize_to, frames are bilinearly resampled to exactly that size.
FrameSequence load_frames(const std::filesystem::path &directory,
                          std::optional<Size2> resize_to = std::nullopt);

// Dense displacement field F_{source -> target}; u horizontal, v vertical.
struct FlowField {
  Grid<float> u;
  Grid<float> v;
  int source_frame = 0;
  int target_frame = 0;

  FlowField() = default;
  FlowField(int width, int height) : u(width, height), v(width, height) {}

  int width() const { return u.width(); }
  int height() const { return u.height(); }
  bool all_finite() const;
};

inline constexpr float kFlowMagic = 202021.25f;

// Dense flow binary layout: float magic, int32 width, int32 height, then
// row-major interleaved (u, v) float32 pairs, all little-endian.
FlowField read_flow_file(const std::filesystem::path &path);
void write_flow_file(const FlowField &flow, const std::filesystem::path &path);

enum class MaskMode { kBinary, kSoft };

struct MaskImage {
  Grid<double> values;
  MaskMode mode = MaskMode::kBinary;
  int object_id = 1;
  int frame_index = 0;

  int width() const { return values.width(); }
  int height() const { return values.height(); }
  std::size_t area() const;  // pixels with value >= 0.5
  // Throws kValidation if values fall outside the mode's range or id < 1.
  void validate() const;
};

// [frame][object]; objects are identified by position, ids in object_id.
using MaskStack = std::vector<std::vector<MaskImage>>;

MaskImage make_binary_mask(int width, int height, int object_id = 1, int frame_index = 0);

// Binary masks are written as 0 / 255, soft masks as round-half-up(value * 255).
void write_mask_image(const MaskImage &mask, const std::filesystem::path &path);
// Reads an 8-bit mask; pixels >= 128 are foreground.
MaskImage read_mask_image(const std::filesystem::path &path, int object_id = 1,
                          int frame_index = 0);

// 8-bit single-channel export of an arbitrary grid: value * scale, rounded and
// clamped to [0, 255].
void write_gray_image(const Grid<double> &values, double scale,
                      const std::filesystem::path &path);
void write_gray_image(const Grid<std::uint8_t> &values, const std::filesystem::path &path);

void write_frame_image(const Frame &frame, const std::filesystem::path &path);

}  // namespace turbseg
