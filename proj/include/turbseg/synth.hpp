#pragma once

#include "turbseg/flowstab.hpp"
#include "turbseg/video_io.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

namespace turbseg {

enum class MoverShape { kRectangle, kDisk };

struct Mover {
  MoverShape shape = MoverShape::kRectangle;
  double width = 32.0;   // disk: diameter
  double height = 24.0;  // ignored for disks
  double x = 0.0;        // center at frame 0, pixels
  double y = 0.0;
  double vx = 0.0;  // pixels / frame
  double vy = 0.0;
  double intensity = 0.5;
};

// Synthetic turbulent scene. Frame t shows, at pixel p, the scene point under
// x = p + j_t(p), where j_t is a smooth random jitter field; a static world
// point X sits at x = X + camera_shake[t] (scaled by its parallax factor).
struct SceneSpec {
  int width = 432;
  int height = 240;
  int frame_count = 20;
  std::vector<Mover> movers;
  double jitter_sigma = 0.0;     // RMS length of j_t, pixels
  double jitter_corr_len = 12.0; // Gaussian filter sigma of the white noise, pixels
  std::vector<std::array<double, 2>> camera_shake;  // empty or one (dx, dy) per frame
  // Relative inverse-depth spread of the background in [0, 0.9]. With p > 0 a
  // static point X moves by camera_shake[t] * d(X), d a smooth field in
  // [1 - p, 1 + p]; movers keep d = 1. Zero gives a flat backdrop.
  double parallax = 0.0;
  double blur_sigma = 0.0;
  std::uint64_t seed = 1;
  int max_offset = 4;         // ground-truth flows cover |i| <= max_offset
  bool rigid_flow = false;    // flows without the jitter displacement

  // Throws kInput when a mover leaves the frame or a field is out of range.
  void validate() const;
};

struct SyntheticSequence {
  FrameSequence frames;
  MaskStack gt_masks;                // [frame][mover], ids 1..movers
  std::vector<FlowSet> gt_flows;     // one per frame
  std::vector<Grid<float>> jitter_u; // j_t, per frame
  std::vector<Grid<float>> jitter_v;
};

SyntheticSequence generate_sequence(const SceneSpec &spec);

// Plain-text key = value scene description, e.g.
//   width = 432
//   jitter_sigma = 1.0
//   camera_shake = 0,0; 0.5,0; 1,0      (or camera_pan = dx,dy for shake t*(dx,dy))
//   mover = rect 40 30 100 120 3 0 0.9    (shape w h x y vx vy intensity)
//   mover = disk 30 0 300 60 0 3 0.1
SceneSpec parse_scene_spec(std::istream &in);
SceneSpec load_scene_spec(const std::filesystem::path &path);

// Writes frames/frame_NNNN.png, gt/objMM/frame_NNNN.png and
// flows/flow_NNNN_+i.flo under `directory`.
void write_synthetic(const SyntheticSequence &sequence, const std::filesystem::path &directory);

// Provider over a sequence's ground-truth flows.
FlowProvider ground_truth_flow_provider(const SyntheticSequence &sequence);

}  // namespace turbseg
