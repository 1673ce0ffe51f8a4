#pragma once

#include "turbseg/grid.hpp"
#include "turbseg/video_io.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace turbseg {

// A set of signed frame offsets averaged into one stabilized flow.
using Interval = std::vector<int>;

// Bidirectional flows O_t = {F_{t -> t+i}} around one center frame.
struct FlowSet {
  int center_frame = 0;
  int max_offset = 0;
  std::map<int, FlowField> flows;  // keyed by signed offset i
  std::vector<int> missing;        // offsets that fall outside the sequence

  bool has(int offset) const { return flows.count(offset) > 0; }
  const FlowField &at(int offset) const;
  std::vector<int> offsets() const;
};

// Returns F_{source -> target}.
using FlowProvider = std::function<FlowField(int source, int target)>;

// Offsets i in [-max_offset, max_offset] \ {0} with 0 <= t + i < frame_count.
// Frame indices are zero-based.
FlowSet build_flow_set(int frame_count, int t, int max_offset, const FlowProvider &provider);

// "flow_{t:04}_{i:+d}.flo" holding F_{t -> t+i}.
std::string flow_file_name(int t, int offset);

// Reads flows from a directory laid out with flow_file_name(); a missing file
// raises kInput naming the file and the offset.
FlowProvider directory_flow_provider(std::filesystem::path directory, int width, int height);

struct PyramidFlowParams {
  int levels = 3;
  int patch = 8;   // square block side, pixels
  int search = 4;  // +/- search radius per level, pixels
};

// Coarse-to-fine block matching (SSD) with parabolic subpixel refinement.
// Ties prefer the displacement closest to zero.
FlowField estimate_flow_pyramidal(const Grid<float> &src, const Grid<float> &dst,
                                  const PyramidFlowParams &params = {});

// Estimates flows on demand from the grayscale frames of a sequence.
FlowProvider builtin_flow_provider(const FrameSequence &frames, const PyramidFlowParams &params = {});

struct StabilizedFlow {
  Grid<double> u;
  Grid<double> v;
  Interval interval;   // offsets actually averaged
  Interval requested;  // interval as configured, before boundary shrinking
  int center_frame = 0;

  int width() const { return u.width(); }
  int height() const { return u.height(); }
};

// Default interval scheme: {1}, {1,2}, ..., {1..B}, then {-1}, ..., {-1..-B}.
std::vector<Interval> cumulative_bidirectional_intervals(int max_offset);

// Per-pixel mean of F_{t -> t+i} / i over each interval. Offsets absent from
// the flow set are removed from the interval; empty intervals are dropped.
// Throws kDegenerate when nothing survives.
std::vector<StabilizedFlow> stabilize_flows(const FlowSet &flow_set,
                                            const std::vector<Interval> &intervals);

}  // namespace turbseg
