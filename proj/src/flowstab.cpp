#include "turbseg/flowstab.hpp"

#include "turbseg/error.hpp"

#include <cstdio>

namespace fs = std::filesystem;

namespace turbseg {

const FlowField &FlowSet::at(int offset) const {
  auto it = flows.find(offset);
  if (it == flows.end()) {
    throw Error(ErrorKind::kInput, "flow set of frame " + std::to_string(center_frame) +
                                       " has no offset " + std::to_string(offset));
  }
  return it->second;
}

std::vector<int> FlowSet::offsets() const {
  std::vector<int> out;
  for (const auto &[offset, flow] : flows) out.push_back(offset);
  return out;
}

FlowSet build_flow_set(int frame_count, int t, int max_offset, const FlowProvider &provider) {
  if (max_offset < 1) throw Error(ErrorKind::kConfig, "maximum frame offset must be >= 1");
  if (t < 0 || t >= frame_count) {
    throw Error(ErrorKind::kInput, "frame index " + std::to_string(t) + " outside sequence");
  }
  FlowSet set;
  set.center_frame = t;
  set.max_offset = max_offset;
  for (int i = -max_offset; i <= max_offset; ++i) {
    if (i == 0) continue;
    const int target = t + i;
    if (target < 0 || target >= frame_count) {
      set.missing.push_back(i);
      continue;
    }
    FlowField flow = provider(t, target);
    flow.source_frame = t;
    flow.target_frame = target;
    if (!flow.all_finite()) {
      throw Error(ErrorKind::kValidation, "flow " + flow_file_name(t, i) + " has non-finite values");
    }
    set.flows.emplace(i, std::move(flow));
  }
  return set;
}

std::string flow_file_name(int t, int offset) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "flow_%04d_%+d.flo", t, offset);
  return buf;
}

FlowProvider directory_flow_provider(fs::path directory, int width, int height) {
  return [directory = std::move(directory), width, height](int source, int target) {
    const int offset = target - source;
    const fs::path path = directory / flow_file_name(source, offset);
    if (!fs::exists(path)) {
      throw Error(ErrorKind::kInput, "missing flow file " + path.string() + " (frame " +
                                         std::to_string(source) + ", offset " +
                                         std::to_string(offset) + ")");
    }
    FlowField flow = read_flow_file(path);
    if (flow.width() != width || flow.height() != height) {
      throw Error(ErrorKind::kDimensionMismatch,
                  "flow file " + path.string() + " does not match the frame size");
    }
    return flow;
  };
}

FlowProvider builtin_flow_provider(const FrameSequence &frames, const PyramidFlowParams &params) {
  std::vector<Grid<float>> gray;
  gray.reserve(static_cast<std::size_t>(frames.count()));
  for (int t = 0; t < frames.count(); ++t) gray.push_back(frames.gray(t));
  return [gray = std::move(gray), params](int source, int target) {
    return estimate_flow_pyramidal(gray.at(static_cast<std::size_t>(source)),
                                   gray.at(static_cast<std::size_t>(target)), params);
  };
}

std::vector<Interval> cumulative_bidirectional_intervals(int max_offset) {
  std::vector<Interval> intervals;
  for (int sign : {1, -1}) {
    for (int j = 1; j <= max_offset; ++j) {
      Interval k;
      for (int i = 1; i <= j; ++i) k.push_back(sign * i);
      intervals.push_back(std::move(k));
    }
  }
  return intervals;
}

std::vector<StabilizedFlow> stabilize_flows(const FlowSet &flow_set,
                                            const std::vector<Interval> &intervals) {
  std::vector<StabilizedFlow> out;
  for (const Interval &requested : intervals) {
    Interval used;
    for (int i : requested) {
      if (i == 0 || std::abs(i) > flow_set.max_offset) {
        throw Error(ErrorKind::kConfig, "interval offset " + std::to_string(i) +
                                            " outside [-B, B] \\ {0}");
      }
      if (flow_set.has(i)) used.push_back(i);
    }
    if (used.empty()) continue;

    const FlowField &first = flow_set.at(used.front());
    StabilizedFlow s;
    s.u = Grid<double>(first.width(), first.height(), 0.0);
    s.v = Grid<double>(first.width(), first.height(), 0.0);
    auto su = s.u.values();
    auto sv = s.v.values();
    for (int i : used) {
      const FlowField &f = flow_set.at(i);
      if (f.width() != first.width() || f.height() != first.height()) {
        throw Error(ErrorKind::kDimensionMismatch, "flows of one frame disagree in size");
      }
      const auto fu = f.u.values();
      const auto fv = f.v.values();
      const double step = static_cast<double>(i);
      for (std::size_t p = 0; p < su.size(); ++p) {
        su[p] += static_cast<double>(fu[p]) / step;
        sv[p] += static_cast<double>(fv[p]) / step;
      }
    }
    const double n = static_cast<double>(used.size());
    for (std::size_t p = 0; p < su.size(); ++p) {
      su[p] /= n;
      sv[p] /= n;
    }
    s.interval = std::move(used);
    s.requested = requested;
    s.center_frame = flow_set.center_frame;
    out.push_back(std::move(s));
  }
  if (out.empty()) {
    throw Error(ErrorKind::kDegenerate, "frame " + std::to_string(flow_set.center_frame) +
                                            ": every stabilization interval is empty");
  }
  return out;
}

}  // namespace turbseg
