#pragma once

#include "turbseg/epipolar.hpp"
#include "turbseg/error.hpp"
#include "turbseg/flowstab.hpp"
#include "turbseg/refine.hpp"
#include "turbseg/regiongrow.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace turbseg {

inline constexpr const char *kVersion = "0.1.0";

enum class FlowSource { kDirectory, kBuiltin };
enum class IntervalScheme { kCumulative, kCustom };

struct PipelineConfig {
  int max_offset = 4;  // B
  IntervalScheme interval_scheme = IntervalScheme::kCumulative;
  std::vector<Interval> custom_intervals;  // used with kCustom
  FlowSource flow_source = FlowSource::kBuiltin;
  std::filesystem::path flow_dir;  // defaults to <input>/flows when empty
  PyramidFlowParams pyramid;

  int working_width = 432;
  int working_height = 240;
  bool resize_input = true;

  int window = 0;  // D; 0 = adaptive
  int stride = 0;
  double min_mean = 0.35;      // delta_1
  double max_variance = 0.02;  // delta_2
  TurbulencePreset preset = TurbulencePreset::kNormal;
  std::size_t min_mask_area = 25;
  Connectivity connectivity = Connectivity::kFour;

  int correspondence_stride = 4;
  int correspondence_margin = 2;
  int lmeds_iterations = 256;
  std::uint64_t seed = 0;

  bool refine = true;
  RefineConfig refine_config;
  int workers = 1;

  // Throws kConfig on out-of-range fields.
  void validate() const;
  std::vector<Interval> intervals() const;
  SegmentParams segment_params() const;

  // Field access by kebab-case key; set() throws kConfig for unknown keys or
  // unparsable values.
  void set(const std::string &key, const std::string &value);
  std::vector<std::pair<std::string, std::string>> fields() const;
};

// Reads "key = value" lines ('#' starts a comment) into cfg.
void apply_config_file(PipelineConfig &cfg, const std::filesystem::path &path);
void apply_config_stream(PipelineConfig &cfg, std::istream &in, const std::string &origin);

// A module error tagged with the pipeline stage and frame it came from.
class StageError : public Error {
public:
  StageError(std::string stage, int frame, const Error &cause);
  const std::string &stage() const { return stage_; }
  int frame() const { return frame_; }

private:
  std::string stage_;
  int frame_;
};

struct FrameDiagnostics {
  std::vector<StabilizedFlow> stabilized;
  std::vector<SampsonMap> sampson;
  std::vector<SeedRegion> seeds;
};

struct SegmentationResult {
  std::vector<FlowSet> flow_sets;
  std::vector<MotionFeatureMap> motion;
  std::vector<std::vector<MaskImage>> per_frame;  // provisional ids
  CoarseMaskStack coarse;
  std::vector<ObjectRefinement> refined;
  MaskStack masks;  // [frame][object], binary final masks
  std::vector<std::string> notes;
  std::vector<FrameDiagnostics> diagnostics;  // filled when requested
};

// Runs every stage in memory. Errors come out as StageError.
SegmentationResult segment_sequence(const FrameSequence &frames, const FlowProvider &flows,
                                    const PipelineConfig &cfg, bool keep_diagnostics = false);

FlowProvider make_flow_provider(const FrameSequence &frames, const PipelineConfig &cfg,
                                const std::filesystem::path &input_dir);

// Loads frames from input_dir (or input_dir/frames when present), runs the
// pipeline and writes artifacts plus manifest.txt. Returns the exit code.
int run_pipeline(const std::filesystem::path &input_dir, const PipelineConfig &cfg,
                 const std::filesystem::path &out_dir, std::ostream &log);

// Per-stage diagnostic images for each frame.
int run_inspect(const std::filesystem::path &input_dir, const PipelineConfig &cfg,
                const std::filesystem::path &out_dir, std::ostream &log);

// Ratio of mean motion inside a mask to the mean outside it.
double motion_contrast(const Grid<double> &motion, const MaskImage &mask);

}  // namespace turbseg
