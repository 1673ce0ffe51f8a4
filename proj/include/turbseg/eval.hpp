#pragma once

#include "turbseg/video_io.hpp"

#include <filesystem>
#include <iosfwd>
#include <vector>

namespace turbseg {

// |pred & gt| / |pred | gt|; 1.0 when both are empty.
double jaccard(const MaskImage &pred, const MaskImage &gt);
// 2 |pred & gt| / (|pred| + |gt|); 1.0 when both are empty.
double f1(const MaskImage &pred, const MaskImage &gt);

enum class Matching { kById, kBestOverlap };

struct FrameScore {
  int frame = 0;
  int object_id = 0;  // ground-truth id
  double j = 0.0;
  double f = 0.0;
  bool both_empty = false;
};

struct MetricsReport {
  std::vector<FrameScore> per_frame;
  double mean_j = 0.0;
  double mean_f = 0.0;
  double g = 0.0;  // (mean_j + mean_f) / 2
};

struct EvalOptions {
  Matching matching = Matching::kBestOverlap;
  bool skip_empty_frames = true;  // both-empty pairs excluded from the means
};

// Scores every ground-truth object in every frame. By id, prediction m is
// compared with ground truth m; best-overlap matches predicted to ground-truth
// objects greedily by descending whole-sequence intersection. Unmatched
// ground-truth objects are scored against an empty prediction.
MetricsReport evaluate_sequence(const MaskStack &pred, const MaskStack &gt,
                                const EvalOptions &options = {});

// Reads <dir>/obj01/frame_0000.png ... as binary masks.
MaskStack load_mask_stack(const std::filesystem::path &directory);

void write_report_csv(const MetricsReport &report, std::ostream &out);
void print_report_summary(const MetricsReport &report, std::ostream &out);

}  // namespace turbseg
