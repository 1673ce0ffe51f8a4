#pragma once

#include "turbseg/grid.hpp"
#include "turbseg/video_io.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace turbseg {

// A D x D window of the motion feature map whose values are uniformly high.
struct SeedRegion {
  int x0 = 0;
  int y0 = 0;
  int size = 0;
  double mean_value = 0.0;  // also the reference value M(p_seed) for growth
  double variance = 0.0;
  int provisional_id = 0;
};

struct SeedParams {
  int window = 8;
  int stride = 4;
  double min_mean = 0.35;      // delta_1
  double max_variance = 0.02;  // delta_2
};

// Windows with mean > min_mean and variance < max_variance, scanned with the
// given stride. Overlapping candidates are suppressed in descending mean
// order; ids follow that order starting at 1.
std::vector<SeedRegion> select_seeds(const Grid<double> &motion, const SeedParams &params);

enum class Connectivity { kFour = 4, kEight = 8 };

struct GrowResult {
  MaskImage mask;
  bool seed_fully_claimed = false;
};

// Breadth-first growth from the seed window: a pixel joins while
// |M(p) - M(p_seed)| < multiplier * M(p_seed) and it is not already claimed.
// Joined pixels are marked in `claimed`.
GrowResult grow_region(const Grid<double> &motion, const SeedRegion &seed, double multiplier,
                       Grid<std::uint8_t> &claimed, Connectivity connectivity = Connectivity::kFour);

enum class TurbulencePreset { kWeak, kNormal, kStrong };

// 0.1 / 0.2 / 0.3
double growth_multiplier(TurbulencePreset preset);

// max(8, round(min(H, W) / 30))
int adaptive_window(int width, int height);

struct SegmentParams {
  int window = 0;  // 0 selects adaptive_window(); stride then defaults to window / 2
  int stride = 0;
  double min_mean = 0.35;
  double max_variance = 0.02;
  double multiplier = 0.2;
  std::size_t min_mask_area = 25;
  Connectivity connectivity = Connectivity::kFour;
};

// Seeds, growth in descending seed strength, area filter. Masks carry
// provisional ids 1..K_t.
std::vector<MaskImage> segment_frame(const Grid<double> &motion, const SegmentParams &params,
                                     int frame_index = 0);

// Per-frame, per-object binary masks with globally consistent ids 1..K.
struct CoarseMaskStack {
  int width = 0;
  int height = 0;
  int object_count = 0;
  std::vector<std::vector<MaskImage>> masks;  // [frame][object_id - 1]; absent objects are empty
  std::vector<int> disagreeing_frames;        // frames whose detection count differs from K

  int frame_count() const { return static_cast<int>(masks.size()); }
  const MaskImage &at(int frame, int object_id) const {
    return masks.at(static_cast<std::size_t>(frame)).at(static_cast<std::size_t>(object_id - 1));
  }
};


// Mean (x, y) of the foreground pixels; (NaN, NaN) for an empty mask.
std::array<double, 2> mask_centroid(const MaskImage &mask);

// K = mode of the non-zero per-frame mask counts. Centroids of all masks are
// clustered by k-means (k-means++ with `seed`); each frame's masks are then
// matched to clusters greedily by ascending distance. Frames with more than
// K masks drop their smallest masks first.
CoarseMaskStack unify_mask_ids(const std::vector<std::vector<MaskImage>> &per_frame,
                               int width, int height, std::uint64_t seed = 0);

// Indexed rendering for inspection: id * 50, capped at 250.
Grid<std::uint8_t> render_indexed(const std::vector<MaskImage> &masks, int width, int height);

}  // namespace turbseg
