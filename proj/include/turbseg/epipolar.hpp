#pragma once

#include "turbseg/flowstab.hpp"
#include "turbseg/grid.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

namespace turbseg {

// Rank-2, unit-Frobenius-norm fundamental matrix in raw pixel coordinates,
// sign fixed so that the largest-magnitude entry is positive.
struct FundamentalMatrix {
  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
};

struct Correspondence {
  Eigen::Vector2d p1;
  Eigen::Vector2d p2;
};

using CorrespondenceSet = std::vector<Correspondence>;

// Grid of p1 with the given stride inside `margin`; p2 = p1 + flow(p1).
// Pairs whose p2 leaves the image are dropped. Throws kDegenerate below 8.
CorrespondenceSet sample_correspondences(const StabilizedFlow &flow, int stride, int margin);

// Hartley-normalized linear 8-point solution. Throws kEstimation for fewer
// than 8 pairs or a degenerate configuration.
FundamentalMatrix estimate_fundamental_8pt(std::span<const Correspondence> corrs);

struct LmedsOptions {
  int iterations = 256;
  std::uint64_t seed = 0;
};

struct LmedsReport {
  double best_median = 0.0;  // minimal median Sampson distance over candidates
  double robust_scale = 0.0;
  std::size_t inliers = 0;
  int degenerate_samples = 0;
};

// Least-median-of-squares over random 8-subsets scored by the median Sampson
// distance, followed by one 8-point refit on the inliers
// sqrt(sampson) <= 2.5 * 1.4826 * (1 + 5 / (n - 7)) * sqrt(median).
FundamentalMatrix estimate_fundamental_lmeds(std::span<const Correspondence> corrs,
                                             const LmedsOptions &options,
                                             LmedsReport *report = nullptr);

// (p2' F p1)^2 / ((F p1)_1^2 + (F p1)_2^2 + (F' p2)_1^2 + (F' p2)_2^2).
// Returns 0 when the denominator is below 1e-12.
double sampson_distance(const Eigen::Matrix3d &f, const Eigen::Vector2d &p1,
                        const Eigen::Vector2d &p2);

inline constexpr double kSampsonMinDenominator = 1e-12;

struct SampsonMap {
  Grid<double> values;
  Grid<std::uint8_t> out_of_bounds;  // 1 where p2 left the image
  std::size_t out_of_bounds_count = 0;
  std::size_t near_epipole_count = 0;
};

SampsonMap sampson_map(const StabilizedFlow &flow, const FundamentalMatrix &f);

struct MotionFeatureMap {
  Grid<double> values;
  double normalization_scale = 1.0;  // divisor applied to the mean map
  bool normalized = false;
};

inline constexpr double kMotionMapClamp = 1.5;
// Floor on the normalization divisor (pixels^2), so a static frame's rounding
// noise is not stretched to full scale.
inline constexpr double kMinNormalizationScale = 1e-3;

// Mean of the maps; with `normalize`, divided by max(99th percentile, floor)
// and clamped to [0, 1.5].
MotionFeatureMap motion_feature_map(std::span<const Grid<double>> maps, bool normalize);

// q-quantile (0..1) by nth_element on a copy, lower index rule.
double quantile(std::span<const double> values, double q);

}  // namespace turbseg
