#include "turbseg/regiongrow.hpp"

#include "turbseg/error.hpp"
#include "turbseg/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <numeric>
#include <tuple>

namespace turbseg {

std::vector<SeedRegion> select_seeds(const Grid<double> &motion, const SeedParams &params) {
  if (params.window < 2) throw Error(ErrorKind::kConfig, "seed window must be >= 2");
  if (params.stride < 1) throw Error(ErrorKind::kConfig, "seed stride must be >= 1");
  if (!(params.min_mean > 0.0) || !(params.max_variance > 0.0)) {
    throw Error(ErrorKind::kConfig, "seed thresholds must be positive");
  }
  const int d = params.window;
  const double n = static_cast<double>(d) * d;
  std::vector<SeedRegion> candidates;
  for (int y0 = 0; y0 + d <= motion.height(); y0 += params.stride) {
    for (int x0 = 0; x0 + d <= motion.width(); x0 += params.stride) {
      double sum = 0.0;
      for (int y = y0; y < y0 + d; ++y) {
        for (int x = x0; x < x0 + d; ++x) sum += motion(x, y);
      }
      const double mean = sum / n;
      if (!(mean > params.min_mean)) continue;
      double ss = 0.0;
      for (int y = y0; y < y0 + d; ++y) {
        for (int x = x0; x < x0 + d; ++x) ss += (motion(x, y) - mean) * (motion(x, y) - mean);
      }
      const double variance = ss / n;
      if (!(variance < params.max_variance)) continue;
      candidates.push_back({x0, y0, d, mean, variance, 0});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const SeedRegion &a, const SeedRegion &b) { return a.mean_value > b.mean_value; });
  std::vector<SeedRegion> accepted;
  for (const SeedRegion &c : candidates) {
    const bool overlaps = std::any_of(accepted.begin(), accepted.end(), [&](const SeedRegion &a) {
      return c.x0 < a.x0 + a.size && a.x0 < c.x0 + c.size && c.y0 < a.y0 + a.size &&
             a.y0 < c.y0 + c.size;
    });
    if (overlaps) continue;
    accepted.push_back(c);
    accepted.back().provisional_id = static_cast<int>(accepted.size());
  }
  return accepted;
}

GrowResult grow_region(const Grid<double> &motion, const SeedRegion &seed, double multiplier,
                       Grid<std::uint8_t> &claimed, Connectivity connectivity) {
  if (!(multiplier >= 0.05 && multiplier <= 0.5)) {
    throw Error(ErrorKind::kConfig, "growth multiplier must lie in [0.05, 0.5]");
  }
  if (!claimed.same_shape(motion)) {
    throw Error(ErrorKind::kDimensionMismatch, "claim grid does not match the motion map");
  }
  if (seed.x0 < 0 || seed.y0 < 0 || seed.x0 + seed.size > motion.width() ||
      seed.y0 + seed.size > motion.height()) {
    throw Error(ErrorKind::kInput, "seed window outside the motion map");
  }
  GrowResult result;
  result.mask = make_binary_mask(motion.width(), motion.height(), std::max(1, seed.provisional_id));
  const double reference = seed.mean_value;
  const double tolerance = multiplier * reference;
  auto accepts = [&](int x, int y) {
    return claimed(x, y) == 0 && std::abs(motion(x, y) - reference) < tolerance;
  };

  std::deque<std::pair<int, int>> queue;
  bool any_unclaimed = false;
  for (int y = seed.y0; y < seed.y0 + seed.size; ++y) {
    for (int x = seed.x0; x < seed.x0 + seed.size; ++x) {
      if (claimed(x, y) == 0) any_unclaimed = true;
      if (accepts(x, y)) {
        claimed(x, y) = 1;
        result.mask.values(x, y) = 1.0;
        queue.emplace_back(x, y);
      }
    }
  }
  result.seed_fully_claimed = !any_unclaimed;

  static constexpr int kDx[8] = {1, -1, 0, 0, 1, 1, -1, -1};
  static constexpr int kDy[8] = {0, 0, 1, -1, 1, -1, 1, -1};
  const int neighbours = connectivity == Connectivity::kEight ? 8 : 4;
  while (!queue.empty()) {
    const auto [x, y] = queue.front();
    queue.pop_front();
    for (int k = 0; k < neighbours; ++k) {
      const int nx = x + kDx[k];
      const int ny = y + kDy[k];
      if (!motion.contains(nx, ny) || !accepts(nx, ny)) continue;
      claimed(nx, ny) = 1;
      result.mask.values(nx, ny) = 1.0;
      queue.emplace_back(nx, ny);
    }
  }
  return result;
}

double growth_multiplier(TurbulencePreset preset) {
  switch (preset) {
    case TurbulencePreset::kWeak: return 0.1;
    case TurbulencePreset::kNormal: return 0.2;
    case TurbulencePreset::kStrong: return 0.3;
  }
  return 0.2;
}

int adaptive_window(int width, int height) {
  return std::max(8, static_cast<int>(std::lround(std::min(width, height) / 30.0)));
}

std::vector<MaskImage> segment_frame(const Grid<double> &motion, const SegmentParams &params,
                                     int frame_index) {
  SeedParams seed_params;
  seed_params.window = params.window > 0 ? params.window : adaptive_window(motion.width(), motion.height());
  seed_params.stride = params.stride > 0 ? params.stride : std::max(1, seed_params.window / 2);
  seed_params.min_mean = params.min_mean;
  seed_params.max_variance = params.max_variance;

  Grid<std::uint8_t> claimed(motion.width(), motion.height(), 0);
  std::vector<MaskImage> masks;
  for (const SeedRegion &seed : select_seeds(motion, seed_params)) {
    GrowResult grown = grow_region(motion, seed, params.multiplier, claimed, params.connectivity);
    if (grown.mask.area() < params.min_mask_area) continue;
    grown.mask.object_id = static_cast<int>(masks.size()) + 1;
    grown.mask.frame_index = frame_index;
    masks.push_back(std::move(grown.mask));
  }
  return masks;
}

std::array<double, 2> mask_centroid(const MaskImage &mask) {
  double sx = 0.0, sy = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (mask.values(x, y) >= 0.5) {
        sx += x;
        sy += y;
        ++n;
      }
    }
  }
  if (n == 0) return {std::nan(""), std::nan("")};
  return {sx / static_cast<double>(n), sy / static_cast<double>(n)};
}

CoarseMaskStack unify_mask_ids(const std::vector<std::vector<MaskImage>> &per_frame, int width,
                               int height, std::uint64_t seed) {
  std::map<std::size_t, int> count_histogram;
  for (const auto &frame : per_frame) {
    if (!frame.empty()) ++count_histogram[frame.size()];
  }
  if (count_histogram.empty()) {
    throw Error(ErrorKind::kInput, "no masks in any frame; nothing to unify");
  }
  // Mode of the counts; ties go to the larger count.
  std::size_t k = 0;
  int best = 0;
  for (const auto &[count, frequency] : count_histogram) {
    if (frequency >= best) {
      best = frequency;
      k = count;
    }
  }

  // Surplus masks are dropped smallest first, keeping the original order otherwise.
  std::vector<std::vector<const MaskImage *>> kept(per_frame.size());
  for (std::size_t t = 0; t < per_frame.size(); ++t) {
    std::vector<const MaskImage *> masks;
    for (const auto &m : per_frame[t]) {
      if (m.width() != width || m.height() != height) {
        throw Error(ErrorKind::kDimensionMismatch, "mask size differs from the sequence");
      }
      masks.push_back(&m);
    }
    if (masks.size() > k) {
      std::vector<std::size_t> order(masks.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return masks[a]->area() > masks[b]->area();
      });
      order.resize(k);
      std::sort(order.begin(), order.end());
      std::vector<const MaskImage *> trimmed;
      for (std::size_t i : order) trimmed.push_back(masks[i]);
      masks = std::move(trimmed);
    }
    kept[t] = std::move(masks);
  }

  // Centroids sorted lexicographically so clustering ignores provisional ids.
  std::vector<std::vector<std::array<double, 2>>> centroids(kept.size());
  std::vector<std::array<double, 2>> points;
  for (std::size_t t = 0; t < kept.size(); ++t) {
    for (const MaskImage *m : kept[t]) {
      centroids[t].push_back(mask_centroid(*m));
      if (std::isfinite(centroids[t].back()[0])) points.push_back(centroids[t].back());
    }
  }
  std::sort(points.begin(), points.end());
  Eigen::MatrixXd data(static_cast<Eigen::Index>(points.size()), 2);
  for (std::size_t i = 0; i < points.size(); ++i) {
    data(static_cast<Eigen::Index>(i), 0) = points[i][0];
    data(static_cast<Eigen::Index>(i), 1) = points[i][1];
  }
  KMeansResult clusters = kmeans(data, static_cast<int>(k), seed);

  // Canonical cluster order: by center x, then y.
  std::vector<int> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return std::make_tuple(clusters.centers(a, 0), clusters.centers(a, 1)) <
           std::make_tuple(clusters.centers(b, 0), clusters.centers(b, 1));
  });

  CoarseMaskStack stack;
  stack.width = width;
  stack.height = height;
  stack.object_count = static_cast<int>(k);
  stack.masks.resize(per_frame.size());
  for (std::size_t t = 0; t < kept.size(); ++t) {
    auto &out = stack.masks[t];
    for (std::size_t id = 1; id <= k; ++id) {
      out.push_back(make_binary_mask(width, height, static_cast<int>(id), static_cast<int>(t)));
    }
    if (per_frame[t].size() != k) stack.disagreeing_frames.push_back(static_cast<int>(t));

    struct Pair {
      double distance;
      std::size_t mask;
      std::size_t slot;
    };
    std::vector<Pair> pairs;
    for (std::size_t i = 0; i < kept[t].size(); ++i) {
      const auto c = centroids[t][i];
      if (!std::isfinite(c[0])) continue;
      for (std::size_t slot = 0; slot < k; ++slot) {
        const int cl = order[slot];
        const double dx = c[0] - clusters.centers(cl, 0);
        const double dy = c[1] - clusters.centers(cl, 1);
        pairs.push_back({std::hypot(dx, dy), i, slot});
      }
    }
    std::stable_sort(pairs.begin(), pairs.end(),
                     [](const Pair &a, const Pair &b) { return a.distance < b.distance; });
    std::vector<bool> mask_used(kept[t].size(), false), slot_used(k, false);
    for (const Pair &p : pairs) {
      if (mask_used[p.mask] || slot_used[p.slot]) continue;
      mask_used[p.mask] = slot_used[p.slot] = true;
      out[p.slot].values = kept[t][p.mask]->values;
    }
  }
  return stack;
}

Grid<std::uint8_t> render_indexed(const std::vector<MaskImage> &masks, int width, int height) {
  Grid<std::uint8_t> out(width, height, 0);
  for (const MaskImage &m : masks) {
    const auto level = static_cast<std::uint8_t>(std::min(250, m.object_id * 50));
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        if (m.values(x, y) >= 0.5) out(x, y) = level;
      }
    }
  }
  return out;
}

}  // namespace turbseg
