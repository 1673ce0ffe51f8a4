#pragma once

// Independent forward generators shared by the unit and acceptance tests.

#include "turbseg/epipolar.hpp"
#include "turbseg/eval.hpp"
#include "turbseg/regiongrow.hpp"
#include "turbseg/synth.hpp"
#include "turbseg/video_io.hpp"

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <vector>

namespace oracle {

struct TwoView {
  Eigen::Matrix3d f;  // unit Frobenius norm, rank 2
  std::vector<turbseg::Correspondence> pairs;
  Eigen::Vector3d epipole;  // image of the second camera centre in view 1
};

inline Eigen::Matrix3d skew(const Eigen::Vector3d &v) {
  Eigen::Matrix3d s;
  s << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return s;
}

// Two pinhole cameras with shared intrinsics looking at a random point cloud.
// View 2 is R * X + t. Points project inside a 432x240 frame.
inline TwoView two_view(std::mt19937_64 &rng, int n, bool translation_only) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::Matrix3d k;
  k << 400, 0, 216, 0, 400, 120, 0, 0, 1;
  Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
  if (!translation_only) {
    const Eigen::Vector3d axis = Eigen::Vector3d(u(rng), u(rng), u(rng)).normalized();
    r = Eigen::AngleAxisd(0.05 * u(rng), axis).toRotationMatrix();
  }
  const Eigen::Vector3d t = Eigen::Vector3d(u(rng), u(rng), 0.3 * u(rng)).normalized() * 0.5;

  TwoView out;
  const Eigen::Matrix3d kinv = k.inverse();
  out.f = kinv.transpose() * skew(t) * r * kinv;
  out.f /= out.f.norm();
  out.epipole = k * (-r.transpose() * t);
  while (static_cast<int>(out.pairs.size()) < n) {
    const double z = 4.0 + 6.0 * (0.5 + 0.5 * u(rng));
    const Eigen::Vector3d x(z * 0.45 * u(rng), z * 0.25 * u(rng), z);
    const Eigen::Vector3d x2 = r * x + t;
    if (x2.z() <= 0.5) continue;
    const Eigen::Vector3d a = k * x;
    const Eigen::Vector3d b = k * x2;
    out.pairs.push_back({a.hnormalized(), b.hnormalized()});
  }
  return out;
}

inline double sign_aligned_distance(const Eigen::Matrix3d &a, const Eigen::Matrix3d &b) {
  return std::min((a - b).norm(), (a + b).norm());
}

struct Tracks {
  std::vector<std::vector<turbseg::MaskImage>> per_frame;  // provisional ids shuffled per frame
  std::vector<std::vector<std::array<double, 2>>> centers;   // [track][frame]
};

inline turbseg::MaskImage disk_mask(int w, int h, double cx, double cy, double radius, int id,
                                    int frame) {
  turbseg::MaskImage m = turbseg::make_binary_mask(w, h, id, frame);
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - radius)));
  const int x1 = std::min(w - 1, static_cast<int>(std::ceil(cx + radius)));
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - radius)));
  const int y1 = std::min(h - 1, static_cast<int>(std::ceil(cy + radius)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      if (std::hypot(x - cx, y - cy) <= radius) m.values(x, y) = 1.0;
  return m;
}

// Disks moving at <= 2 px per frame whose tracks stay >= 40 px apart, with the
// provisional ids permuted independently in every frame.
inline Tracks two_tracks(std::mt19937_64 &rng, int w, int h, int frames) {
  std::uniform_real_distribution<double> ux(20.0, w - 20.0), uy(20.0, h - 20.0), uv(-1.0, 1.0);
  Tracks out;
  std::array<std::array<double, 4>, 2> state{};
  for (;;) {
    for (auto &s : state) s = {ux(rng), uy(rng), uv(rng), uv(rng)};
    bool ok = true;
    for (int t = 0; t < frames && ok; ++t) {
      for (const auto &s : state) {
        const double x = s[0] + t * s[2], y = s[1] + t * s[3];
        ok = ok && x > 8 && y > 8 && x < w - 9 && y < h - 9;
      }
      const double dx = (state[0][0] - state[1][0]) + t * (state[0][2] - state[1][2]);
      const double dy = (state[0][1] - state[1][1]) + t * (state[0][3] - state[1][3]);
      ok = ok && std::hypot(dx, dy) >= 40.0;
    }
    if (ok) break;
  }
  out.centers.resize(2);
  for (int t = 0; t < frames; ++t) {
    std::vector<int> ids{1, 2};
    std::shuffle(ids.begin(), ids.end(), rng);
    std::vector<turbseg::MaskImage> masks;
    for (int k = 0; k < 2; ++k) {
      const double x = state[k][0] + t * state[k][2], y = state[k][1] + t * state[k][3];
      out.centers[k].push_back({x, y});
      masks.push_back(disk_mask(w, h, x, y, 5.0, ids[k], t));
    }
    std::sort(masks.begin(), masks.end(), [](const auto &a, const auto &b) { return a.object_id < b.object_id; });
    out.per_frame.push_back(std::move(masks));
  }
  return out;
}

// True when every unified id follows one track in every frame and the two ids
// follow different tracks.
inline bool ids_follow_tracks(const turbseg::CoarseMaskStack &stack, const Tracks &tracks) {
  if (stack.object_count != 2) return false;
  std::array<int, 2> track_of{-1, -1};
  for (int t = 0; t < stack.frame_count(); ++t) {
    for (int id = 1; id <= 2; ++id) {
      const auto c = turbseg::mask_centroid(stack.at(t, id));
      if (!std::isfinite(c[0])) return false;
      int best = 0;
      double best_d = 1e300;
      for (int k = 0; k < 2; ++k) {
        const auto &p = tracks.centers[k][static_cast<std::size_t>(t)];
        const double d = std::hypot(c[0] - p[0], c[1] - p[1]);
        if (d < best_d) {
          best_d = d;
          best = k;
        }
      }
      int &slot = track_of[static_cast<std::size_t>(id - 1)];
      if (slot == -1) slot = best;
      if (slot != best) return false;
    }
  }
  return track_of[0] != track_of[1];
}

// A textured constant-velocity mover with mild jitter and ground-truth flows,
// plus its masks with 20% of the foreground pixels dropped in every frame.
struct DropoutCase {
  turbseg::SyntheticSequence sequence;
  std::vector<turbseg::Grid<double>> truth;
  std::vector<turbseg::Grid<double>> corrupted;
};

inline DropoutCase dropout_case(std::uint64_t seed, int width = 160, int height = 120, int frames = 10) {
  turbseg::SceneSpec spec;
  spec.width = width;
  spec.height = height;
  spec.frame_count = frames;
  spec.max_offset = 2;
  spec.seed = seed;
  spec.jitter_sigma = 0.5;
  spec.jitter_corr_len = 3;
  spec.movers.push_back({turbseg::MoverShape::kRectangle, 36, 24, 30, 40, 3, 1.5, 0.85});
  DropoutCase out{turbseg::generate_sequence(spec), {}, {}};
  std::mt19937_64 rng(seed * 7 + 1);
  std::bernoulli_distribution drop(0.2);
  for (const auto &frame : out.sequence.gt_masks) {
    out.truth.push_back(frame.at(0).values);
    turbseg::Grid<double> g = frame.at(0).values;
    for (auto &v : g.values())
      if (v >= 0.5 && drop(rng)) v = 0.0;
    out.corrupted.push_back(std::move(g));
  }
  return out;
}

inline double mean_jaccard(const std::vector<turbseg::Grid<double>> &pred,
                           const std::vector<turbseg::Grid<double>> &truth) {
  double sum = 0.0;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    turbseg::MaskImage a, b;
    a.values = pred[t];
    b.values = truth[t];
    sum += turbseg::jaccard(a, b);
  }
  return sum / static_cast<double>(pred.size());
}

}  // namespace oracle
