#include "turbseg/epipolar.hpp"

#include "turbseg/error.hpp"

#include <Eigen/Geometry>
#include <Eigen/LU>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace turbseg {

namespace {

struct Normalization {
  Eigen::Matrix3d t = Eigen::Matrix3d::Identity();
  double spread = 0.0;
};

// Translate the centroid to the origin and scale the mean distance to sqrt(2).
Normalization hartley(std::span<const Correspondence> corrs, bool second) {
  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
  for (const auto &c : corrs) centroid += second ? c.p2 : c.p1;
  centroid /= static_cast<double>(corrs.size());
  double mean_dist = 0.0;
  for (const auto &c : corrs) mean_dist += ((second ? c.p2 : c.p1) - centroid).norm();
  mean_dist /= static_cast<double>(corrs.size());
  Normalization n;
  n.spread = mean_dist;
  if (mean_dist <= 1e-12) return n;
  const double s = std::sqrt(2.0) / mean_dist;
  n.t << s, 0, -s * centroid.x(), 0, s, -s * centroid.y(), 0, 0, 1;
  return n;
}

Eigen::Matrix3d canonical(Eigen::Matrix3d f) {
  f /= f.norm();
  Eigen::Index r = 0, c = 0;
  f.cwiseAbs().maxCoeff(&r, &c);
  if (f(r, c) < 0) f = -f;
  return f;
}

inline double sampson_fast(const Eigen::Matrix3d &f, const Eigen::Vector2d &p1,
                           const Eigen::Vector2d &p2) {
  const double x1 = p1.x(), y1 = p1.y(), x2 = p2.x(), y2 = p2.y();
  const double a0 = f(0, 0) * x1 + f(0, 1) * y1 + f(0, 2);
  const double a1 = f(1, 0) * x1 + f(1, 1) * y1 + f(1, 2);
  const double a2 = f(2, 0) * x1 + f(2, 1) * y1 + f(2, 2);
  const double b0 = f(0, 0) * x2 + f(1, 0) * y2 + f(2, 0);
  const double b1 = f(0, 1) * x2 + f(1, 1) * y2 + f(2, 1);
  const double num = x2 * a0 + y2 * a1 + a2;
  const double den = a0 * a0 + a1 * a1 + b0 * b0 + b1 * b1;
  if (den < kSampsonMinDenominator) return 0.0;
  return num * num / den;
}

Eigen::Matrix<double, 1, 9> design_row(const Normalization &n1, const Normalization &n2,
                                       const Correspondence &c) {
  const Eigen::Vector3d q1 = n1.t * c.p1.homogeneous();
  const Eigen::Vector3d q2 = n2.t * c.p2.homogeneous();
  Eigen::Matrix<double, 1, 9> r;
  r << q2.x() * q1.x(), q2.x() * q1.y(), q2.x(), q2.y() * q1.x(), q2.y() * q1.y(), q2.y(), q1.x(),
      q1.y(), 1.0;
  return r;
}

// Rank-2 projection of the normalized solution, then undo the normalization.
FundamentalMatrix finish(const Eigen::Matrix<double, 9, 1> &f, const Normalization &n1,
                         const Normalization &n2) {
  Eigen::Matrix3d fn;
  fn << f(0), f(1), f(2), f(3), f(4), f(5), f(6), f(7), f(8);
  Eigen::JacobiSVD<Eigen::Matrix3d> svd3(fn, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Vector3d sv = svd3.singularValues();
  sv(2) = 0.0;
  fn = svd3.matrixU() * sv.asDiagonal() * svd3.matrixV().transpose();

  const Eigen::Matrix3d denorm = n2.t.transpose() * fn * n1.t;
  if (!denorm.allFinite() || denorm.norm() == 0.0) {
    throw Error(ErrorKind::kEstimation, "8-point solution is not finite");
  }
  return FundamentalMatrix{canonical(denorm)};
}

double median_in_place(std::vector<double> &v) {
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

}  // namespace

CorrespondenceSet sample_correspondences(const StabilizedFlow &flow, int stride, int margin) {
  if (stride < 1) throw Error(ErrorKind::kConfig, "correspondence stride must be >= 1");
  if (margin < 0) throw Error(ErrorKind::kConfig, "correspondence margin must be >= 0");
  const int w = flow.width();
  const int h = flow.height();
  CorrespondenceSet corrs;
  for (int y = margin; y <= h - 1 - margin; y += stride) {
    for (int x = margin; x <= w - 1 - margin; x += stride) {
      const double x2 = x + flow.u(x, y);
      const double y2 = y + flow.v(x, y);
      if (x2 < 0.0 || y2 < 0.0 || x2 > w - 1 || y2 > h - 1) continue;
      corrs.push_back({Eigen::Vector2d(x, y), Eigen::Vector2d(x2, y2)});
    }
  }
  if (corrs.size() < 8) {
    throw Error(ErrorKind::kDegenerate, "only " + std::to_string(corrs.size()) +
                                            " correspondences stay inside the image");
  }
  return corrs;
}

FundamentalMatrix estimate_fundamental_8pt(std::span<const Correspondence> corrs) {
  if (corrs.size() < 8) {
    throw Error(ErrorKind::kEstimation, "8-point estimation needs at least 8 pairs");
  }
  const Normalization n1 = hartley(corrs, false);
  const Normalization n2 = hartley(corrs, true);
  if (n1.spread <= 1e-12 || n2.spread <= 1e-12) {
    throw Error(ErrorKind::kEstimation, "correspondences are coincident");
  }

  const Eigen::Index rows = std::max<Eigen::Index>(9, static_cast<Eigen::Index>(corrs.size()));
  Eigen::Matrix<double, Eigen::Dynamic, 9> a = Eigen::Matrix<double, Eigen::Dynamic, 9>::Zero(rows, 9);
  for (std::size_t i = 0; i < corrs.size(); ++i)
    a.row(static_cast<Eigen::Index>(i)) = design_row(n1, n2, corrs[i]);
  // A and the R factor of its QR share singular values and right vectors, and
  // the fixed 9x9 SVD is far cheaper than a dynamic one.
  Eigen::Matrix<double, 9, 9> square;
  if (rows == 9) {
    square = a;
  } else {
    Eigen::HouseholderQR<Eigen::Matrix<double, Eigen::Dynamic, 9>> qr(a);
    square = qr.matrixQR().topRows<9>().triangularView<Eigen::Upper>();
  }
  Eigen::JacobiSVD<Eigen::Matrix<double, 9, 9>> svd(square, Eigen::ComputeFullV);
  const auto &s = svd.singularValues();
  // Rank below 6 cannot even pin the planar-translation family.
  const double tol = 1e-10 * s(0);
  int rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) rank += s(i) > tol ? 1 : 0;
  if (rank < 6) {
    throw Error(ErrorKind::kEstimation, "degenerate correspondence configuration (rank " +
                                            std::to_string(rank) + ")");
  }
  return finish(svd.matrixV().col(8), n1, n2);
}

double sampson_distance(const Eigen::Matrix3d &f, const Eigen::Vector2d &p1,
                        const Eigen::Vector2d &p2) {
  return sampson_fast(f, p1, p2);
}

namespace {

// Exactly eight pairs of full rank have a one-dimensional null space, which a
// pivoted LU finds much faster than the SVD. Anything else takes the general path.
FundamentalMatrix fit_sample(std::span<const Correspondence> sample) {
  const Normalization n1 = hartley(sample, false);
  const Normalization n2 = hartley(sample, true);
  if (n1.spread > 1e-12 && n2.spread > 1e-12) {
    Eigen::Matrix<double, 8, 9> a;
    for (Eigen::Index i = 0; i < 8; ++i) a.row(i) = design_row(n1, n2, sample[static_cast<std::size_t>(i)]);
    Eigen::FullPivLU<Eigen::Matrix<double, 8, 9>> lu(a);
    lu.setThreshold(1e-10);
    if (lu.rank() == 8) {
      Eigen::Matrix<double, 9, 1> f = lu.kernel().col(0);
      f.normalize();
      return finish(f, n1, n2);
    }
  }
  return estimate_fundamental_8pt(sample);
}

}  // namespace

FundamentalMatrix estimate_fundamental_lmeds(std::span<const Correspondence> corrs,
                                             const LmedsOptions &options, LmedsReport *report) {
  const std::size_t n = corrs.size();
  if (n < 8) throw Error(ErrorKind::kEstimation, "LMedS needs at least 8 pairs");
  if (options.iterations < 1) throw Error(ErrorKind::kConfig, "LMedS iterations must be >= 1");

  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> pool(n);
  std::vector<Correspondence> sample(8);
  std::vector<double> residuals(n);
  double best_median = std::numeric_limits<double>::infinity();
  Eigen::Matrix3d best = Eigen::Matrix3d::Zero();
  bool have_best = false;
  int degenerate = 0;

  for (int it = 0; it < options.iterations; ++it) {
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t k = 0; k < 8; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, n - 1);
      std::swap(pool[k], pool[pick(rng)]);
      sample[k] = corrs[pool[k]];
    }
    FundamentalMatrix candidate;
    try {
      candidate = fit_sample(sample);
    } catch (const Error &) {
      ++degenerate;
      continue;
    }
    // The median beats the best so far only if fewer than n - n/2 residuals
    // reach it, so a hopeless candidate is dropped early.
    const std::size_t allowed = n - n / 2 - 1;
    std::size_t reaching = 0;
    std::size_t i = 0;
    for (; i < n && reaching <= allowed; ++i) {
      residuals[i] = sampson_fast(candidate.m, corrs[i].p1, corrs[i].p2);
      if (residuals[i] >= best_median) ++reaching;
    }
    if (reaching > allowed) continue;
    const double med = median_in_place(residuals);
    if (med < best_median) {
      best_median = med;
      best = candidate.m;
      have_best = true;
    }
  }
  if (!have_best) throw Error(ErrorKind::kEstimation, "every LMedS sample was degenerate");

  const double scale = 1.4826 * (1.0 + 5.0 / static_cast<double>(std::max<std::size_t>(n - 7, 1))) *
                       std::sqrt(best_median);
  const double threshold = (2.5 * scale) * (2.5 * scale);
  std::vector<Correspondence> inliers;
  for (const auto &c : corrs) {
    if (sampson_fast(best, c.p1, c.p2) <= threshold) inliers.push_back(c);
  }
  FundamentalMatrix result{best};
  if (inliers.size() >= 8) {
    try {
      result = estimate_fundamental_8pt(inliers);
    } catch (const Error &) {
      // keep the best sample model
    }
  }
  if (report != nullptr) {
    report->best_median = best_median;
    report->robust_scale = scale;
    report->inliers = inliers.size();
    report->degenerate_samples = degenerate;
  }
  return result;
}

SampsonMap sampson_map(const StabilizedFlow &flow, const FundamentalMatrix &f) {
  const int w = flow.width();
  const int h = flow.height();
  SampsonMap out;
  out.values = Grid<double>(w, h, 0.0);
  out.out_of_bounds = Grid<std::uint8_t>(w, h, 0);
  const Eigen::Matrix3d &m = f.m;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double x2 = x + flow.u(x, y);
      const double y2 = y + flow.v(x, y);
      if (x2 < 0.0 || y2 < 0.0 || x2 > w - 1 || y2 > h - 1) {
        out.out_of_bounds(x, y) = 1;
        ++out.out_of_bounds_count;
        continue;
      }
      const Eigen::Vector3d fp1 = m * Eigen::Vector3d(x, y, 1.0);
      const Eigen::Vector3d ftp2 = m.transpose() * Eigen::Vector3d(x2, y2, 1.0);
      const double den = fp1(0) * fp1(0) + fp1(1) * fp1(1) + ftp2(0) * ftp2(0) + ftp2(1) * ftp2(1);
      if (den < kSampsonMinDenominator) {
        ++out.near_epipole_count;
        continue;
      }
      const double num = x2 * fp1(0) + y2 * fp1(1) + fp1(2);
      out.values(x, y) = num * num / den;
    }
  }
  return out;
}

double quantile(std::span<const double> values, double q) {
  if (values.empty()) throw Error(ErrorKind::kInput, "quantile of an empty set");
  std::vector<double> copy(values.begin(), values.end());
  const auto idx = static_cast<std::size_t>(std::floor(std::clamp(q, 0.0, 1.0) *
                                                       static_cast<double>(copy.size() - 1)));
  std::nth_element(copy.begin(), copy.begin() + static_cast<std::ptrdiff_t>(idx), copy.end());
  return copy[idx];
}

MotionFeatureMap motion_feature_map(std::span<const Grid<double>> maps, bool normalize) {
  if (maps.empty()) throw Error(ErrorKind::kInput, "no Sampson maps to average");
  const Grid<double> &first = maps.front();
  MotionFeatureMap out;
  out.values = Grid<double>(first.width(), first.height(), 0.0);
  auto acc = out.values.values();
  for (const auto &m : maps) {
    if (!m.same_shape(first)) throw Error(ErrorKind::kDimensionMismatch, "Sampson maps differ in size");
    const auto v = m.values();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
  }
  const double count = static_cast<double>(maps.size());
  for (double &a : acc) a /= count;

  if (normalize) {
    const double p99 = quantile(acc, 0.99);
    out.normalization_scale = std::max(p99, kMinNormalizationScale);
    for (double &a : acc) a = std::clamp(a / out.normalization_scale, 0.0, kMotionMapClamp);
    out.normalized = true;
  }
  return out;
}

}  // namespace turbseg
