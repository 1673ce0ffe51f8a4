#include "turbseg/kmeans.hpp"

#include "turbseg/error.hpp"

#include <limits>
#include <random>

namespace turbseg {

namespace {

Eigen::MatrixXd kmeanspp_init(const Eigen::MatrixXd &points, int k, std::uint64_t seed) {
  const Eigen::Index n = points.rows();
  std::mt19937_64 rng(seed);
  Eigen::MatrixXd centers(k, points.cols());
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centers.row(0) = points.row(first(rng));
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = (points.row(i) - centers.row(c - 1)).squaredNorm();
      auto &slot = d2[static_cast<std::size_t>(i)];
      slot = std::min(slot, d);
      total += slot;
    }
    Eigen::Index chosen = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      for (Eigen::Index i = 0; i < n; ++i) {
        target -= d2[static_cast<std::size_t>(i)];
        if (target <= 0.0) {
          chosen = i;
          break;
        }
        chosen = i;
      }
    } else {
      chosen = first(rng);
    }
    centers.row(c) = points.row(chosen);
  }
  return centers;
}

}  // namespace

KMeansResult lloyd(const Eigen::MatrixXd &points, Eigen::MatrixXd centers, int max_iterations) {
  const Eigen::Index n = points.rows();
  const Eigen::Index k = centers.rows();
  KMeansResult r;
  r.labels.assign(static_cast<std::size_t>(n), -1);
  for (int it = 0; it < max_iterations; ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (Eigen::Index c = 0; c < k; ++c) {
        const double d = (points.row(i) - centers.row(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(c);
        }
      }
      if (r.labels[static_cast<std::size_t>(i)] != best) {
        r.labels[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    r.iterations = it + 1;
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int l = r.labels[static_cast<std::size_t>(i)];
      sums.row(l) += points.row(i);
      ++counts[static_cast<std::size_t>(l)];
    }
    // Empty clusters keep their previous center.
    for (Eigen::Index c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centers.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      }
    }
    if (!changed) break;
  }
  r.centers = std::move(centers);
  for (Eigen::Index i = 0; i < n; ++i) {
    r.inertia += (points.row(i) - r.centers.row(r.labels[static_cast<std::size_t>(i)])).squaredNorm();
  }
  return r;
}

KMeansResult kmeans(const Eigen::MatrixXd &points, int k, std::uint64_t seed, int max_iterations) {
  if (k < 1) throw Error(ErrorKind::kConfig, "k-means needs k >= 1");
  if (points.rows() < k) throw Error(ErrorKind::kInput, "fewer points than clusters");
  return lloyd(points, kmeanspp_init(points, k, seed), max_iterations);
}

}  // namespace turbseg
