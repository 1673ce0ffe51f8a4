#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace turbseg {

struct KMeansResult {
  Eigen::MatrixXd centers;  // k x d
  std::vector<int> labels;  // one per point
  double inertia = 0.0;     // sum of squared distances to assigned centers
  int iterations = 0;
};

// k-means++ seeding from a fixed seed, then Lloyd iterations until the
// assignment stops changing. Points are rows.
KMeansResult kmeans(const Eigen::MatrixXd &points, int k, std::uint64_t seed, int max_iterations = 100);

// Lloyd iterations from the given initial centers.
KMeansResult lloyd(const Eigen::MatrixXd &points, Eigen::MatrixXd centers, int max_iterations = 100);

}  // namespace turbseg
