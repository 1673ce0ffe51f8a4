#pragma once

#include <cassert>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace turbseg {

// Row-major 2-D grid with value semantics. (x, y) indexing, x is the column.
template <typename T>
class Grid {
public:
  Grid() = default;
  Grid(int width, int height, T fill = T{})
      : width_(width), height_(height),
        data_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill) {
    assert(width >= 0 && height >= 0);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  bool contains(int x, int y) const {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  T &operator()(int x, int y) {
    assert(contains(x, y));
    return data_[index(x, y)];
  }
  const T &operator()(int x, int y) const {
    assert(contains(x, y));
    return data_[index(x, y)];
  }

  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  T *data() { return data_.data(); }
  const T *data() const { return data_.data(); }

  bool same_shape(const Grid &other) const {
    return width_ == other.width_ && height_ == other.height_;
  }
  template <typename U>
  bool same_shape(const Grid<U> &other) const {
    return width_ == other.width() && height_ == other.height();
  }

  friend bool operator==(const Grid &, const Grid &) = default;

private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

// Bilinear sample at continuous position (x, y). Taps outside the grid take
// `outside`, so samples straddling the border fade toward it.
template <typename T>
double sample_bilinear(const Grid<T> &grid, double x, double y, double outside = 0.0) {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const int x0 = static_cast<int>(fx);
  const int y0 = static_cast<int>(fy);
  const double ax = x - fx;
  const double ay = y - fy;
  auto tap = [&](int xi, int yi) -> double {
    return grid.contains(xi, yi) ? static_cast<double>(grid(xi, yi)) : outside;
  };
  if (ax == 0.0 && ay == 0.0) return tap(x0, y0);
  const double top = (1.0 - ax) * tap(x0, y0) + ax * tap(x0 + 1, y0);
  const double bottom = (1.0 - ax) * tap(x0, y0 + 1) + ax * tap(x0 + 1, y0 + 1);
  return (1.0 - ay) * top + ay * bottom;
}

// Bilinear sample with coordinates clamped to the grid (edge replication).
template <typename T>
double sample_bilinear_clamped(const Grid<T> &grid, double x, double y) {
  const double cx = std::clamp(x, 0.0, static_cast<double>(grid.width() - 1));
  const double cy = std::clamp(y, 0.0, static_cast<double>(grid.height() - 1));
  const int x0 = static_cast<int>(std::floor(cx));
  const int y0 = static_cast<int>(std::floor(cy));
  const int x1 = std::min(x0 + 1, grid.width() - 1);
  const int y1 = std::min(y0 + 1, grid.height() - 1);
  const double ax = cx - x0;
  const double ay = cy - y0;
  const double top = (1.0 - ax) * grid(x0, y0) + ax * grid(x1, y0);
  const double bottom = (1.0 - ax) * grid(x0, y1) + ax * grid(x1, y1);
  return (1.0 - ay) * top + ay * bottom;
}

}  // namespace turbseg
