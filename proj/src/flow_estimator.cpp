#include "turbseg/error.hpp"
#include "turbseg/flowstab.hpp"

#include <cmath>
#include <limits>

namespace turbseg {

namespace {

Grid<float> downsample_half(const Grid<float> &in) {
  const int w = std::max(1, in.width() / 2);
  const int h = std::max(1, in.height() / 2);
  Grid<float> out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int sx = std::min(2 * x, in.width() - 1);
      const int sy = std::min(2 * y, in.height() - 1);
      const int sx1 = std::min(sx + 1, in.width() - 1);
      const int sy1 = std::min(sy + 1, in.height() - 1);
      out(x, y) = 0.25f * (in(sx, sy) + in(sx1, sy) + in(sx, sy1) + in(sx1, sy1));
    }
  }
  return out;
}

// Block origins along one axis: 0, step, 2*step, ... plus a final block flush
// with the far edge.
std::vector<int> block_origins(int extent, int patch) {
  std::vector<int> origins;
  const int step = std::max(1, patch / 2);
  for (int o = 0; o + patch <= extent; o += step) origins.push_back(o);
  if (origins.empty() || origins.back() + patch < extent) origins.push_back(extent - patch);
  return origins;
}

double block_ssd(const Grid<float> &src, const Grid<float> &dst, int bx, int by, int dx,
                 int dy, int patch) {
  double ssd = 0.0;
  for (int y = 0; y < patch; ++y) {
    const float *a = src.data() + src.index(bx, by + y);
    const float *b = dst.data() + dst.index(bx + dx, by + y + dy);
    for (int x = 0; x < patch; ++x) {
      const double d = static_cast<double>(a[x]) - static_cast<double>(b[x]);
      ssd += d * d;
    }
  }
  return ssd;
}

double parabolic_offset(double minus, double center, double plus) {
  // An exact match stays on the integer site.
  const double denom = minus - 2.0 * center + plus;
  if (!(center > 0.0) || !(denom > 0.0)) return 0.0;
  return std::clamp(0.5 * (minus - plus) / denom, -0.5, 0.5);
}

// Linear interpolation weights from pixel coordinates onto block centers.
struct AxisLookup {
  std::vector<int> lo;
  std::vector<double> frac;
};

AxisLookup axis_lookup(const std::vector<int> &origins, int patch, int extent) {
  AxisLookup lut;
  lut.lo.resize(static_cast<std::size_t>(extent));
  lut.frac.resize(static_cast<std::size_t>(extent));
  const double half = 0.5 * (patch - 1);
  const int n = static_cast<int>(origins.size());
  int k = 0;
  for (int p = 0; p < extent; ++p) {
    while (k + 1 < n && origins[static_cast<std::size_t>(k + 1)] + half <= p) ++k;
    const double c0 = origins[static_cast<std::size_t>(k)] + half;
    if (k + 1 >= n || p <= c0) {
      lut.lo[static_cast<std::size_t>(p)] = k;
      lut.frac[static_cast<std::size_t>(p)] = 0.0;
      continue;
    }
    const double c1 = origins[static_cast<std::size_t>(k + 1)] + half;
    lut.lo[static_cast<std::size_t>(p)] = k;
    lut.frac[static_cast<std::size_t>(p)] = c1 > c0 ? (p - c0) / (c1 - c0) : 0.0;
  }
  return lut;
}

FlowField match_level(const Grid<float> &src, const Grid<float> &dst, const FlowField *prior,
                      const PyramidFlowParams &params) {
  const int w = src.width();
  const int h = src.height();
  const int patch = params.patch;
  const auto ox = block_origins(w, patch);
  const auto oy = block_origins(h, patch);
  const int nbx = static_cast<int>(ox.size());
  const int nby = static_cast<int>(oy.size());
  Grid<double> bu(nbx, nby), bv(nbx, nby);

  const int r = params.search;
  const int side = 2 * r + 1;
  std::vector<double> costs(static_cast<std::size_t>(side * side));
  const double inf = std::numeric_limits<double>::infinity();

  for (int j = 0; j < nby; ++j) {
    for (int i = 0; i < nbx; ++i) {
      const int bx = ox[static_cast<std::size_t>(i)];
      const int by = oy[static_cast<std::size_t>(j)];
      int px = 0;
      int py = 0;
      if (prior != nullptr) {
        const double cx = bx + 0.5 * (patch - 1);
        const double cy = by + 0.5 * (patch - 1);
        px = static_cast<int>(std::lround(sample_bilinear_clamped(prior->u, cx, cy)));
        py = static_cast<int>(std::lround(sample_bilinear_clamped(prior->v, cx, cy)));
      }
      double best = inf;
      int best_dx = 0;
      int best_dy = 0;
      long best_norm = std::numeric_limits<long>::max();
      bool found = false;
      for (int sy = -r; sy <= r; ++sy) {
        for (int sx = -r; sx <= r; ++sx) {
          const int dx = px + sx;
          const int dy = py + sy;
          double &c = costs[static_cast<std::size_t>((sy + r) * side + (sx + r))];
          if (bx + dx < 0 || by + dy < 0 || bx + dx + patch > w || by + dy + patch > h) {
            c = inf;
            continue;
          }
          c = block_ssd(src, dst, bx, by, dx, dy, patch);
          const long norm = static_cast<long>(dx) * dx + static_cast<long>(dy) * dy;
          if (c < best || (c == best && norm < best_norm)) {
            best = c;
            best_dx = dx;
            best_dy = dy;
            best_norm = norm;
            found = true;
          }
        }
      }
      double fu = static_cast<double>(px);
      double fv = static_cast<double>(py);
      if (found) {
        fu = best_dx;
        fv = best_dy;
        const int cx = best_dx - px + r;
        const int cy = best_dy - py + r;
        auto cost_at = [&](int sx, int sy) {
          if (sx < 0 || sy < 0 || sx >= side || sy >= side) return inf;
          return costs[static_cast<std::size_t>(sy * side + sx)];
        };
        const double c0 = cost_at(cx, cy);
        const double cxm = cost_at(cx - 1, cy), cxp = cost_at(cx + 1, cy);
        const double cym = cost_at(cx, cy - 1), cyp = cost_at(cx, cy + 1);
        if (std::isfinite(cxm) && std::isfinite(cxp)) fu += parabolic_offset(cxm, c0, cxp);
        if (std::isfinite(cym) && std::isfinite(cyp)) fv += parabolic_offset(cym, c0, cyp);
      }
      bu(i, j) = fu;
      bv(i, j) = fv;
    }
  }

  const AxisLookup lx = axis_lookup(ox, patch, w);
  const AxisLookup ly = axis_lookup(oy, patch, h);
  FlowField flow(w, h);
  for (int y = 0; y < h; ++y) {
    const int j0 = ly.lo[static_cast<std::size_t>(y)];
    const int j1 = std::min(j0 + 1, nby - 1);
    const double ay = ly.frac[static_cast<std::size_t>(y)];
    for (int x = 0; x < w; ++x) {
      const int i0 = lx.lo[static_cast<std::size_t>(x)];
      const int i1 = std::min(i0 + 1, nbx - 1);
      const double ax = lx.frac[static_cast<std::size_t>(x)];
      auto blend = [&](const Grid<double> &g) {
        const double top = (1.0 - ax) * g(i0, j0) + ax * g(i1, j0);
        const double bot = (1.0 - ax) * g(i0, j1) + ax * g(i1, j1);
        return (1.0 - ay) * top + ay * bot;
      };
      flow.u(x, y) = static_cast<float>(blend(bu));
      flow.v(x, y) = static_cast<float>(blend(bv));
    }
  }
  return flow;
}

FlowField upsample_flow(const FlowField &coarse, int width, int height) {
  FlowField fine(width, height);
  const double sx = static_cast<double>(coarse.width()) / width;
  const double sy = static_cast<double>(coarse.height()) / height;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double cx = (x + 0.5) * sx - 0.5;
      const double cy = (y + 0.5) * sy - 0.5;
      fine.u(x, y) = static_cast<float>(sample_bilinear_clamped(coarse.u, cx, cy) / sx);
      fine.v(x, y) = static_cast<float>(sample_bilinear_clamped(coarse.v, cx, cy) / sy);
    }
  }
  return fine;
}

}  // namespace

FlowField estimate_flow_pyramidal(const Grid<float> &src, const Grid<float> &dst,
                                  const PyramidFlowParams &params) {
  if (!src.same_shape(dst)) throw Error(ErrorKind::kDimensionMismatch, "flow frames differ in size");
  if (params.levels < 1 || params.patch < 2 || params.search < 0) {
    throw Error(ErrorKind::kConfig, "invalid pyramid flow parameters");
  }
  std::vector<Grid<float>> src_pyr{src};
  std::vector<Grid<float>> dst_pyr{dst};
  for (int l = 1; l < params.levels; ++l) {
    src_pyr.push_back(downsample_half(src_pyr.back()));
    dst_pyr.push_back(downsample_half(dst_pyr.back()));
  }
  const Grid<float> &coarsest = src_pyr.back();
  if (coarsest.width() < params.patch || coarsest.height() < params.patch) {
    throw Error(ErrorKind::kConfig, "frames too small for the coarsest pyramid level");
  }

  FlowField flow;
  for (int l = params.levels - 1; l >= 0; --l) {
    const auto &s = src_pyr[static_cast<std::size_t>(l)];
    const auto &d = dst_pyr[static_cast<std::size_t>(l)];
    if (l == params.levels - 1) {
      flow = match_level(s, d, nullptr, params);
    } else {
      const FlowField prior = upsample_flow(flow, s.width(), s.height());
      flow = match_level(s, d, &prior, params);
    }
  }
  return flow;
}

}  // namespace turbseg
