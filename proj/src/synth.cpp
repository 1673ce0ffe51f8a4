#include "turbseg/synth.hpp"

#include "turbseg/error.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>

namespace turbseg {

namespace {

// Smooth random field: white noise filtered by a Gaussian of the given sigma.
cv::Mat filtered_noise(int width, int height, double sigma, std::mt19937_64 &rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  cv::Mat noise(height, width, CV_64F);
  for (int y = 0; y < height; ++y) {
    auto *row = noise.ptr<double>(y);
    for (int x = 0; x < width; ++x) row[x] = normal(rng);
  }
  if (sigma > 0.0) {
    cv::Mat out;
    cv::GaussianBlur(noise, out, cv::Size(0, 0), sigma, sigma, cv::BORDER_REFLECT);
    return out;
  }
  return noise;
}

void rescale_to(cv::Mat &m, double lo, double hi) {
  double mn = 0.0, mx = 0.0;
  cv::minMaxLoc(m, &mn, &mx);
  if (mx - mn <= 0.0) {
    m.setTo(0.5 * (lo + hi));
    return;
  }
  m = (m - mn) * ((hi - lo) / (mx - mn)) + lo;
}

Grid<double> to_grid(const cv::Mat &m) {
  Grid<double> g(m.cols, m.rows);
  for (int y = 0; y < m.rows; ++y) {
    const auto *row = m.ptr<double>(y);
    for (int x = 0; x < m.cols; ++x) g(x, y) = row[x];
  }
  return g;
}

struct MoverTexture {
  Grid<double> values;  // sized to the mover bounding box plus a margin
  double half_w = 0.0;
  double half_h = 0.0;
};

bool inside(const Mover &m, double lx, double ly) {
  if (m.shape == MoverShape::kDisk) {
    const double r = 0.5 * m.width;
    return lx * lx + ly * ly <= r * r;
  }
  return std::abs(lx) <= 0.5 * m.width && std::abs(ly) <= 0.5 * m.height;
}

double mover_height(const Mover &m) {
  return m.shape == MoverShape::kDisk ? m.width : m.height;
}

constexpr double kDepthSmoothing = 40.0;

class Scene {
public:
  explicit Scene(const SceneSpec &spec) : spec_(spec) {
    double shake = 0.0;
    for (const auto &s : spec.camera_shake) shake = std::max({shake, std::abs(s[0]), std::abs(s[1])});
    pad_ = static_cast<int>(std::ceil(shake * (1.0 + spec.parallax) + 5.0 * spec.jitter_sigma)) + 4;

    std::mt19937_64 rng(spec.seed);
    const int tw = spec.width + 2 * pad_;
    const int th = spec.height + 2 * pad_;
    cv::Mat fine = filtered_noise(tw, th, 2.0, rng);
    cv::Mat coarse = filtered_noise(tw, th, 8.0, rng);
    rescale_to(fine, 0.0, 1.0);
    rescale_to(coarse, 0.0, 1.0);
    cv::Mat bg = fine + coarse;
    rescale_to(bg, 0.15, 0.85);
    background_ = to_grid(bg);

    for (const auto &m : spec.movers) {
      MoverTexture tex;
      tex.half_w = 0.5 * m.width;
      tex.half_h = 0.5 * mover_height(m);
      const int w = static_cast<int>(std::ceil(m.width)) + 4;
      const int h = static_cast<int>(std::ceil(mover_height(m))) + 4;
      cv::Mat noise = filtered_noise(w, h, 1.5, rng);
      rescale_to(noise, -0.08, 0.08);
      noise += m.intensity;
      tex.values = to_grid(noise);
      textures_.push_back(std::move(tex));
    }
    if (spec.parallax > 0.0) {
      cv::Mat d = filtered_noise(tw, th, kDepthSmoothing, rng);
      rescale_to(d, 1.0 - spec.parallax, 1.0 + spec.parallax);
      depth_ = to_grid(d);
    }
    jitter_rng_seed_ = rng();
  }

  double depth(double X, double Y) const {
    if (depth_.empty()) return 1.0;
    return sample_bilinear_clamped(depth_, X + pad_, Y + pad_);
  }

  // Static background point seen at camera position (x, y) in frame t.
  std::array<double, 2> background_point(double x, double y, int t) const {
    const auto s = shake(t);
    double X = x - s[0];
    double Y = y - s[1];
    if (depth_.empty()) return {X, Y};
    for (int it = 0; it < 100; ++it) {
      const double d = depth(X, Y);
      const double nx = x - s[0] * d;
      const double ny = y - s[1] * d;
      const double delta = std::abs(nx - X) + std::abs(ny - Y);
      X = nx;
      Y = ny;
      if (delta < 1e-10) break;
    }
    return {X, Y};
  }

  std::array<double, 2> shake(int t) const {
    if (spec_.camera_shake.empty()) return {0.0, 0.0};
    return spec_.camera_shake[static_cast<std::size_t>(t)];
  }

  // Topmost mover whose footprint holds world point (X, Y) at time t, or -1.
  int mover_at(double X, double Y, int t) const {
    for (int k = static_cast<int>(spec_.movers.size()) - 1; k >= 0; --k) {
      const Mover &m = spec_.movers[static_cast<std::size_t>(k)];
      if (inside(m, X - (m.x + m.vx * t), Y - (m.y + m.vy * t))) return k;
    }
    return -1;
  }

  double background(double X, double Y) const {
    return sample_bilinear_clamped(background_, X + pad_, Y + pad_);
  }

  double mover_radiance(int k, double X, double Y, int t) const {
    const Mover &m = spec_.movers[static_cast<std::size_t>(k)];
    const MoverTexture &tex = textures_[static_cast<std::size_t>(k)];
    const double lx = X - (m.x + m.vx * t) + tex.half_w + 2.0;
    const double ly = Y - (m.y + m.vy * t) + tex.half_h + 2.0;
    return std::clamp(sample_bilinear_clamped(tex.values, lx, ly), 0.0, 1.0);
  }

  std::uint64_t jitter_seed() const { return jitter_rng_seed_; }

private:
  const SceneSpec &spec_;
  int pad_ = 0;
  Grid<double> background_;
  std::vector<MoverTexture> textures_;
  Grid<double> depth_;
  std::uint64_t jitter_rng_seed_ = 0;
};

void make_jitter(const SceneSpec &spec, std::mt19937_64 &rng, Grid<float> &ju, Grid<float> &jv) {
  ju = Grid<float>(spec.width, spec.height, 0.0f);
  jv = Grid<float>(spec.width, spec.height, 0.0f);
  cv::Mat u = filtered_noise(spec.width, spec.height, spec.jitter_corr_len, rng);
  cv::Mat v = filtered_noise(spec.width, spec.height, spec.jitter_corr_len, rng);
  if (spec.jitter_sigma <= 0.0) return;
  const double ms = (cv::sum(u.mul(u))[0] + cv::sum(v.mul(v))[0]) /
                    static_cast<double>(spec.width) / spec.height;
  const double scale = ms > 0.0 ? spec.jitter_sigma / std::sqrt(ms) : 0.0;
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      ju(x, y) = static_cast<float>(u.at<double>(y, x) * scale);
      jv(x, y) = static_cast<float>(v.at<double>(y, x) * scale);
    }
  }
}

struct Sample2 {
  double u, v;
  double ux, uy, vx, vy;  // partial derivatives
};

// Bilinear values and gradients of (ju, jv), clamped like sample_bilinear_clamped.
Sample2 sample_jitter(const Grid<float> &ju, const Grid<float> &jv, double x, double y) {
  const int w = ju.width();
  const int h = ju.height();
  const bool inside_x = x > 0.0 && x < w - 1;
  const bool inside_y = y > 0.0 && y < h - 1;
  const double cx = std::clamp(x, 0.0, static_cast<double>(w - 1));
  const double cy = std::clamp(y, 0.0, static_cast<double>(h - 1));
  const int x0 = static_cast<int>(std::floor(cx));
  const int y0 = static_cast<int>(std::floor(cy));
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double ax = cx - x0;
  const double ay = cy - y0;
  auto eval = [&](const Grid<float> &g, double &val, double &gx, double &gy) {
    const double a = g(x0, y0), b = g(x1, y0), c = g(x0, y1), d = g(x1, y1);
    const double top = (1.0 - ax) * a + ax * b;
    const double bottom = (1.0 - ax) * c + ax * d;
    val = (1.0 - ay) * top + ay * bottom;
    gx = inside_x ? (1.0 - ay) * (b - a) + ay * (d - c) : 0.0;
    gy = inside_y ? bottom - top : 0.0;
  };
  Sample2 s{};
  eval(ju, s.u, s.ux, s.uy);
  eval(jv, s.v, s.vx, s.vy);
  return s;
}

// Solves p + j(p) = target for p: Newton steps, with a plain fixed-point step
// whenever the Jacobian is near singular or a step does not shrink the residual.
std::array<double, 2> invert_jitter(const Grid<float> &ju, const Grid<float> &jv, double tx,
                                    double ty) {
  double px = tx - sample_bilinear_clamped(ju, tx, ty);
  double py = ty - sample_bilinear_clamped(jv, tx, ty);
  Sample2 s = sample_jitter(ju, jv, px, py);
  double rx = px + s.u - tx;
  double ry = py + s.v - ty;
  for (int it = 0; it < 50 && std::abs(rx) + std::abs(ry) >= 1e-8; ++it) {
    const double a = 1.0 + s.ux, b = s.uy, c = s.vx, d = 1.0 + s.vy;
    const double det = a * d - b * c;
    double nx = tx - s.u, ny = ty - s.v;
    if (std::abs(det) > 1e-3) {
      nx = px - (d * rx - b * ry) / det;
      ny = py - (a * ry - c * rx) / det;
    }
    Sample2 ns = sample_jitter(ju, jv, nx, ny);
    double nrx = nx + ns.u - tx, nry = ny + ns.v - ty;
    if (std::abs(nrx) + std::abs(nry) >= std::abs(rx) + std::abs(ry)) {
      nx = tx - s.u;
      ny = ty - s.v;
      ns = sample_jitter(ju, jv, nx, ny);
      nrx = nx + ns.u - tx;
      nry = ny + ns.v - ty;
    }
    px = nx;
    py = ny;
    s = ns;
    rx = nrx;
    ry = nry;
  }
  return {px, py};
}

std::string trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string &text, const std::string &key) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (trim(text.substr(used)).empty() && std::isfinite(v)) return v;
  } catch (const std::exception &) {
  }
  throw Error(ErrorKind::kInput, "scene spec: bad number '" + text + "' for " + key);
}

}  // namespace

void SceneSpec::validate() const {
  if (width < 16 || height < 16) throw Error(ErrorKind::kInput, "scene spec: frame size below 16x16");
  if (frame_count < 3) throw Error(ErrorKind::kInput, "scene spec: frame_count must be >= 3");
  if (!(jitter_sigma >= 0.0)) throw Error(ErrorKind::kInput, "scene spec: jitter_sigma must be >= 0");
  if (!(jitter_corr_len >= 0.0)) throw Error(ErrorKind::kInput, "scene spec: jitter_corr_len must be >= 0");
  if (!(parallax >= 0.0 && parallax <= 0.9)) throw Error(ErrorKind::kInput, "scene spec: parallax must lie in [0, 0.9]");
  if (!(blur_sigma >= 0.0)) throw Error(ErrorKind::kInput, "scene spec: blur_sigma must be >= 0");
  if (max_offset < 1) throw Error(ErrorKind::kInput, "scene spec: max_offset must be >= 1");
  if (!camera_shake.empty() && static_cast<int>(camera_shake.size()) != frame_count)
    throw Error(ErrorKind::kInput, "scene spec: camera_shake needs one entry per frame");
  for (std::size_t k = 0; k < movers.size(); ++k) {
    const Mover &m = movers[k];
    if (!(m.width > 0.0) || !(mover_height(m) > 0.0))
      throw Error(ErrorKind::kInput, "scene spec: mover " + std::to_string(k + 1) + " has no area");
    if (m.intensity < 0.0 || m.intensity > 1.0)
      throw Error(ErrorKind::kInput, "scene spec: mover intensity outside [0, 1]");
    for (int t = 0; t < frame_count; ++t) {
      const double sx = camera_shake.empty() ? 0.0 : camera_shake[static_cast<std::size_t>(t)][0];
      const double sy = camera_shake.empty() ? 0.0 : camera_shake[static_cast<std::size_t>(t)][1];
      const double cx = m.x + m.vx * t + sx;
      const double cy = m.y + m.vy * t + sy;
      const double hw = 0.5 * m.width;
      const double hh = 0.5 * mover_height(m);
      if (cx - hw < 0.0 || cy - hh < 0.0 || cx + hw > width - 1 || cy + hh > height - 1)
        throw Error(ErrorKind::kInput, "scene spec: mover " + std::to_string(k + 1) +
                                           " leaves the frame at t=" + std::to_string(t));
    }
  }
}

SyntheticSequence generate_sequence(const SceneSpec &spec) {
  spec.validate();
  const int W = spec.width;
  const int H = spec.height;
  const int T = spec.frame_count;
  const Scene scene(spec);

  SyntheticSequence out;
  std::mt19937_64 jrng(scene.jitter_seed());
  out.jitter_u.resize(static_cast<std::size_t>(T));
  out.jitter_v.resize(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t)
    make_jitter(spec, jrng, out.jitter_u[static_cast<std::size_t>(t)],
                out.jitter_v[static_cast<std::size_t>(t)]);

  // World point and owning mover seen by every pixel of every frame.
  struct Sample {
    double X, Y;
    int mover;
    double depth;  // background only
  };
  std::vector<std::vector<Sample>> seen(static_cast<std::size_t>(T));
  std::vector<Frame> frames;
  out.gt_masks.resize(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    const auto &ju = out.jitter_u[static_cast<std::size_t>(t)];
    const auto &jv = out.jitter_v[static_cast<std::size_t>(t)];
    const auto s = scene.shake(t);
    auto &samples = seen[static_cast<std::size_t>(t)];
    samples.resize(static_cast<std::size_t>(W) * H);
    cv::Mat image(H, W, CV_64F);
    for (int k = 0; k < static_cast<int>(spec.movers.size()); ++k)
      out.gt_masks[static_cast<std::size_t>(t)].push_back(make_binary_mask(W, H, k + 1, t));
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const double cx = x + ju(x, y);
        const double cy = y + jv(x, y);
        double X = cx - s[0];
        double Y = cy - s[1];
        const int k = scene.mover_at(X, Y, t);
        if (k < 0) {
          const auto b = scene.background_point(cx, cy, t);
          X = b[0];
          Y = b[1];
        }
        samples[static_cast<std::size_t>(y) * W + x] = {X, Y, k, k < 0 ? scene.depth(X, Y) : 1.0};
        image.at<double>(y, x) = k >= 0 ? scene.mover_radiance(k, X, Y, t) : scene.background(X, Y);
        if (k >= 0) out.gt_masks[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)].values(x, y) = 1.0;
      }
    }
    if (spec.blur_sigma > 0.0)
      cv::GaussianBlur(image, image, cv::Size(0, 0), spec.blur_sigma, spec.blur_sigma,
                       cv::BORDER_REFLECT);
    Frame f;
    f.planes.emplace_back(W, H);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        f.planes[0](x, y) = static_cast<float>(std::clamp(image.at<double>(y, x), 0.0, 1.0));
    frames.push_back(std::move(f));
  }
  out.frames = FrameSequence(std::move(frames));

  auto flow_between = [&](int t, int t2) {
    FlowField flow(W, H);
    flow.source_frame = t;
    flow.target_frame = t2;
    const auto s = scene.shake(t);
    const auto s2 = scene.shake(t2);
    const auto &samples = seen[static_cast<std::size_t>(t)];
    const auto &ju2 = out.jitter_u[static_cast<std::size_t>(t2)];
    const auto &jv2 = out.jitter_v[static_cast<std::size_t>(t2)];
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const Sample &smp = samples[static_cast<std::size_t>(y) * W + x];
        // Camera positions of the point in both frames.
        double cx = 0.0, cy = 0.0, cx2 = 0.0, cy2 = 0.0;
        if (smp.mover >= 0) {
          const Mover &m = spec.movers[static_cast<std::size_t>(smp.mover)];
          cx = smp.X + s[0];
          cy = smp.Y + s[1];
          cx2 = smp.X + m.vx * (t2 - t) + s2[0];
          cy2 = smp.Y + m.vy * (t2 - t) + s2[1];
        } else {
          const double d = smp.depth;
          cx = smp.X + s[0] * d;
          cy = smp.Y + s[1] * d;
          cx2 = smp.X + s2[0] * d;
          cy2 = smp.Y + s2[1] * d;
        }
        double dx = 0.0, dy = 0.0;
        if (spec.rigid_flow) {
          dx = cx2 - cx;
          dy = cy2 - cy;
        } else {
          const auto p2 = invert_jitter(ju2, jv2, cx2, cy2);
          dx = p2[0] - x;
          dy = p2[1] - y;
        }
        flow.u(x, y) = static_cast<float>(dx);
        flow.v(x, y) = static_cast<float>(dy);
      }
    }
    return flow;
  };

  for (int t = 0; t < T; ++t) {
    FlowSet set = build_flow_set(T, t, spec.max_offset,
                                 [&](int a, int b) { return flow_between(a, b); });
    out.gt_flows.push_back(std::move(set));
  }
  return out;
}

SceneSpec parse_scene_spec(std::istream &in) {
  SceneSpec spec;
  std::optional<std::array<double, 2>> pan;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::kInput, "scene spec line " + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::replace(key.begin(), key.end(), '-', '_');
    const std::string value = trim(line.substr(eq + 1));
    auto as_int = [&] {
      const double v = parse_number(value, key);
      if (v != std::floor(v)) throw Error(ErrorKind::kInput, "scene spec: " + key + " must be an integer");
      return static_cast<int>(v);
    };
    if (key == "width") {
      spec.width = as_int();
    } else if (key == "height") {
      spec.height = as_int();
    } else if (key == "frame_count" || key == "frames") {
      spec.frame_count = as_int();
    } else if (key == "jitter_sigma") {
      spec.jitter_sigma = parse_number(value, key);
    } else if (key == "jitter_corr_len") {
      spec.jitter_corr_len = parse_number(value, key);
    } else if (key == "parallax") {
      spec.parallax = parse_number(value, key);
    } else if (key == "blur_sigma") {
      spec.blur_sigma = parse_number(value, key);
    } else if (key == "seed" || key == "rng_seed") {
      spec.seed = static_cast<std::uint64_t>(std::stoull(value));
    } else if (key == "max_offset") {
      spec.max_offset = as_int();
    } else if (key == "rigid_flow") {
      spec.rigid_flow = value == "1" || value == "true" || value == "yes";
    } else if (key == "camera_shake") {
      spec.camera_shake.clear();
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ';')) {
        item = trim(item);
        if (item.empty()) continue;
        const auto comma = item.find(',');
        if (comma == std::string::npos)
          throw Error(ErrorKind::kInput, "scene spec: camera_shake entries are dx,dy");
        spec.camera_shake.push_back({parse_number(trim(item.substr(0, comma)), key),
                                     parse_number(trim(item.substr(comma + 1)), key)});
      }
    } else if (key == "camera_pan") {
      const auto comma = value.find(',');
      if (comma == std::string::npos) throw Error(ErrorKind::kInput, "scene spec: camera_pan is dx,dy");
      pan = std::array<double, 2>{parse_number(trim(value.substr(0, comma)), key),
                                  parse_number(trim(value.substr(comma + 1)), key)};
    } else if (key == "mover") {
      std::stringstream ss(value);
      std::string shape;
      ss >> shape;
      Mover m;
      if (shape == "rect" || shape == "rectangle") {
        m.shape = MoverShape::kRectangle;
      } else if (shape == "disk") {
        m.shape = MoverShape::kDisk;
      } else {
        throw Error(ErrorKind::kInput, "scene spec: unknown mover shape '" + shape + "'");
      }
      std::vector<double> nums;
      std::string tok;
      while (ss >> tok) nums.push_back(parse_number(tok, key));
      if (nums.size() != 7)
        throw Error(ErrorKind::kInput, "scene spec: mover needs shape w h x y vx vy intensity");
      m.width = nums[0];
      m.height = nums[1];
      m.x = nums[2];
      m.y = nums[3];
      m.vx = nums[4];
      m.vy = nums[5];
      m.intensity = nums[6];
      spec.movers.push_back(m);
    } else {
      throw Error(ErrorKind::kInput, "scene spec: unknown key '" + key + "'");
    }
  }
  if (pan) {
    if (!spec.camera_shake.empty())
      throw Error(ErrorKind::kInput, "scene spec: camera_pan and camera_shake are exclusive");
    for (int t = 0; t < spec.frame_count; ++t) spec.camera_shake.push_back({(*pan)[0] * t, (*pan)[1] * t});
  }
  spec.validate();
  return spec;
}

SceneSpec load_scene_spec(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kInput, "cannot open scene spec " + path.string());
  return parse_scene_spec(in);
}

void write_synthetic(const SyntheticSequence &sequence, const std::filesystem::path &directory) {
  namespace fs = std::filesystem;
  char name[64];
  fs::create_directories(directory / "frames");
  fs::create_directories(directory / "flows");
  for (int t = 0; t < sequence.frames.count(); ++t) {
    std::snprintf(name, sizeof name, "frame_%04d.png", t);
    write_frame_image(sequence.frames[t], directory / "frames" / name);
    for (const auto &mask : sequence.gt_masks[static_cast<std::size_t>(t)]) {
      char obj[32];
      std::snprintf(obj, sizeof obj, "obj%02d", mask.object_id);
      fs::create_directories(directory / "gt" / obj);
      write_mask_image(mask, directory / "gt" / obj / name);
    }
  }
  for (const auto &set : sequence.gt_flows)
    for (const auto &[offset, flow] : set.flows)
      write_flow_file(flow, directory / "flows" / flow_file_name(set.center_frame, offset));
}

FlowProvider ground_truth_flow_provider(const SyntheticSequence &sequence) {
  return [&sequence](int source, int target) -> FlowField {
    const auto &set = sequence.gt_flows.at(static_cast<std::size_t>(source));
    const int offset = target - source;
    if (!set.has(offset))
      throw Error(ErrorKind::kInput, "no ground-truth flow for offset " + std::to_string(offset));
    return set.at(offset);
  };
}

}  // namespace turbseg
