#include "test_support.hpp"

#include "turbseg/error.hpp"
#include "turbseg/synth.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

using namespace turbseg;

namespace {

SceneSpec small_scene() {
  SceneSpec s;
  s.width = 96;
  s.height = 64;
  s.frame_count = 6;
  s.max_offset = 2;
  return s;
}

float sample(const Grid<float> &g, double x, double y) { return static_cast<float>(sample_bilinear_clamped(g, x, y)); }

}  // namespace

TEST_CASE("mover flow without turbulence") {
  SceneSpec s = small_scene();
  s.movers.push_back({MoverShape::kRectangle, 16, 12, 30.5, 30.5, 2, 0, 0.9});
  const SyntheticSequence seq = generate_sequence(s);
  REQUIRE(seq.frames.count() == 6);
  REQUIRE(seq.gt_masks.size() == 6u);
  const FlowField &f = seq.gt_flows[2].at(1);
  CHECK(f.source_frame == 2);
  CHECK(f.target_frame == 3);
  const MaskImage &m = seq.gt_masks[2][0];
  CHECK(m.object_id == 1);
  CHECK(m.area() == 16u * 12u);
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 96; ++x) {
      const bool on = m.values(x, y) >= 0.5;
      CHECK(f.u(x, y) == (on ? 2.0f : 0.0f));
      CHECK(f.v(x, y) == 0.0f);
    }
  }
  // Footprint advances with the velocity.
  const auto &next = seq.gt_masks[3][0];
  for (int y = 0; y < 64; ++y)
    for (int x = 2; x < 96; ++x) CHECK(next.values(x, y) == m.values(x - 2, y));
}

TEST_CASE("static scene: zero flows, empty masks, constant frames") {
  const SyntheticSequence seq = generate_sequence(small_scene());
  for (const auto &set : seq.gt_flows)
    for (const auto &[i, f] : set.flows) {
      for (float v : f.u.values()) CHECK(v == 0.0f);
      for (float v : f.v.values()) CHECK(v == 0.0f);
    }
  for (const auto &frame : seq.gt_masks) CHECK(frame.empty());
  for (int t = 1; t < seq.frames.count(); ++t) CHECK(seq.frames.gray(t) == seq.frames.gray(0));
}

TEST_CASE("background stays constant around a mover") {
  SceneSpec s = small_scene();
  s.movers.push_back({MoverShape::kDisk, 14, 0, 30, 30, 3, 1, 0.2});
  const SyntheticSequence seq = generate_sequence(s);
  const Grid<float> first = seq.frames.gray(0);
  for (int t = 1; t < seq.frames.count(); ++t) {
    const Grid<float> g = seq.frames.gray(t);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 96; ++x)
        if (seq.gt_masks[0][0].values(x, y) < 0.5 && seq.gt_masks[static_cast<std::size_t>(t)][0].values(x, y) < 0.5)
          CHECK(g(x, y) == first(x, y));
  }
}

TEST_CASE("determinism and seed dependence") {
  SceneSpec s = small_scene();
  s.jitter_sigma = 1.0;
  s.movers.push_back({MoverShape::kRectangle, 16, 12, 30, 30, 2, 1, 0.9});
  const SyntheticSequence a = generate_sequence(s);
  const SyntheticSequence b = generate_sequence(s);
  for (int t = 0; t < a.frames.count(); ++t) CHECK(a.frames.gray(t) == b.frames.gray(t));
  CHECK(a.gt_flows[1].at(1).u == b.gt_flows[1].at(1).u);
  s.seed = 2;
  const SyntheticSequence c = generate_sequence(s);
  CHECK_FALSE(a.frames.gray(0) == c.frames.gray(0));
}

TEST_CASE("property: jitter RMS matches the requested sigma") {
  for (double sigma : {0.5, 1.0, 1.5}) {
    for (double corr : {3.0, 12.0}) {
      SceneSpec s;
      s.width = 160;
      s.height = 128;
      s.frame_count = 3;
      s.max_offset = 1;
      s.jitter_sigma = sigma;
      s.jitter_corr_len = corr;
      const SyntheticSequence seq = generate_sequence(s);
      for (std::size_t t = 0; t < seq.jitter_u.size(); ++t) {
        double sum = 0.0;
        for (std::size_t i = 0; i < seq.jitter_u[t].size(); ++i) {
          const double u = seq.jitter_u[t].values()[i], v = seq.jitter_v[t].values()[i];
          sum += u * u + v * v;
        }
        const double rms = std::sqrt(sum / static_cast<double>(seq.jitter_u[t].size()));
        CHECK(std::abs(rms - sigma) <= 0.05 * sigma);
      }
    }
  }
}

TEST_CASE("property: ground-truth flows compose on rigid parts") {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    SceneSpec s = small_scene();
    s.width = 128;
    s.height = 96;
    s.seed = seed;
    s.jitter_sigma = 1.0;
    s.parallax = 0.3;
    s.camera_shake = {{0, 0}, {1, 0.5}, {2.5, 0}, {3, -1}, {3, 0}, {4, 1}};
    s.movers.push_back({MoverShape::kRectangle, 20, 16, 40, 40, 2, 1, 0.8});
    const SyntheticSequence seq = generate_sequence(s);
    for (int t = 0; t + 2 < s.frame_count; ++t) {
      const FlowField &a = seq.gt_flows[static_cast<std::size_t>(t)].at(1);
      const FlowField &b = seq.gt_flows[static_cast<std::size_t>(t + 1)].at(1);
      const FlowField &ab = seq.gt_flows[static_cast<std::size_t>(t)].at(2);
      // Keep pixels whose whole neighbourhood is on one side of every
      // mover boundary in all three frames.
      auto near_edge = [&](int x, int y) {
        for (int k = t; k <= t + 2; ++k) {
          const auto &m = seq.gt_masks[static_cast<std::size_t>(k)][0].values;
          const double c = m(x, y);
          for (int dy = -6; dy <= 6; ++dy)
            for (int dx = -6; dx <= 6; ++dx)
              if (m.contains(x + dx, y + dy) && m(x + dx, y + dy) != c) return true;
        }
        return false;
      };
      double worst = 0.0;
      for (int y = 8; y < s.height - 8; ++y) {
        for (int x = 8; x < s.width - 8; ++x) {
          if (near_edge(x, y)) continue;
          const double x1 = x + a.u(x, y), y1 = y + a.v(x, y);
          if (x1 < 1 || y1 < 1 || x1 > s.width - 2 || y1 > s.height - 2) continue;
          const double cu = a.u(x, y) + sample(b.u, x1, y1);
          const double cv = a.v(x, y) + sample(b.v, x1, y1);
          worst = std::max({worst, std::abs(cu - ab.u(x, y)), std::abs(cv - ab.v(x, y))});
        }
      }
      CHECK(worst <= 0.1);
    }
  }
}

TEST_CASE("rigid flow omits the jitter displacement") {
  SceneSpec s = small_scene();
  s.jitter_sigma = 1.0;
  s.rigid_flow = true;
  const SyntheticSequence seq = generate_sequence(s);
  for (float v : seq.gt_flows[2].at(-1).u.values()) CHECK(v == 0.0f);
}

TEST_CASE("invalid scenes are rejected") {
  SceneSpec s = small_scene();
  s.movers.push_back({MoverShape::kRectangle, 16, 12, 30, 30, 20, 0, 0.9});
  try {
    generate_sequence(s);
    FAIL("expected an error for a mover leaving the frame");
  } catch (const Error &e) {
    CHECK(e.kind() == ErrorKind::kInput);
  }
  SceneSpec neg = small_scene();
  neg.jitter_sigma = -1.0;
  CHECK_THROWS_AS(neg.validate(), Error);
  SceneSpec shake = small_scene();
  shake.camera_shake = {{0, 0}};
  CHECK_THROWS_AS(shake.validate(), Error);
  SceneSpec depth = small_scene();
  depth.parallax = 0.95;
  CHECK_THROWS_AS(depth.validate(), Error);
}

TEST_CASE("scene description parsing") {
  std::istringstream in(
      "# comment\n"
      "width = 200\n"
      "height = 100\n"
      "frames = 7\n"
      "jitter-sigma = 0.75   # trailing\n"
      "jitter_corr_len = 3\n"
      "parallax = 0.5\n"
      "camera_pan = 2, -1\n"
      "seed = 9\n"
      "mover = rect 20 10 50 40 1 0 0.9\n"
      "mover = disk 12 0 150 50 -1 0.5 0.1\n");
  const SceneSpec s = parse_scene_spec(in);
  CHECK(s.width == 200);
  CHECK(s.height == 100);
  CHECK(s.frame_count == 7);
  CHECK(s.jitter_sigma == 0.75);
  CHECK(s.jitter_corr_len == 3.0);
  CHECK(s.parallax == 0.5);
  CHECK(s.seed == 9u);
  REQUIRE(s.camera_shake.size() == 7u);
  CHECK(s.camera_shake[3][0] == 6.0);
  CHECK(s.camera_shake[3][1] == -3.0);
  REQUIRE(s.movers.size() == 2u);
  CHECK(s.movers[1].shape == MoverShape::kDisk);
  CHECK(s.movers[1].vy == 0.5);

  std::istringstream bad("mover = triangle 1 2 3 4 5 6 7\n");
  CHECK_THROWS_AS(parse_scene_spec(bad), Error);
  std::istringstream unknown("colour = red\n");
  CHECK_THROWS_AS(parse_scene_spec(unknown), Error);
  CHECK_THROWS_AS(load_scene_spec("/nonexistent/scene.txt"), Error);
}

TEST_CASE("synthetic sequences are written in the interchange formats") {
  SceneSpec s = small_scene();
  s.frame_count = 3;
  s.max_offset = 1;
  s.movers.push_back({MoverShape::kRectangle, 16, 12, 30, 30, 2, 0, 0.9});
  const SyntheticSequence seq = generate_sequence(s);
  testing::TempDir dir;
  write_synthetic(seq, dir.path());
  const FrameSequence frames = load_frames(dir / "frames");
  CHECK(frames.count() == 3);
  CHECK(frames.width() == 96);
  const MaskImage m = read_mask_image(dir.path() / "gt" / "obj01" / "frame_0001.png");
  CHECK(m.values == seq.gt_masks[1][0].values);
  const FlowField f = read_flow_file(dir.path() / "flows" / "flow_0001_-1.flo");
  CHECK(f.u == seq.gt_flows[1].at(-1).u);
  CHECK_FALSE(std::filesystem::exists(dir.path() / "flows" / "flow_0000_-1.flo"));
}
