#include "test_support.hpp"

#include "turbseg/error.hpp"
#include "turbseg/flowstab.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace turbseg;

namespace {

// F_{s -> d} = (d - s) * V at every pixel.
FlowProvider constant_velocity(int w, int h, float vx, float vy) {
  return [=](int s, int d) {
    return testing::constant_flow(w, h, static_cast<float>(d - s) * vx, static_cast<float>(d - s) * vy, s, d);
  };
}

std::set<int> as_set(const std::vector<int> &v) { return {v.begin(), v.end()}; }

// Smooth random texture: box-filtered noise, values in [0, 1].
Grid<float> texture(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Grid<float> noise = testing::random_grid<float>(w, h, 0.0, 1.0, rng);
  Grid<float> out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      int n = 0;
      for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx)
          if (noise.contains(x + dx, y + dy)) {
            s += noise(x + dx, y + dy);
            ++n;
          }
      out(x, y) = static_cast<float>(s / n);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("flow sets truncate at the sequence boundary") {
  const auto provider = constant_velocity(4, 3, 1.0f, 0.0f);
  FlowSet first = build_flow_set(20, 0, 4, provider);
  CHECK(as_set(first.offsets()) == std::set<int>{1, 2, 3, 4});
  CHECK(as_set(first.missing) == std::set<int>{-4, -3, -2, -1});

  FlowSet mid = build_flow_set(20, 9, 4, provider);
  CHECK(mid.offsets() == std::vector<int>{-4, -3, -2, -1, 1, 2, 3, 4});
  CHECK(mid.missing.empty());
  CHECK(mid.at(-3).source_frame == 9);
  CHECK(mid.at(-3).target_frame == 6);

  FlowSet tiny = build_flow_set(3, 1, 4, provider);
  CHECK(tiny.offsets() == std::vector<int>{-1, 1});
}

TEST_CASE("flow file names") {
  CHECK(flow_file_name(7, 2) == "flow_0007_+2.flo");
  CHECK(flow_file_name(12, -3) == "flow_0012_-3.flo");
}

TEST_CASE("directory provider reports the missing file and offset") {
  testing::TempDir dir;
  write_flow_file(testing::constant_flow(5, 4, 1, 0), dir / flow_file_name(0, 1));
  const FlowProvider provider = directory_flow_provider(dir.path(), 5, 4);
  CHECK(provider(0, 1).u(2, 2) == 1.0f);
  try {
    provider(0, 2);
    FAIL("expected a missing-file error");
  } catch (const Error &e) {
    CHECK(e.kind() == ErrorKind::kInput);
    const std::string msg = e.what();
    CHECK(msg.find("flow_0000_+2.flo") != std::string::npos);
    CHECK(msg.find("offset 2") != std::string::npos);
  }
  const FlowProvider wrong = directory_flow_provider(dir.path(), 6, 4);
  CHECK_THROWS_AS(wrong(0, 1), Error);
}

TEST_CASE("stabilization hand examples") {
  FlowSet set;
  set.center_frame = 5;
  set.max_offset = 2;
  set.flows.emplace(1, testing::constant_flow(3, 2, 2.0f, 0.0f));
  set.flows.emplace(2, testing::constant_flow(3, 2, 4.0f, 0.0f));
  set.flows.emplace(-1, testing::constant_flow(3, 2, 1.0f, 0.0f));

  const auto out = stabilize_flows(set, {{1, 2}, {-1}});
  REQUIRE(out.size() == 2);
  CHECK(out[0].u(1, 1) == 2.0);
  CHECK(out[0].v(1, 1) == 0.0);
  CHECK(out[1].u(0, 0) == -1.0);
  CHECK(out[0].interval == Interval{1, 2});
}

TEST_CASE("intervals shrink to available offsets and empty ones are dropped") {
  const FlowSet set = build_flow_set(20, 1, 4, constant_velocity(4, 4, 0.5f, 0.25f));
  const auto out = stabilize_flows(set, cumulative_bidirectional_intervals(4));
  // Forward: 4 intervals; backward {-1}, {-1,-2} -> {-1}, ... all reduce to {-1}.
  REQUIRE(out.size() == 8);
  CHECK(out[4].interval == Interval{-1});
  CHECK(out[7].requested == Interval{-1, -2, -3, -4});
  CHECK(out[7].interval == Interval{-1});

  const FlowSet edge = build_flow_set(20, 0, 4, constant_velocity(4, 4, 0.5f, 0.25f));
  CHECK(stabilize_flows(edge, cumulative_bidirectional_intervals(4)).size() == 4);
  try {
    stabilize_flows(edge, {{-1}, {-2, -3}});
    FAIL("expected degenerate");
  } catch (const Error &e) {
    CHECK(e.kind() == ErrorKind::kDegenerate);
  }
  CHECK_THROWS_AS(stabilize_flows(edge, {{0}}), Error);
  CHECK_THROWS_AS(stabilize_flows(edge, {{5}}), Error);
}

TEST_CASE("cumulative bidirectional scheme") {
  const auto iv = cumulative_bidirectional_intervals(3);
  REQUIRE(iv.size() == 6);
  CHECK(iv[0] == Interval{1});
  CHECK(iv[2] == Interval{1, 2, 3});
  CHECK(iv[3] == Interval{-1});
  CHECK(iv[5] == Interval{-1, -2, -3});
}

TEST_CASE("alternating per-offset jitter averages out") {
  const float vx = 1.25f;
  FlowSet set;
  set.center_frame = 10;
  set.max_offset = 4;
  for (int i = 1; i <= 4; ++i) {
    const float jitter = (i % 2 == 0) ? 0.5f : -0.5f;
    set.flows.emplace(i, testing::constant_flow(6, 5, i * vx + jitter, -jitter));
  }
  const auto out = stabilize_flows(set, {{1, 2, 3, 4}});
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 6; ++x) {
      CHECK(std::abs(out[0].u(x, y) - vx) <= 0.25);
      CHECK(std::abs(out[0].v(x, y)) <= 0.25);
    }
  }
}

TEST_CASE("property: linearity and constant velocity exactness") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 40; ++trial) {
    const int w = 3 + static_cast<int>(rng() % 6);
    const int h = 3 + static_cast<int>(rng() % 6);
    const int T = 3 + static_cast<int>(rng() % 10);
    const int B = 1 + static_cast<int>(rng() % 4);
    const int t = static_cast<int>(rng() % static_cast<std::uint64_t>(T));
    // Random fields per offset.
    FlowProvider random_provider = [&, w, h](int s, int d) {
      std::mt19937_64 local(static_cast<std::uint64_t>(s * 131 + d + 1000 * trial));
      FlowField f(w, h);
      f.u = testing::random_grid<float>(w, h, -5, 5, local);
      f.v = testing::random_grid<float>(w, h, -5, 5, local);
      return f;
    };
    const FlowSet set = build_flow_set(T, t, B, random_provider);
    const auto base = stabilize_flows(set, cumulative_bidirectional_intervals(B));
    const double c = 4.0;  // power of two keeps the scaled floats exact
    FlowSet scaled = set;
    for (auto &[i, f] : scaled.flows) {
      for (auto &x : f.u.values()) x *= static_cast<float>(c);
      for (auto &x : f.v.values()) x *= static_cast<float>(c);
    }
    const auto lin = stabilize_flows(scaled, cumulative_bidirectional_intervals(B));
    REQUIRE(lin.size() == base.size());
    for (std::size_t j = 0; j < base.size(); ++j) {
      REQUIRE(lin[j].width() == w);
      REQUIRE(lin[j].height() == h);
      for (std::size_t k = 0; k < base[j].u.size(); ++k) {
        REQUIRE(std::isfinite(lin[j].u.values()[k]));
        REQUIRE(lin[j].u.values()[k] == doctest::Approx(c * base[j].u.values()[k]).epsilon(1e-12));
        REQUIRE(lin[j].v.values()[k] == doctest::Approx(c * base[j].v.values()[k]).epsilon(1e-12));
      }
    }

    const float vx = static_cast<float>(static_cast<int>(rng() % 1024) - 512) / 64.0f;
    const float vy = static_cast<float>(static_cast<int>(rng() % 1024) - 512) / 64.0f;
    const FlowSet cv = build_flow_set(T, t, B, constant_velocity(w, h, vx, vy));
    for (const auto &s : stabilize_flows(cv, cumulative_bidirectional_intervals(B))) {
      for (std::size_t k = 0; k < s.u.size(); ++k) {
        REQUIRE(std::abs(s.u.values()[k] - vx) <= 1e-12);
        REQUIRE(std::abs(s.v.values()[k] - vy) <= 1e-12);
      }
    }
  }
}

TEST_CASE("pyramidal estimator: integer global shift") {
  const int w = 96, h = 72;
  const Grid<float> src = texture(w + 8, h, 4);
  Grid<float> a(w, h), b(w, h);
  // b(x, y) = a(x - 3, y): content moves 3 px right.
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      a(x, y) = src(x + 4, y);
      b(x, y) = src(x + 1, y);
    }
  }
  const FlowField f = estimate_flow_pyramidal(a, b);
  double worst = 0.0;
  for (int y = 12; y < h - 12; ++y)
    for (int x = 12; x < w - 12; ++x)
      worst = std::max({worst, std::abs(f.u(x, y) - 3.0), std::abs(static_cast<double>(f.v(x, y)))});
  CHECK(worst <= 0.5);
}

TEST_CASE("pyramidal estimator: identity, flat images and determinism") {
  const Grid<float> a = texture(64, 48, 9);
  const FlowField same = estimate_flow_pyramidal(a, a);
  for (std::size_t i = 0; i < same.u.size(); ++i) {
    CHECK(std::abs(same.u.values()[i]) < 1e-6);
    CHECK(std::abs(same.v.values()[i]) < 1e-6);
  }
  const Grid<float> flat(64, 48, 0.4f);
  const FlowField zero = estimate_flow_pyramidal(flat, flat);
  for (std::size_t i = 0; i < zero.u.size(); ++i) {
    CHECK(zero.u.values()[i] == 0.0f);
    CHECK(zero.v.values()[i] == 0.0f);
  }
  const Grid<float> b = texture(64, 48, 10);
  const FlowField f1 = estimate_flow_pyramidal(a, b);
  const FlowField f2 = estimate_flow_pyramidal(a, b);
  CHECK(f1.u == f2.u);
  CHECK(f1.v == f2.v);
}

TEST_CASE("pyramidal estimator: frames too small for the pyramid") {
  const Grid<float> a(20, 20, 0.1f);
  try {
    estimate_flow_pyramidal(a, a, {3, 8, 4});
    FAIL("expected a configuration error");
  } catch (const Error &e) {
    CHECK(e.kind() == ErrorKind::kConfig);
  }
  CHECK_THROWS_AS(estimate_flow_pyramidal(a, Grid<float>(21, 20)), Error);
}
