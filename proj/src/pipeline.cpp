#include "turbseg/pipeline.hpp"

#include "turbseg/error.hpp"
#include "turbseg/parallel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

namespace turbseg {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fmt(bool v) { return v ? "true" : "false"; }

[[noreturn]] void bad_value(const std::string &key, const std::string &value) {
  throw Error(ErrorKind::kConfig, "bad value '" + value + "' for " + key);
}

double to_double(const std::string &key, const std::string &value) {
  double v = 0.0;
  const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size() || !std::isfinite(v))
    bad_value(key, value);
  return v;
}

long long to_int(const std::string &key, const std::string &value) {
  long long v = 0;
  const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size()) bad_value(key, value);
  return v;
}

bool to_bool(const std::string &key, const std::string &value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  bad_value(key, value);
}

std::vector<int> to_int_list(const std::string &key, const std::string &value) {
  std::vector<int> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty() && item[0] == '+') item.erase(0, 1);
    if (item.empty()) bad_value(key, value);
    out.push_back(static_cast<int>(to_int(key, item)));
  }
  return out;
}

std::string int_list(const std::vector<int> &v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

const char *preset_name(TurbulencePreset p) {
  switch (p) {
    case TurbulencePreset::kWeak: return "weak";
    case TurbulencePreset::kStrong: return "strong";
    default: return "normal";
  }
}

std::string frame_name(int t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%04d.png", t);
  return buf;
}

std::string object_dir(int id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "obj%02d", id);
  return buf;
}

template <typename Fn>
auto in_stage(const char *stage, int frame, Fn &&fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError &) {
    throw;
  } catch (const Error &e) {
    throw StageError(stage, frame, e);
  }
}

}  // namespace

void PipelineConfig::validate() const {
  auto fail = [](const std::string &msg) { throw Error(ErrorKind::kConfig, msg); };
  if (max_offset < 1) fail("max-offset must be >= 1");
  if (interval_scheme == IntervalScheme::kCustom) {
    if (custom_intervals.empty()) fail("custom interval list is empty");
    for (const auto &iv : custom_intervals) {
      if (iv.empty()) fail("custom interval must not be empty");
      for (int i : iv)
        if (i == 0 || std::abs(i) > max_offset) fail("interval offsets must lie in [-B, B] without 0");
    }
  }
  if (pyramid.levels < 1 || pyramid.patch < 2 || pyramid.search < 0) fail("invalid flow pyramid parameters");
  if (resize_input && (working_width < 16 || working_height < 16)) fail("working resolution below 16x16");
  if (window != 0 && window < 2) fail("window must be 0 (adaptive) or >= 2");
  if (stride < 0) fail("stride must be >= 0");
  if (!(min_mean > 0.0 && min_mean <= kMotionMapClamp)) fail("min-mean must lie in (0, 1.5]");
  if (!(max_variance > 0.0)) fail("max-variance must be positive");
  if (correspondence_stride < 1) fail("correspondence-stride must be >= 1");
  if (correspondence_margin < 0) fail("correspondence-margin must be >= 0");
  if (lmeds_iterations < 1) fail("lmeds-iterations must be >= 1");
  if (workers < 1) fail("workers must be >= 1");
  for (int g : refine_config.g_offsets)
    if (std::abs(g) > max_offset) fail("refine g offsets must satisfy |g| <= B");
  refine_config.validate();
}

std::vector<Interval> PipelineConfig::intervals() const {
  if (interval_scheme == IntervalScheme::kCustom) return custom_intervals;
  return cumulative_bidirectional_intervals(max_offset);
}

SegmentParams PipelineConfig::segment_params() const {
  SegmentParams p;
  p.window = window;
  p.stride = stride;
  p.min_mean = min_mean;
  p.max_variance = max_variance;
  p.multiplier = growth_multiplier(preset);
  p.min_mask_area = min_mask_area;
  p.connectivity = connectivity;
  return p;
}

void PipelineConfig::set(const std::string &raw_key, const std::string &raw_value) {
  std::string key = trim(raw_key);
  std::replace(key.begin(), key.end(), '_', '-');
  const std::string value = trim(raw_value);
  auto as_int = [&] { return static_cast<int>(to_int(key, value)); };
  auto as_double = [&] { return to_double(key, value); };
  RefineConfig &rc = refine_config;

  if (key == "max-offset") {
    max_offset = as_int();
  } else if (key == "intervals") {
    if (value == "cumulative") {
      interval_scheme = IntervalScheme::kCumulative;
      custom_intervals.clear();
    } else {
      interval_scheme = IntervalScheme::kCustom;
      custom_intervals.clear();
      std::stringstream ss(value);
      std::string group;
      while (std::getline(ss, group, ';')) {
        group = trim(group);
        if (!group.empty()) custom_intervals.push_back(to_int_list(key, group));
      }
    }
  } else if (key == "flow-source") {
    if (value == "dir") flow_source = FlowSource::kDirectory;
    else if (value == "builtin") flow_source = FlowSource::kBuiltin;
    else bad_value(key, value);
  } else if (key == "flow-dir") {
    flow_dir = value;
  } else if (key == "flow-levels") {
    pyramid.levels = as_int();
  } else if (key == "flow-patch") {
    pyramid.patch = as_int();
  } else if (key == "flow-search") {
    pyramid.search = as_int();
  } else if (key == "width") {
    working_width = as_int();
  } else if (key == "height") {
    working_height = as_int();
  } else if (key == "resize") {
    resize_input = to_bool(key, value);
  } else if (key == "window") {
    window = as_int();
  } else if (key == "stride") {
    stride = as_int();
  } else if (key == "min-mean") {
    min_mean = as_double();
  } else if (key == "max-variance") {
    max_variance = as_double();
  } else if (key == "preset") {
    if (value == "weak") preset = TurbulencePreset::kWeak;
    else if (value == "normal") preset = TurbulencePreset::kNormal;
    else if (value == "strong") preset = TurbulencePreset::kStrong;
    else bad_value(key, value);
  } else if (key == "min-mask-area") {
    const long long v = to_int(key, value);
    if (v < 0) bad_value(key, value);
    min_mask_area = static_cast<std::size_t>(v);
  } else if (key == "connectivity") {
    const int c = as_int();
    if (c == 4) connectivity = Connectivity::kFour;
    else if (c == 8) connectivity = Connectivity::kEight;
    else bad_value(key, value);
  } else if (key == "correspondence-stride") {
    correspondence_stride = as_int();
  } else if (key == "correspondence-margin") {
    correspondence_margin = as_int();
  } else if (key == "lmeds-iterations") {
    lmeds_iterations = as_int();
  } else if (key == "seed") {
    const long long v = to_int(key, value);
    if (v < 0) bad_value(key, value);
    seed = static_cast<std::uint64_t>(v);
  } else if (key == "refine") {
    refine = to_bool(key, value);
  } else if (key == "gamma1") {
    rc.gamma1 = as_double();
  } else if (key == "gamma2") {
    rc.gamma2 = as_double();
  } else if (key == "gamma3") {
    rc.gamma3 = as_double();
  } else if (key == "g-offsets") {
    rc.g_offsets = to_int_list(key, value);
  } else if (key == "init-epochs") {
    rc.init_epochs = as_int();
  } else if (key == "refine-epochs") {
    rc.refine_epochs = as_int();
  } else if (key == "group-every") {
    rc.group_every = as_int();
  } else if (key == "step-size") {
    rc.step_size = as_double();
  } else if (key == "momentum") {
    rc.momentum = as_double();
  } else if (key == "coord-weight") {
    rc.coord_weight = as_double();
  } else if (key == "grouping") {
    rc.grouping = to_bool(key, value);
  } else if (key == "occlusion-check") {
    rc.occlusion_check = to_bool(key, value);
  } else if (key == "workers") {
    workers = as_int();
  } else {
    throw Error(ErrorKind::kConfig, "unknown configuration key '" + key + "'");
  }
}

std::vector<std::pair<std::string, std::string>> PipelineConfig::fields() const {
  std::string iv = "cumulative";
  if (interval_scheme == IntervalScheme::kCustom) {
    iv.clear();
    for (std::size_t i = 0; i < custom_intervals.size(); ++i) {
      if (i) iv += ';';
      iv += int_list(custom_intervals[i]);
    }
  }
  const RefineConfig &rc = refine_config;
  return {
      {"max-offset", std::to_string(max_offset)},
      {"intervals", iv},
      {"flow-source", flow_source == FlowSource::kDirectory ? "dir" : "builtin"},
      {"flow-dir", flow_dir.string()},
      {"flow-levels", std::to_string(pyramid.levels)},
      {"flow-patch", std::to_string(pyramid.patch)},
      {"flow-search", std::to_string(pyramid.search)},
      {"width", std::to_string(working_width)},
      {"height", std::to_string(working_height)},
      {"resize", fmt(resize_input)},
      {"window", std::to_string(window)},
      {"stride", std::to_string(stride)},
      {"min-mean", fmt(min_mean)},
      {"max-variance", fmt(max_variance)},
      {"preset", preset_name(preset)},
      {"min-mask-area", std::to_string(min_mask_area)},
      {"connectivity", std::to_string(static_cast<int>(connectivity))},
      {"correspondence-stride", std::to_string(correspondence_stride)},
      {"correspondence-margin", std::to_string(correspondence_margin)},
      {"lmeds-iterations", std::to_string(lmeds_iterations)},
      {"seed", std::to_string(seed)},
      {"refine", fmt(refine)},
      {"gamma1", fmt(rc.gamma1)},
      {"gamma2", fmt(rc.gamma2)},
      {"gamma3", fmt(rc.gamma3)},
      {"g-offsets", int_list(rc.g_offsets)},
      {"init-epochs", std::to_string(rc.init_epochs)},
      {"refine-epochs", std::to_string(rc.refine_epochs)},
      {"group-every", std::to_string(rc.group_every)},
      {"step-size", fmt(rc.step_size)},
      {"momentum", fmt(rc.momentum)},
      {"coord-weight", fmt(rc.coord_weight)},
      {"grouping", fmt(rc.grouping)},
      {"occlusion-check", fmt(rc.occlusion_check)},
      {"workers", std::to_string(workers)},
  };
}

void apply_config_stream(PipelineConfig &cfg, std::istream &in, const std::string &origin) {
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::kConfig, origin + ":" + std::to_string(line_no) + ": expected key = value");
    try {
      cfg.set(line.substr(0, eq), line.substr(eq + 1));
    } catch (const Error &e) {
      throw Error(ErrorKind::kConfig, origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void apply_config_file(PipelineConfig &cfg, const fs::path &path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kInput, "cannot open config file " + path.string());
  apply_config_stream(cfg, in, path.string());
}

StageError::StageError(std::string stage, int frame, const Error &cause)
    : Error(cause.kind(), stage + (frame >= 0 ? " (frame " + std::to_string(frame) + ")" : "") +
                              ": " + cause.what()),
      stage_(std::move(stage)),
      frame_(frame) {}

double motion_contrast(const Grid<double> &motion, const MaskImage &mask) {
  double in = 0.0, out = 0.0;
  std::size_t n_in = 0, n_out = 0;
  const auto m = motion.values();
  const auto k = mask.values.values();
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (k[i] >= 0.5) {
      in += m[i];
      ++n_in;
    } else {
      out += m[i];
      ++n_out;
    }
  }
  if (n_in == 0 || n_out == 0) return 0.0;
  in /= static_cast<double>(n_in);
  out /= static_cast<double>(n_out);
  if (out <= 0.0) return in > 0.0 ? INFINITY : 0.0;
  return in / out;
}

FlowProvider make_flow_provider(const FrameSequence &frames, const PipelineConfig &cfg,
                                const fs::path &input_dir) {
  if (cfg.flow_source == FlowSource::kBuiltin) return builtin_flow_provider(frames, cfg.pyramid);
  const fs::path dir = cfg.flow_dir.empty() ? input_dir / "flows" : cfg.flow_dir;
  return directory_flow_provider(dir, frames.width(), frames.height());
}

namespace {

using StageHook = std::function<void(const std::string &stage, const SegmentationResult &)>;

SegmentationResult segment_impl(const FrameSequence &frames, const FlowProvider &flows,
                                const PipelineConfig &cfg, bool keep_diagnostics,
                                const StageHook &hook) {
  in_stage("config", -1, [&] { cfg.validate(); });
  const int T = frames.count();
  const int W = frames.width();
  const int H = frames.height();
  SegmentationResult r;
  r.flow_sets.resize(static_cast<std::size_t>(T));
  r.motion.resize(static_cast<std::size_t>(T));
  r.per_frame.resize(static_cast<std::size_t>(T));
  if (keep_diagnostics) r.diagnostics.resize(static_cast<std::size_t>(T));

  // Flow ingestion runs in frame order so the first missing file is the one reported.
  for (int t = 0; t < T; ++t) {
    in_stage("flowstab", t, [&] {
      FlowSet set = build_flow_set(T, t, cfg.max_offset, flows);
      for (const auto &[offset, f] : set.flows)
        if (f.width() != W || f.height() != H)
          throw Error(ErrorKind::kDimensionMismatch,
                      "flow F_{" + std::to_string(t) + "->" + std::to_string(t + offset) +
                          "} does not match the frame size");
      r.flow_sets[static_cast<std::size_t>(t)] = std::move(set);
    });
  }
  if (hook) hook("flowstab", r);

  const auto intervals = cfg.intervals();
  parallel_for(T, cfg.workers, [&](int t) {
    const auto stabilized = in_stage("flowstab", t, [&] {
      return stabilize_flows(r.flow_sets[static_cast<std::size_t>(t)], intervals);
    });
    in_stage("epipolar", t, [&] {
      std::vector<Grid<double>> maps;
      std::vector<SampsonMap> full;
      for (std::size_t j = 0; j < stabilized.size(); ++j) {
        const auto corrs =
            sample_correspondences(stabilized[j], cfg.correspondence_stride, cfg.correspondence_margin);
        LmedsOptions opts;
        opts.iterations = cfg.lmeds_iterations;
        opts.seed = cfg.seed * 1000003ULL + static_cast<std::uint64_t>(t) * 131ULL + j;
        const auto f = estimate_fundamental_lmeds(corrs, opts);
        SampsonMap sm = sampson_map(stabilized[j], f);
        maps.push_back(sm.values);
        if (keep_diagnostics) full.push_back(std::move(sm));
      }
      r.motion[static_cast<std::size_t>(t)] = motion_feature_map(maps, true);
      if (keep_diagnostics) {
        auto &d = r.diagnostics[static_cast<std::size_t>(t)];
        d.stabilized = stabilized;
        d.sampson = std::move(full);
      }
    });
  });
  if (hook) hook("epipolar", r);

  const SegmentParams sp = cfg.segment_params();
  parallel_for(T, cfg.workers, [&](int t) {
    in_stage("regiongrow", t, [&] {
      const auto &m = r.motion[static_cast<std::size_t>(t)].values;
      r.per_frame[static_cast<std::size_t>(t)] = segment_frame(m, sp, t);
      if (keep_diagnostics) {
        SeedParams seeds;
        seeds.window = sp.window > 0 ? sp.window : adaptive_window(W, H);
        seeds.stride = sp.stride > 0 ? sp.stride : std::max(1, seeds.window / 2);
        seeds.min_mean = sp.min_mean;
        seeds.max_variance = sp.max_variance;
        r.diagnostics[static_cast<std::size_t>(t)].seeds = select_seeds(m, seeds);
      }
    });
  });
  const bool any = std::any_of(r.per_frame.begin(), r.per_frame.end(),
                               [](const auto &v) { return !v.empty(); });
  r.coarse.width = W;
  r.coarse.height = H;
  r.masks.assign(static_cast<std::size_t>(T), {});
  if (!any) {
    r.notes.push_back("no seeds");
    r.coarse.masks.assign(static_cast<std::size_t>(T), {});
    if (hook) hook("regiongrow", r);
    return r;
  }
  r.coarse = in_stage("regiongrow", -1, [&] { return unify_mask_ids(r.per_frame, W, H, cfg.seed); });
  if (!r.coarse.disagreeing_frames.empty()) {
    std::string note = "detection count differs from the mode in frames";
    for (int t : r.coarse.disagreeing_frames) note += " " + std::to_string(t);
    r.notes.push_back(note);
  }
  if (hook) hook("regiongrow", r);

  if (cfg.refine) {
    RefineConfig rc = cfg.refine_config;
    rc.seed = cfg.seed;
    const FlowBank bank(r.flow_sets);
    r.refined = in_stage("refine", -1, [&] { return refine_masks(r.coarse, bank, rc, cfg.workers); });
    for (const auto &obj : r.refined) {
      if (!obj.degenerate_grouping_frames.empty())
        r.notes.push_back("object " + std::to_string(obj.object_id) + ": constant alpha in " +
                          std::to_string(obj.degenerate_grouping_frames.size()) + " grouping frames");
    }
  }
  for (int t = 0; t < T; ++t) {
    for (int id = 1; id <= r.coarse.object_count; ++id) {
      MaskImage m = make_binary_mask(W, H, id, t);
      if (cfg.refine) {
        const auto &obj = r.refined[static_cast<std::size_t>(id - 1)];
        if (!obj.skipped) m.values = obj.binary[static_cast<std::size_t>(t)];
      } else {
        m.values = r.coarse.at(t, id).values;
      }
      r.masks[static_cast<std::size_t>(t)].push_back(std::move(m));
    }
  }
  if (hook) hook("refine", r);
  return r;
}

fs::path frames_dir(const fs::path &input_dir) {
  const fs::path sub = input_dir / "frames";
  return fs::is_directory(sub) ? sub : input_dir;
}

FrameSequence load_input(const fs::path &input_dir, const PipelineConfig &cfg) {
  return in_stage("video-io", -1, [&] {
    std::optional<Size2> size;
    if (cfg.resize_input) size = Size2{cfg.working_width, cfg.working_height};
    return load_frames(frames_dir(input_dir), size);
  });
}

struct Manifest {
  std::vector<std::pair<std::string, std::string>> entries;
  void add(const std::string &k, const std::string &v) { entries.emplace_back(k, v); }

  void write(const fs::path &path, const PipelineConfig &cfg) const {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
    for (const auto &[k, v] : entries) out << k << " = " << v << "\n";
    out << "\n[config]\n";
    for (const auto &[k, v] : cfg.fields()) out << k << " = " << v << "\n";
  }
};

template <typename Body>
int run_with_manifest(const char *command, const fs::path &input_dir, const PipelineConfig &cfg,
                      const fs::path &out_dir, std::ostream &log, Body &&body) {
  Manifest manifest;
  manifest.add("command", command);
  manifest.add("version", kVersion);
  manifest.add("input", input_dir.string());
  int code = 0;
  try {
    fs::create_directories(out_dir);
  } catch (const fs::filesystem_error &e) {
    log << "error: cannot create " << out_dir.string() << ": " << e.what() << "\n";
    return 2;
  }
  std::vector<std::pair<std::string, std::string>> extra;
  try {
    body(extra);
    manifest.add("status", "OK");
  } catch (const StageError &e) {
    manifest.add("status", "FAILED");
    manifest.add("failed-stage", e.stage());
    manifest.add("failed-frame", std::to_string(e.frame()));
    manifest.add("error", e.what());
    log << "error: " << e.what() << "\n";
    code = exit_code(e.kind());
  } catch (const Error &e) {
    manifest.add("status", "FAILED");
    manifest.add("failed-stage", "output");
    manifest.add("error", e.what());
    log << "error: " << e.what() << "\n";
    code = exit_code(e.kind());
  } catch (const std::exception &e) {
    manifest.add("status", "FAILED");
    manifest.add("failed-stage", "internal");
    manifest.add("error", e.what());
    log << "internal error: " << e.what() << "\n";
    code = 4;
  }
  for (auto &kv : extra) manifest.add(kv.first, kv.second);
  try {
    manifest.write(out_dir / "manifest.txt", cfg);
  } catch (const Error &e) {
    log << "error: " << e.what() << "\n";
    if (code == 0) code = 2;
  }
  return code;
}

void write_loss_log(const ObjectRefinement &obj, const fs::path &path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << "epoch,L1,L2,L3,total,reference_updated\n";
  for (const auto &e : obj.log) {
    out << e.epoch << ',' << fmt(e.l1) << ',' << fmt(e.l2) << ',' << fmt(e.l3) << ',' << fmt(e.total)
        << ',' << (e.reference_updated ? 1 : 0) << '\n';
  }
}

Grid<double> magnitude(const Grid<float> &u, const Grid<float> &v) {
  Grid<double> m(u.width(), u.height());
  for (std::size_t i = 0; i < m.size(); ++i)
    m.values()[i] = std::hypot(static_cast<double>(u.values()[i]), static_cast<double>(v.values()[i]));
  return m;
}

Grid<double> magnitude(const Grid<double> &u, const Grid<double> &v) {
  Grid<double> m(u.width(), u.height());
  for (std::size_t i = 0; i < m.size(); ++i) m.values()[i] = std::hypot(u.values()[i], v.values()[i]);
  return m;
}

double grid_max(const Grid<double> &g) {
  double m = 0.0;
  for (double v : g.values()) m = std::max(m, v);
  return m;
}

}  // namespace

SegmentationResult segment_sequence(const FrameSequence &frames, const FlowProvider &flows,
                                    const PipelineConfig &cfg, bool keep_diagnostics) {
  return segment_impl(frames, flows, cfg, keep_diagnostics, {});
}

int run_pipeline(const fs::path &input_dir, const PipelineConfig &cfg, const fs::path &out_dir,
                 std::ostream &log) {
  return run_with_manifest("segment", input_dir, cfg, out_dir, log, [&](auto &extra) {
    const FrameSequence frames = load_input(input_dir, cfg);
    extra.emplace_back("frames", std::to_string(frames.count()));
    extra.emplace_back("frame-width", std::to_string(frames.width()));
    extra.emplace_back("frame-height", std::to_string(frames.height()));
    const FlowProvider provider =
        in_stage("flowstab", -1, [&] { return make_flow_provider(frames, cfg, input_dir); });

    auto hook = [&](const std::string &stage, const SegmentationResult &r) {
      in_stage("output", -1, [&] {
        if (stage == "epipolar") {
          fs::create_directories(out_dir / "motion");
          for (std::size_t t = 0; t < r.motion.size(); ++t)
            write_gray_image(r.motion[t].values, 255.0 / kMotionMapClamp,
                             out_dir / "motion" / frame_name(static_cast<int>(t)));
        } else if (stage == "regiongrow") {
          fs::create_directories(out_dir / "coarse");
          for (int t = 0; t < r.coarse.frame_count(); ++t)
            write_gray_image(render_indexed(r.coarse.masks[static_cast<std::size_t>(t)], r.coarse.width,
                                            r.coarse.height),
                             out_dir / "coarse" / frame_name(t));
          for (const auto &n : r.notes) extra.emplace_back("note", n);
          extra.emplace_back("objects", std::to_string(r.coarse.object_count));
        } else if (stage == "refine") {
          for (int t = 0; t < static_cast<int>(r.masks.size()); ++t) {
            for (const auto &m : r.masks[static_cast<std::size_t>(t)]) {
              const fs::path dir = out_dir / "masks" / object_dir(m.object_id);
              fs::create_directories(dir);
              write_mask_image(m, dir / frame_name(t));
            }
          }
          for (const auto &obj : r.refined) {
            if (obj.skipped) continue;
            const fs::path dir = out_dir / "soft" / object_dir(obj.object_id);
            fs::create_directories(dir);
            for (std::size_t t = 0; t < obj.soft.size(); ++t) {
              MaskImage soft;
              soft.values = obj.soft[t];
              soft.mode = MaskMode::kSoft;
              soft.object_id = obj.object_id;
              soft.frame_index = static_cast<int>(t);
              write_mask_image(soft, dir / frame_name(static_cast<int>(t)));
            }
            fs::create_directories(out_dir / "loss");
            write_loss_log(obj, out_dir / "loss" / (object_dir(obj.object_id) + ".csv"));
          }
        }
      });
    };
    segment_impl(frames, provider, cfg, false, hook);
  });
}

int run_inspect(const fs::path &input_dir, const PipelineConfig &cfg, const fs::path &out_dir,
                std::ostream &log) {
  return run_with_manifest("inspect", input_dir, cfg, out_dir, log, [&](auto &extra) {
    const FrameSequence frames = load_input(input_dir, cfg);
    extra.emplace_back("frames", std::to_string(frames.count()));
    const FlowProvider provider =
        in_stage("flowstab", -1, [&] { return make_flow_provider(frames, cfg, input_dir); });
    PipelineConfig local = cfg;
    local.refine = false;
    const SegmentationResult r = segment_impl(frames, provider, local, true, {});
    for (const auto &n : r.notes) extra.emplace_back("note", n);

    in_stage("output", -1, [&] {
      const int T = frames.count();
      // Raw flow magnitude of the nearest forward (or, last frame, backward) flow,
      // on a common scale for the sequence.
      std::vector<Grid<double>> raw(static_cast<std::size_t>(T));
      double raw_max = 0.0;
      for (int t = 0; t < T; ++t) {
        const auto &set = r.flow_sets[static_cast<std::size_t>(t)];
        const FlowField &f = set.has(1) ? set.at(1) : set.at(-1);
        raw[static_cast<std::size_t>(t)] = magnitude(f.u, f.v);
        raw_max = std::max(raw_max, grid_max(raw[static_cast<std::size_t>(t)]));
      }
      const double raw_scale = raw_max > 0.0 ? 255.0 / raw_max : 0.0;
      for (const char *sub : {"flow", "stabilized", "sampson", "motion", "seeds"})
        fs::create_directories(out_dir / sub);
      for (int t = 0; t < T; ++t) {
        const std::string name = frame_name(t);
        const auto &d = r.diagnostics[static_cast<std::size_t>(t)];
        const auto &motion = r.motion[static_cast<std::size_t>(t)];
        write_gray_image(raw[static_cast<std::size_t>(t)], raw_scale, out_dir / "flow" / name);

        // Stabilized flows and Sampson maps are averaged over intervals into one image each.
        Grid<double> stab(frames.width(), frames.height(), 0.0);
        Grid<double> samp(frames.width(), frames.height(), 0.0);
        for (std::size_t j = 0; j < d.stabilized.size(); ++j) {
          const Grid<double> mag = magnitude(d.stabilized[j].u, d.stabilized[j].v);
          for (std::size_t i = 0; i < stab.size(); ++i) {
            stab.values()[i] += mag.values()[i] / static_cast<double>(d.stabilized.size());
            samp.values()[i] += d.sampson[j].values.values()[i] / static_cast<double>(d.sampson.size());
          }
        }
        write_gray_image(stab, raw_scale, out_dir / "stabilized" / name);
        write_gray_image(samp, 255.0 / (kMotionMapClamp * motion.normalization_scale),
                         out_dir / "sampson" / name);
        write_gray_image(motion.values, 255.0 / kMotionMapClamp, out_dir / "motion" / name);

        Grid<double> overlay = motion.values;
        for (double &v : overlay.values()) v = std::min(v, kMotionMapClamp) / kMotionMapClamp * 0.8;
        for (const auto &s : d.seeds) {
          for (int k = 0; k < s.size; ++k) {
            for (const auto &[x, y] : {std::pair{s.x0 + k, s.y0}, std::pair{s.x0 + k, s.y0 + s.size - 1},
                                      std::pair{s.x0, s.y0 + k}, std::pair{s.x0 + s.size - 1, s.y0 + k}})
              if (overlay.contains(x, y)) overlay(x, y) = 1.0;
          }
        }
        write_gray_image(overlay, 255.0, out_dir / "seeds" / name);
      }
    });
  });
}

}  // namespace turbseg
