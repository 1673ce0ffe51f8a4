#include "turbseg/eval.hpp"

#include "turbseg/error.hpp"

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <map>
#include <ostream>
#include <regex>

namespace fs = std::filesystem;

namespace turbseg {

namespace {

struct Counts {
  std::size_t inter = 0;
  std::size_t pred = 0;
  std::size_t gt = 0;
};

Counts count(const MaskImage &pred, const MaskImage &gt) {
  if (!pred.values.same_shape(gt.values)) {
    throw Error(ErrorKind::kDimensionMismatch, "predicted and ground-truth masks differ in size");
  }
  Counts c;
  const auto p = pred.values.values();
  const auto g = gt.values.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool a = p[i] >= 0.5;
    const bool b = g[i] >= 0.5;
    c.inter += (a && b) ? 1 : 0;
    c.pred += a ? 1 : 0;
    c.gt += b ? 1 : 0;
  }
  return c;
}

std::size_t object_count(const MaskStack &stack) {
  std::size_t n = 0;
  for (const auto &frame : stack) n = std::max(n, frame.size());
  return n;
}

const MaskImage *object_in(const MaskStack &stack, std::size_t frame, std::size_t object) {
  const auto &f = stack[frame];
  return object < f.size() ? &f[object] : nullptr;
}

}  // namespace

double jaccard(const MaskImage &pred, const MaskImage &gt) {
  const Counts c = count(pred, gt);
  const std::size_t uni = c.pred + c.gt - c.inter;
  return uni == 0 ? 1.0 : static_cast<double>(c.inter) / static_cast<double>(uni);
}

double f1(const MaskImage &pred, const MaskImage &gt) {
  const Counts c = count(pred, gt);
  const std::size_t denom = c.pred + c.gt;
  return denom == 0 ? 1.0 : 2.0 * static_cast<double>(c.inter) / static_cast<double>(denom);
}

MetricsReport evaluate_sequence(const MaskStack &pred, const MaskStack &gt, const EvalOptions &options) {
  if (pred.size() != gt.size()) {
    throw Error(ErrorKind::kInput, "prediction has " + std::to_string(pred.size()) +
                                       " frames, ground truth " + std::to_string(gt.size()));
  }
  const std::size_t n_gt = object_count(gt);
  const std::size_t n_pred = object_count(pred);

  // match[g] = predicted object index or npos
  constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::vector<std::size_t> match(n_gt, npos);
  if (options.matching == Matching::kById) {
    for (std::size_t g = 0; g < n_gt; ++g) match[g] = g < n_pred ? g : npos;
  } else {
    struct Candidate {
      std::size_t inter, p, g;
    };
    std::vector<Candidate> candidates;
    for (std::size_t p = 0; p < n_pred; ++p) {
      for (std::size_t g = 0; g < n_gt; ++g) {
        std::size_t inter = 0;
        for (std::size_t t = 0; t < gt.size(); ++t) {
          const MaskImage *a = object_in(pred, t, p);
          const MaskImage *b = object_in(gt, t, g);
          if (a != nullptr && b != nullptr) inter += count(*a, *b).inter;
        }
        candidates.push_back({inter, p, g});
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate &a, const Candidate &b) { return a.inter > b.inter; });
    std::vector<bool> p_used(n_pred, false);
    for (const Candidate &c : candidates) {
      if (c.inter == 0 || p_used[c.p] || match[c.g] != npos) continue;
      p_used[c.p] = true;
      match[c.g] = c.p;
    }
  }

  MetricsReport report;
  double sum_j = 0.0, sum_f = 0.0;
  std::size_t counted = 0;
  for (std::size_t t = 0; t < gt.size(); ++t) {
    for (std::size_t g = 0; g < n_gt; ++g) {
      const MaskImage *truth = object_in(gt, t, g);
      if (truth == nullptr) continue;
      const MaskImage *p = match[g] != npos ? object_in(pred, t, match[g]) : nullptr;
      const MaskImage empty = make_binary_mask(truth->width(), truth->height());
      const MaskImage &prediction = p != nullptr ? *p : empty;
      FrameScore s;
      s.frame = static_cast<int>(t);
      s.object_id = truth->object_id;
      s.j = jaccard(prediction, *truth);
      s.f = f1(prediction, *truth);
      s.both_empty = prediction.area() == 0 && truth->area() == 0;
      report.per_frame.push_back(s);
      if (s.both_empty && options.skip_empty_frames) continue;
      sum_j += s.j;
      sum_f += s.f;
      ++counted;
    }
  }
  if (counted > 0) {
    report.mean_j = sum_j / static_cast<double>(counted);
    report.mean_f = sum_f / static_cast<double>(counted);
  } else {
    report.mean_j = report.mean_f = 1.0;
  }
  report.g = 0.5 * (report.mean_j + report.mean_f);
  return report;
}

MaskStack load_mask_stack(const fs::path &directory) {
  if (!fs::is_directory(directory)) {
    throw Error(ErrorKind::kInput, "mask directory not found: " + directory.string());
  }
  static const std::regex object_dir(R"(obj(\d+))");
  static const std::regex frame_file(R"(frame_(\d+)\.png)");
  std::map<int, std::map<int, fs::path>> files;  // object -> frame -> path
  int max_frame = -1;
  for (const auto &entry : fs::directory_iterator(directory)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (!entry.is_directory() || !std::regex_match(name, m, object_dir)) continue;
    const int object = std::stoi(m[1]);
    for (const auto &f : fs::directory_iterator(entry.path())) {
      std::smatch fm;
      const std::string fname = f.path().filename().string();
      if (!std::regex_match(fname, fm, frame_file)) continue;
      const int frame = std::stoi(fm[1]);
      files[object][frame] = f.path();
      max_frame = std::max(max_frame, frame);
    }
  }
  if (files.empty() || max_frame < 0) {
    throw Error(ErrorKind::kInput, "no obj*/frame_*.png masks under " + directory.string());
  }
  MaskStack stack(static_cast<std::size_t>(max_frame + 1));
  int width = -1, height = -1;
  for (const auto &[object, frames] : files) {
    for (const auto &[frame, path] : frames) {
      MaskImage m = read_mask_image(path, object, frame);
      if (width < 0) {
        width = m.width();
        height = m.height();
      } else if (m.width() != width || m.height() != height) {
        throw Error(ErrorKind::kDimensionMismatch, "mask " + path.string() + " differs in size");
      }
    }
  }
  for (std::size_t t = 0; t < stack.size(); ++t) {
    for (const auto &[object, frames] : files) {
      auto it = frames.find(static_cast<int>(t));
      stack[t].push_back(it != frames.end()
                             ? read_mask_image(it->second, object, static_cast<int>(t))
                             : make_binary_mask(width, height, object, static_cast<int>(t)));
    }
  }
  return stack;
}

void write_report_csv(const MetricsReport &report, std::ostream &out) {
  out << "frame,object,J,F\n";
  char buf[128];
  for (const FrameScore &s : report.per_frame) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%.6f,%.6f\n", s.frame, s.object_id, s.j, s.f);
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "mean,all,%.6f,%.6f\n", report.mean_j, report.mean_f);
  out << buf;
}

void print_report_summary(const MetricsReport &report, std::ostream &out) {
  std::map<int, std::pair<double, double>> sums;
  std::map<int, int> counts;
  for (const FrameScore &s : report.per_frame) {
    if (s.both_empty) continue;
    sums[s.object_id].first += s.j;
    sums[s.object_id].second += s.f;
    ++counts[s.object_id];
  }
  out << std::fixed << std::setprecision(3);
  out << "object    J      F\n";
  for (const auto &[id, sum] : sums) {
    const double n = counts[id];
    out << std::setw(6) << id << "  " << sum.first / n << "  " << sum.second / n << "\n";
  }
  out << "overall J = " << report.mean_j << "  F = " << report.mean_f << "  G = " << report.g << "\n";
}

}  // namespace turbseg
