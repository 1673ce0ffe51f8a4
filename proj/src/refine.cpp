#include "turbseg/refine.hpp"

#include "turbseg/error.hpp"
#include "turbseg/kmeans.hpp"
#include "turbseg/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace turbseg {

void RefineConfig::validate() const {
  if (gamma1 < 0.0 || gamma2 < 0.0 || gamma3 < 0.0) {
    throw Error(ErrorKind::kConfig, "loss weights must be non-negative");
  }
  if (gamma1 == 0.0 && gamma2 == 0.0 && gamma3 == 0.0) {
    throw Error(ErrorKind::kConfig, "at least one loss weight must be positive");
  }
  if (g_offsets.empty()) throw Error(ErrorKind::kConfig, "g offsets must not be empty");
  if (std::find(g_offsets.begin(), g_offsets.end(), 0) != g_offsets.end()) {
    throw Error(ErrorKind::kConfig, "g offsets must not contain 0");
  }
  if (group_every < 1) throw Error(ErrorKind::kConfig, "group cadence must be >= 1");
  if (init_epochs < 0 || refine_epochs < 0) throw Error(ErrorKind::kConfig, "epoch counts must be >= 0");
  if (!(step_size > 0.0)) throw Error(ErrorKind::kConfig, "step size must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(ErrorKind::kConfig, "momentum must lie in [0, 1)");
  if (coord_weight < 0.0) throw Error(ErrorKind::kConfig, "coordinate weight must be non-negative");
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Grid<double> LogitField::alpha(int t) const {
  const Grid<double> &z = frames.at(static_cast<std::size_t>(t));
  Grid<double> a(z.width(), z.height());
  const auto zv = z.values();
  auto av = a.values();
  for (std::size_t i = 0; i < zv.size(); ++i) av[i] = sigmoid(zv[i]);
  return a;
}

FlowBank::FlowBank(const std::vector<FlowSet> &flow_sets) {
  for (const FlowSet &set : flow_sets) {
    for (const auto &[offset, flow] : set.flows) add(set.center_frame, set.center_frame + offset, &flow);
  }
}

void FlowBank::add(int from, int to, const FlowField *flow) { flows_[{from, to}] = flow; }

const FlowField *FlowBank::find(int from, int to) const {
  auto it = flows_.find({from, to});
  return it == flows_.end() ? nullptr : it->second;
}

Grid<double> warp_mask(const Grid<double> &mask, const FlowField &backward_flow) {
  if (mask.width() != backward_flow.width() || mask.height() != backward_flow.height()) {
    throw Error(ErrorKind::kDimensionMismatch, "warp flow does not match the mask");
  }
  Grid<double> out(mask.width(), mask.height(), 0.0);
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      out(x, y) = sample_bilinear(mask, x + static_cast<double>(backward_flow.u(x, y)),
                                  y + static_cast<double>(backward_flow.v(x, y)), 0.0);
    }
  }
  return out;
}

Grid<std::uint8_t> flow_consistency_mask(const FlowField &backward, const FlowField &forward) {
  if (backward.width() != forward.width() || backward.height() != forward.height()) {
    throw Error(ErrorKind::kDimensionMismatch, "flow pair differs in size");
  }
  Grid<std::uint8_t> valid(backward.width(), backward.height(), 0);
  for (int y = 0; y < backward.height(); ++y) {
    for (int x = 0; x < backward.width(); ++x) {
      const double bu = backward.u(x, y);
      const double bv = backward.v(x, y);
      const double qx = x + bu;
      const double qy = y + bv;
      if (qx < 0.0 || qy < 0.0 || qx > backward.width() - 1 || qy > backward.height() - 1) continue;
      const double fu = sample_bilinear_clamped(forward.u, qx, qy);
      const double fv = sample_bilinear_clamped(forward.v, qx, qy);
      const double du = bu + fu;
      const double dv = bv + fv;
      const double bound = 0.01 * (bu * bu + bv * bv + fu * fu + fv * fv) + 0.5;
      valid(x, y) = du * du + dv * dv <= bound ? 1 : 0;
    }
  }
  return valid;
}

namespace {

inline double clamp_probability(double a) {
  return std::clamp(a, kProbabilityClamp, 1.0 - kProbabilityClamp);
}

inline double bce(double a, double b) {
  const double c = clamp_probability(a);
  return -(b * std::log(c) + (1.0 - b) * std::log(1.0 - c));
}

// d bce(sigmoid(z); b) / dz, zero where the clamp is active.
inline double bce_logit_gradient(double a, double b) {
  if (a < kProbabilityClamp || a > 1.0 - kProbabilityClamp) return 0.0;
  return a - b;
}

double accumulate_term(const Grid<double> &alpha, const Grid<double> &target, Grid<double> *grad,
                       double grad_scale, const Grid<std::uint8_t> *valid = nullptr) {
  if (!alpha.same_shape(target)) throw Error(ErrorKind::kDimensionMismatch, "loss operands differ in size");
  const auto a = alpha.values();
  const auto b = target.values();
  const std::uint8_t *keep = valid != nullptr && !valid->empty() ? valid->data() : nullptr;
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (keep == nullptr || keep[i]) sum += bce(a[i], b[i]);
  if (grad != nullptr) {
    auto g = grad->values();
    for (std::size_t i = 0; i < a.size(); ++i)
      if (keep == nullptr || keep[i]) g[i] += grad_scale * bce_logit_gradient(a[i], b[i]);
  }
  return sum / static_cast<double>(a.size());
}

std::vector<Grid<double>> alphas_of(const LogitField &logits) {
  std::vector<Grid<double>> out;
  out.reserve(logits.frames.size());
  for (int t = 0; t < logits.frame_count(); ++t) out.push_back(logits.alpha(t));
  return out;
}

}  // namespace

double mean_bce(const Grid<double> &alpha, const Grid<double> &target) {
  return accumulate_term(alpha, target, nullptr, 0.0);
}

double loss_l1(const Grid<double> &alpha, const Grid<double> &beta) { return mean_bce(alpha, beta); }

double loss_l2(const Grid<double> &alpha_next, const Grid<double> &warped_beta) {
  return mean_bce(alpha_next, warped_beta);
}

double loss_l3(const Grid<double> &alpha_next, const Grid<double> &warped_alpha) {
  return mean_bce(alpha_next, warped_alpha);
}

RefineObjective::RefineObjective(std::vector<Grid<double>> reference, const FlowBank &flows,
                                 RefineConfig config)
    : config_(std::move(config)) {
  config_.validate();
  const int frames = static_cast<int>(reference.size());
  for (int t = 0; t < frames; ++t) {
    for (int g : config_.g_offsets) {
      const int target = t + g;
      if (target < 0 || target >= frames) continue;
      const FlowField *flow = flows.find(target, t);
      if (flow == nullptr) continue;
      Term term{t, target, flow, {}};
      if (config_.occlusion_check) {
        if (const FlowField *forward = flows.find(t, target)) term.valid = flow_consistency_mask(*flow, *forward);
      }
      terms_.push_back(std::move(term));
    }
  }
  set_reference(std::move(reference));
}

void RefineObjective::set_reference(std::vector<Grid<double>> reference) {
  reference_ = std::move(reference);
  warped_reference_.clear();
  warped_reference_.reserve(terms_.size());
  for (const Term &term : terms_) {
    warped_reference_.push_back(warp_mask(reference_.at(static_cast<std::size_t>(term.t)), *term.flow));
  }
}

LossValue RefineObjective::evaluate(const LogitField &logits, const LogitField *l3_source,
                                    bool with_gradient) const {
  const int frames = logits.frame_count();
  if (frames != static_cast<int>(reference_.size())) {
    throw Error(ErrorKind::kDimensionMismatch, "logit field and reference differ in frame count");
  }
  const std::vector<Grid<double>> alpha = alphas_of(logits);
  std::vector<Grid<double>> source_alpha;
  if (l3_source != nullptr) source_alpha = alphas_of(*l3_source);
  const std::vector<Grid<double>> &l3_alpha = l3_source != nullptr ? source_alpha : alpha;

  LossValue out;
  if (with_gradient) {
    for (const auto &a : alpha) out.gradient.emplace_back(a.width(), a.height(), 0.0);
  }
  auto grad_of = [&](int t) { return with_gradient ? &out.gradient[static_cast<std::size_t>(t)] : nullptr; };
  const double pixels = alpha.empty() ? 1.0 : static_cast<double>(alpha.front().size());
  const double norm = 1.0 / (static_cast<double>(frames) * pixels);

  for (int t = 0; t < frames; ++t) {
    out.l1 += accumulate_term(alpha[static_cast<std::size_t>(t)], reference_[static_cast<std::size_t>(t)],
                              config_.gamma1 != 0.0 ? grad_of(t) : nullptr, config_.gamma1 * norm);
  }
  for (std::size_t k = 0; k < terms_.size(); ++k) {
    const Term &term = terms_[k];
    const Grid<double> &next = alpha[static_cast<std::size_t>(term.target)];
    out.l2 += accumulate_term(next, warped_reference_[k],
                              config_.gamma2 != 0.0 ? grad_of(term.target) : nullptr,
                              config_.gamma2 * norm, &term.valid);
    const Grid<double> warped_alpha = warp_mask(l3_alpha[static_cast<std::size_t>(term.t)], *term.flow);
    out.l3 += accumulate_term(next, warped_alpha,
                              config_.gamma3 != 0.0 ? grad_of(term.target) : nullptr,
                              config_.gamma3 * norm, &term.valid);
  }
  out.l1 /= frames;
  out.l2 /= frames;
  out.l3 /= frames;
  out.total = config_.gamma1 * out.l1 + config_.gamma2 * out.l2 + config_.gamma3 * out.l3;
  return out;
}

LossValue total_loss(const LogitField &logits, const std::vector<Grid<double>> &reference,
                     const FlowBank &flows, const RefineConfig &config, const LogitField *l3_source) {
  RefineObjective objective(reference, flows, config);
  return objective.evaluate(logits, l3_source);
}

GroupingResult grouping_update(const std::vector<Grid<double>> &alpha, double coord_weight,
                               std::uint64_t seed) {
  GroupingResult result;
  for (std::size_t t = 0; t < alpha.size(); ++t) {
    const Grid<double> &a = alpha[t];
    const int w = a.width();
    const int h = a.height();
    const auto av = a.values();
    Grid<double> mask(w, h, 0.0);

    const auto [lo, hi] = std::minmax_element(av.begin(), av.end());
    if (av.empty() || *hi - *lo < 1e-12) {
      result.masks.push_back(binarize(a));
      result.degenerate_frames.push_back(static_cast<int>(t));
      continue;
    }

    Eigen::MatrixXd features(static_cast<Eigen::Index>(av.size()), 3);
    Eigen::RowVector3d fg_sum = Eigen::RowVector3d::Zero(), bg_sum = Eigen::RowVector3d::Zero();
    std::size_t fg_n = 0, bg_n = 0;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const auto i = static_cast<Eigen::Index>(a.index(x, y));
        features.row(i) << a(x, y), coord_weight * x / w, coord_weight * y / h;
        if (a(x, y) > 0.5) {
          fg_sum += features.row(i);
          ++fg_n;
        } else {
          bg_sum += features.row(i);
          ++bg_n;
        }
      }
    }
    if (fg_n == 0) {
      result.masks.push_back(std::move(mask));
      continue;
    }
    KMeansResult clusters;
    int fg_label = 0;
    if (bg_n == 0) {
      clusters = kmeans(features, 2, seed + t);
      fg_label = clusters.centers(0, 0) >= clusters.centers(1, 0) ? 0 : 1;
    } else {
      Eigen::MatrixXd init(2, 3);
      init.row(0) = fg_sum / static_cast<double>(fg_n);
      init.row(1) = bg_sum / static_cast<double>(bg_n);
      clusters = lloyd(features, init);
    }
    auto mv = mask.values();
    for (std::size_t i = 0; i < mv.size(); ++i) mv[i] = clusters.labels[i] == fg_label ? 1.0 : 0.0;
    result.masks.push_back(std::move(mask));
  }
  return result;
}

Grid<double> binarize(const Grid<double> &alpha, double threshold) {
  Grid<double> out(alpha.width(), alpha.height(), 0.0);
  const auto a = alpha.values();
  auto o = out.values();
  for (std::size_t i = 0; i < a.size(); ++i) o[i] = a[i] >= threshold ? 1.0 : 0.0;
  return out;
}

ObjectRefinement refine_object(const std::vector<Grid<double>> &coarse, const FlowBank &flows,
                               const RefineConfig &config, int object_id) {
  config.validate();
  ObjectRefinement out;
  out.object_id = object_id;
  const bool any = std::any_of(coarse.begin(), coarse.end(), [](const Grid<double> &g) {
    return std::any_of(g.values().begin(), g.values().end(), [](double v) { return v >= 0.5; });
  });
  if (coarse.empty() || !any) {
    out.skipped = true;
    return out;
  }

  LogitField logits;
  std::vector<Grid<double>> velocity;
  for (const auto &b : coarse) {
    Grid<double> z(b.width(), b.height());
    const auto bv = b.values();
    auto zv = z.values();
    for (std::size_t i = 0; i < bv.size(); ++i) zv[i] = bv[i] >= 0.5 ? 2.0 : -2.0;
    logits.frames.push_back(std::move(z));
    velocity.emplace_back(b.width(), b.height(), 0.0);
  }
  RefineObjective objective(coarse, flows, config);
  // The objective is a mean over T * |Omega| pixels; steps are taken per pixel.
  const double precondition = static_cast<double>(coarse.size()) * static_cast<double>(coarse.front().size());

  const int epochs = config.init_epochs + config.refine_epochs;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    EpochLog entry;
    entry.epoch = epoch;
    const int refine_epoch = epoch - config.init_epochs;
    if (config.grouping && refine_epoch >= 0 && refine_epoch % config.group_every == 0) {
      std::vector<Grid<double>> alpha;
      for (int t = 0; t < logits.frame_count(); ++t) alpha.push_back(logits.alpha(t));
      GroupingResult grouped = grouping_update(alpha, config.coord_weight, config.seed);
      out.degenerate_grouping_frames.insert(out.degenerate_grouping_frames.end(),
                                            grouped.degenerate_frames.begin(),
                                            grouped.degenerate_frames.end());
      objective.set_reference(std::move(grouped.masks));
      entry.reference_updated = true;
    }
    const LossValue loss = objective.evaluate(logits);
    entry.l1 = loss.l1;
    entry.l2 = loss.l2;
    entry.l3 = loss.l3;
    entry.total = loss.total;
    out.log.push_back(entry);
    for (std::size_t t = 0; t < logits.frames.size(); ++t) {
      auto z = logits.frames[t].values();
      auto v = velocity[t].values();
      const auto g = loss.gradient[t].values();
      for (std::size_t i = 0; i < z.size(); ++i) {
        v[i] = config.momentum * v[i] - config.step_size * precondition * g[i];
        z[i] += v[i];
      }
    }
  }
  for (int t = 0; t < logits.frame_count(); ++t) {
    out.soft.push_back(logits.alpha(t));
    out.binary.push_back(binarize(out.soft.back()));
  }
  return out;
}

std::vector<ObjectRefinement> refine_masks(const CoarseMaskStack &coarse, const FlowBank &flows,
                                           const RefineConfig &config, int workers) {
  config.validate();
  const int objects = coarse.object_count;
  std::vector<ObjectRefinement> results(static_cast<std::size_t>(objects));
  auto run = [&](int m) {
    std::vector<Grid<double>> stack;
    for (int t = 0; t < coarse.frame_count(); ++t) stack.push_back(coarse.at(t, m + 1).values);
    results[static_cast<std::size_t>(m)] = refine_object(stack, flows, config, m + 1);
  };
  parallel_for(objects, workers, run);
  return results;
}

double temporal_inconsistency(const std::vector<Grid<double>> &masks, const FlowBank &flows) {
  double sum = 0.0;
  int pairs = 0;
  for (std::size_t t = 0; t + 1 < masks.size(); ++t) {
    const FlowField *flow = flows.find(static_cast<int>(t + 1), static_cast<int>(t));
    if (flow == nullptr) continue;
    const Grid<double> warped = warp_mask(masks[t], *flow);
    const auto a = masks[t + 1].values();
    const auto b = warped.values();
    double diff = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) diff += std::abs(a[i] - b[i]);
    sum += diff / static_cast<double>(a.size());
    ++pairs;
  }
  return pairs > 0 ? sum / pairs : 0.0;
}

}  // namespace turbseg
