#pragma once

#include "turbseg/flowstab.hpp"
#include "turbseg/grid.hpp"
#include "turbseg/regiongrow.hpp"

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

namespace turbseg {

struct RefineConfig {
  double gamma1 = 1.0;
  double gamma2 = 0.5;
  double gamma3 = 0.5;
  std::vector<int> g_offsets{-2, -1, 1, 2};
  int init_epochs = 25;
  int refine_epochs = 10;
  int group_every = 3;
  double step_size = 0.5;
  double momentum = 0.9;
  double coord_weight = 0.5;  // lambda_xy
  bool grouping = true;       // false skips reference updates in the refine phase
  // Drop warped-loss pixels that fail a forward-backward flow check (occluded
  // or disoccluded); needs F_{t -> t+g} in the bank, otherwise all pixels count.
  bool occlusion_check = true;
  std::uint64_t seed = 0;

  // Throws kConfig on negative or all-zero weights, empty/zero offsets, or
  // non-positive epoch cadence.
  void validate() const;
};

inline constexpr double kProbabilityClamp = 1e-7;

// Per-object logits z, one grid per frame; alpha = sigmoid(z).
struct LogitField {
  std::vector<Grid<double>> frames;

  int frame_count() const { return static_cast<int>(frames.size()); }
  Grid<double> alpha(int t) const;
};

double sigmoid(double z);

// Lookup of the flows F_{from -> to} owned by a set of FlowSets.
class FlowBank {
public:
  FlowBank() = default;
  explicit FlowBank(const std::vector<FlowSet> &flow_sets);

  void add(int from, int to, const FlowField *flow);
  const FlowField *find(int from, int to) const;

private:
  std::map<std::pair<int, int>, const FlowField *> flows_;
};

// Inverse warp of a frame-t mask to frame t+g through F_{t+g -> t}:
// out(p) = bilinear(mask, p + F(p)); samples outside the image read 0.
Grid<double> warp_mask(const Grid<double> &mask, const FlowField &backward_flow);

// 1 where following `backward` (F_{t+g -> t}) and then `forward` (F_{t -> t+g})
// returns within 0.01 (|b|^2 + |f|^2) + 0.5 px of the start, else 0.
Grid<std::uint8_t> flow_consistency_mask(const FlowField &backward, const FlowField &forward);

// Mean binary cross-entropy -[b log a + (1 - b) log(1 - a)], a clamped to
// [1e-7, 1 - 1e-7].
double mean_bce(const Grid<double> &alpha, const Grid<double> &target);

// Reference consistency between alpha_t and the coarse mask beta_t.
double loss_l1(const Grid<double> &alpha, const Grid<double> &beta);
// alpha_{t+g} against warp_mask(beta_t, F_{t+g -> t}).
double loss_l2(const Grid<double> &alpha_next, const Grid<double> &warped_beta);
// alpha_{t+g} against warp_mask(alpha_t, F_{t+g -> t}), the latter a constant.
double loss_l3(const Grid<double> &alpha_next, const Grid<double> &warped_alpha);

struct LossValue {
  double l1 = 0.0;  // mean over frames of L1
  double l2 = 0.0;  // (1/T) sum_t sum_g L2
  double l3 = 0.0;  // (1/T) sum_t sum_g L3
  double total = 0.0;
  std::vector<Grid<double>> gradient;  // d total / d logit, per frame
};

// The initialization objective for one object over all frames, with its
// analytic gradient. Offsets g whose frame or flow is unavailable are
// skipped; with occlusion_check, L2/L3 skip pixels failing the flow check but
// keep the 1 / (T |Omega|) normalisation. L3 targets come from `l3_source` when given, else from `logits`.
class RefineObjective {
public:
  RefineObjective(std::vector<Grid<double>> reference, const FlowBank &flows, RefineConfig config);

  void set_reference(std::vector<Grid<double>> reference);
  const std::vector<Grid<double>> &reference() const { return reference_; }

  LossValue evaluate(const LogitField &logits, const LogitField *l3_source = nullptr,
                     bool with_gradient = true) const;

private:
  struct Term {
    int t;
    int target;  // t + g
    const FlowField *flow;
    Grid<std::uint8_t> valid;  // empty = every pixel
  };

  std::vector<Grid<double>> reference_;
  std::vector<Grid<double>> warped_reference_;  // per term
  std::vector<Term> terms_;
  RefineConfig config_;
};

LossValue total_loss(const LogitField &logits, const std::vector<Grid<double>> &reference,
                     const FlowBank &flows, const RefineConfig &config,
                     const LogitField *l3_source = nullptr);

struct GroupingResult {
  std::vector<Grid<double>> masks;  // binary, one per frame
  std::vector<int> degenerate_frames;
};

// Per-frame 2-means on [alpha_t(p), lambda * x / W, lambda * y / H]. Centers
// start at the means of {alpha_t > 0.5} and its complement; Lloyd iterations
// follow. A frame without foreground stays empty; a frame without background
// falls back to seeded k-means++ (the center with the larger alpha is
// foreground). Constant-alpha frames are thresholded at 0.5 and reported.
GroupingResult grouping_update(const std::vector<Grid<double>> &alpha, double coord_weight,
                               std::uint64_t seed);

struct EpochLog {
  int epoch = 0;
  double l1 = 0.0;
  double l2 = 0.0;
  double l3 = 0.0;
  double total = 0.0;
  bool reference_updated = false;
};

struct ObjectRefinement {
  int object_id = 0;
  bool skipped = false;            // empty coarse masks
  std::vector<Grid<double>> soft;  // alpha per frame
  std::vector<Grid<double>> binary;
  std::vector<EpochLog> log;
  std::vector<int> degenerate_grouping_frames;
};

// Logits start at +2 / -2 on / off the coarse mask. Init phase: init_epochs
// momentum steps on the objective. Refine phase: refine_epochs steps with the
// reference replaced by grouping_update() every group_every epochs.
ObjectRefinement refine_object(const std::vector<Grid<double>> &coarse, const FlowBank &flows,
                               const RefineConfig &config, int object_id = 1);

std::vector<ObjectRefinement> refine_masks(const CoarseMaskStack &coarse, const FlowBank &flows,
                                           const RefineConfig &config, int workers = 1);

Grid<double> binarize(const Grid<double> &alpha, double threshold = 0.5);

// Mean over t of mean_p |m_{t+1}(p) - warp(m_t, F_{t+1 -> t})(p)|, over the
// pairs whose flow is available.
double temporal_inconsistency(const std::vector<Grid<double>> &masks, const FlowBank &flows);

}  // namespace turbseg
