#pragma once

#include "vidseg/appearance.hpp"
#include "vidseg/histogram.hpp"
#include "vidseg/types.hpp"

#include <optional>
#include <vector>

namespace vidseg {

// Patch-evidence parameters shared by the motion unary and the appearance fit.
struct CueConfig {
  int patch_radius = 3;  // 7x7 window
  int patch_bins = 8;
  Real alpha = 1.0;  // KL-to-weight sharpness of the histogram similarity
  AppearanceFitConfig appearance;
  std::uint64_t appearance_seed = 1;
};

// Energy and inference parameters. beta empty means AUTO: contrast-normalized
// per target frame as 1 / (2 * mean squared neighbor color difference).
struct CrfConfig {
  Real lambda1 = 0.5;  // appearance unary weight
  Real lambda2 = 1.0;  // pairwise weight
  std::optional<Real> beta;
  int neighborhood_radius = 1;  // square neighborhood; 1 = 8-connected
  int mf_iterations = 10;
  Real mf_tolerance = 1e-3;  // max per-pixel L1 marginal change
  Real damping = 0.5;        // mixes old marginals into each update
  int depth = 5;             // frames to propagate past the reference

  void validate() const;
};

// Per-pixel, per-class energy costs. costs(p, l) is the cost of pixel p
// (raster order) taking label l.
struct UnaryField {
  int width = 0;
  int height = 0;
  FieldMatrix costs;

  UnaryField() = default;
  UnaryField(int w, int h, int num_classes)
      : width(w), height(h), costs(FieldMatrix::Zero(static_cast<Eigen::Index>(w) * h,
                                                     num_classes)) {}
  int num_classes() const { return static_cast<int>(costs.cols()); }
};

// Per-pixel label distributions; every row sums to 1.
struct MarginalField {
  int width = 0;
  int height = 0;
  FieldMatrix q;

  int num_classes() const { return static_cast<int>(q.cols()); }
};

struct InferenceResult {
  LabelMap labels;
  MarginalField marginals;
  std::vector<Real> free_energy_trace;  // entry 0 at initialization, then one per sweep
  int iterations = 0;
};

struct PropagatedFrame {
  LabelMap labels;
  MarginalField marginals;
  Real free_energy = 0;
  int iterations = 0;
};

struct PropagationResult {
  std::vector<PropagatedFrame> frames;  // offsets 1..depth
  ClassAppearanceModel appearance;      // fitted once on the reference frame
};

// Cost of disagreeing with labels carried in by forward flow, weighted by
// patch-histogram similarity between source and target. Pixels that receive
// no (non-void) flow get an all-zero cost row.
UnaryField motion_unary(const LabelMap& prev_labels, const Frame& prev_frame,
                        const Frame& next_frame, const FlowField& flow,
                        const CueConfig& cue_cfg);

// costs(p, l) = neg_log_likelihood(model, l, color(p)).
UnaryField appearance_unary(const ClassAppearanceModel& model, const Frame& next_frame);

// AUTO contrast normalization for the Potts term on a given frame.
Real resolve_beta(const CrfConfig& cfg, const Frame& frame);

// Contrast-sensitive Potts cost between two distinct pixels:
// dis(m,n)^-1 * [l_m != l_n] * exp(-beta * ||h_m - h_n||^2).
Real pairwise_cost(const Frame& frame, int mx, int my, int nx, int ny, int label_m, int label_n,
                   Real beta);

// Full energy of a labeling: sum of motion costs, lambda1-weighted appearance
// costs, and lambda2-weighted pairwise costs with each unordered neighbor
// pair counted once.
Real total_energy(const LabelMap& labels, const UnaryField& motion,
                  const UnaryField& appearance, const Frame& frame, const CrfConfig& cfg);

// Sequential raster-order mean-field updates with optional damping. Returns
// the argmax labeling (ties to the lowest class index), final marginals, and
// the free energy after initialization and after each sweep. The returned
// labeling never has higher total energy than the initialization's argmax.
InferenceResult mean_field_infer(const UnaryField& motion, const UnaryField& appearance,
                                 const Frame& frame, const CrfConfig& cfg,
                                 const MarginalField* init = nullptr);

// Chains per-frame inference: fits the appearance model on the reference
// frame, then hands each inferred labeling to the next step. frames[t] is the
// frame at offset t+1; flows[t] maps offset t to t+1 (offset 0 = reference).
PropagationResult propagate_sequence(const Frame& gt_frame, const LabelMap& gt_labels,
                                     const std::vector<Frame>& frames,
                                     const std::vector<FlowField>& flows, const CrfConfig& cfg,
                                     const CueConfig& cue_cfg);

}  // namespace vidseg
