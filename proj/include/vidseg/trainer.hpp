#pragma once

#include "vidseg/datasets.hpp"
#include "vidseg/manifest.hpp"
#include "vidseg/model.hpp"
#include "vidseg/types.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace vidseg {

// One training unit: image, labels, trust tier and the factor that scales
// its gradient. GT samples always carry trust 1.
struct TrainSample {
  Frame frame;
  LabelMap labels;
  Tier tier = Tier::GT;
  double trust = 1.0;
};

// SGD with momentum and weight decay. Velocity buffers mirror the model's
// parameter blocks.
struct OptimState {
  double learning_rate = 1e-2;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::vector<Eigen::MatrixXd> velocity_w;
  std::vector<Eigen::VectorXd> velocity_b;
  long step_count = 0;
};

OptimState make_optimizer(const TinySegModel& model, double learning_rate, double momentum,
                          double weight_decay);

// The trust-weighted update. PGT samples scale the whole effective gradient
// (loss gradient plus weight decay) by trust; GT samples apply it unscaled,
// so trust 1 reproduces the GT update bit for bit:
//   g      = trust * (grad + wd * theta)   [PGT]   /   grad + wd * theta   [GT]
//   v      = momentum * v - lr * g
//   theta += v
void sgd_step(OptimState& state, TinySegModel& model, const ModelGrad& grad, Tier tier,
              double trust);

struct TrainConfig {
  int epochs = 10;
  static constexpr int batch_size = 1;  // fixed by the update-rule contract
  double pgt_trust = 1.0;
  std::uint64_t shuffle_seed = 1;
  int snapshot_every = 0;  // epochs between snapshots; 0 = none
  std::string snapshot_prefix;
};

struct EpochRecord {
  int epoch = 0;
  long step = 0;  // cumulative gradient steps, so set-size effects stay visible
  double train_loss = 0;
  std::optional<double> val_miou;
  double tf = 1.0;
};

using TrainLog = std::vector<EpochRecord>;

// CSV `epoch,step,train_loss,val_miou,tf`.
void save_train_log(const TrainLog& log, const std::string& path);

// Loads a train set from disk; PGT samples receive `pgt_trust`, GT samples 1.
std::vector<TrainSample> load_train_samples(const TrainSet& set, int num_classes,
                                            double pgt_trust);

double evaluate_mean_iou(const TinySegModel& model, const std::vector<TrainSample>& samples);

// Seeded per-epoch shuffle, one sgd_step per sample, mean IoU on the
// validation set after every epoch. Divergence aborts with the failing
// epoch and sample index in the message.
TrainLog train(TinySegModel& model, OptimState& optimizer,
               const std::vector<TrainSample>& train_samples, const TrainConfig& config,
               const std::vector<TrainSample>& val_samples);

// Max relative error between analytic and central finite-difference
// derivatives over `num_coords` seeded coordinates, stratified across
// layers. Relative error uses denominator max(|a|, |n|, 1e-2).
double grad_check(const TinySegModel& model, const Frame& frame, const LabelMap& labels,
                  int num_coords, std::uint64_t seed, double epsilon = 1e-4);

}  // namespace vidseg
