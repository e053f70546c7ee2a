#include "vidseg/trainer.hpp"

#include "vidseg/image_io.hpp"
#include "vidseg/metrics.hpp"
#include "vidseg/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace vidseg {

OptimState make_optimizer(const TinySegModel& model, double learning_rate, double momentum,
                          double weight_decay) {
  if (learning_rate <= 0) throw std::invalid_argument("make_optimizer: learning rate must be > 0");
  OptimState state;
  state.learning_rate = learning_rate;
  state.momentum = momentum;
  state.weight_decay = weight_decay;
  for (const ConvLayer& l : model.layers) {
    state.velocity_w.push_back(Eigen::MatrixXd::Zero(l.weights.rows(), l.weights.cols()));
    state.velocity_b.push_back(Eigen::VectorXd::Zero(l.bias.size()));
  }
  return state;
}

void sgd_step(OptimState& state, TinySegModel& model, const ModelGrad& grad, Tier tier,
              double trust) {
  if (state.velocity_w.size() != model.layers.size())
    throw std::invalid_argument("sgd_step: optimizer/model shape mismatch");
  if (trust < 0 || trust > 1) throw std::invalid_argument("sgd_step: trust must be in [0,1]");

  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    ConvLayer& layer = model.layers[i];
    const Eigen::MatrixXd& dw = grad.d_weights[i];
    const Eigen::VectorXd& db = grad.d_bias[i];
    if (!dw.allFinite() || !db.allFinite())
      throw std::runtime_error("sgd_step: non-finite gradient");

    Eigen::MatrixXd gw = dw + state.weight_decay * layer.weights;
    Eigen::VectorXd gb = db + state.weight_decay * layer.bias;
    if (tier == Tier::PGT) {
      gw *= trust;
      gb *= trust;
    }
    state.velocity_w[i] = state.momentum * state.velocity_w[i] - state.learning_rate * gw;
    state.velocity_b[i] = state.momentum * state.velocity_b[i] - state.learning_rate * gb;
    layer.weights += state.velocity_w[i];
    layer.bias += state.velocity_b[i];
  }
  ++state.step_count;
}

std::vector<TrainSample> load_train_samples(const TrainSet& set, int num_classes,
                                            double pgt_trust) {
  if (pgt_trust < 0 || pgt_trust > 1)
    throw std::invalid_argument("load_train_samples: trust must be in [0,1]");
  std::vector<TrainSample> samples;
  samples.reserve(set.samples.size());
  for (const TrainSetItem& item : set.samples) {
    TrainSample s;
    s.frame = load_image(item.image_path);
    s.labels = load_labels(item.label_path, num_classes);
    s.tier = item.tier;
    s.trust = item.tier == Tier::GT ? 1.0 : pgt_trust;
    samples.push_back(std::move(s));
  }
  return samples;
}

double evaluate_mean_iou(const TinySegModel& model, const std::vector<TrainSample>& samples) {
  if (samples.empty()) throw std::invalid_argument("evaluate_mean_iou: empty evaluation set");
  ConfusionMatrix conf(model.num_classes);
  for (const TrainSample& s : samples) accumulate(conf, predict_labels(model, s.frame), s.labels);
  return mean_iou(conf);
}

TrainLog train(TinySegModel& model, OptimState& optimizer,
               const std::vector<TrainSample>& train_samples, const TrainConfig& config,
               const std::vector<TrainSample>& val_samples) {
  if (train_samples.empty()) throw std::invalid_argument("train: empty training set");
  if (config.pgt_trust < 0 || config.pgt_trust > 1)
    throw std::invalid_argument("train: trust must be in [0,1]");

  TrainLog log;
  RandomStream shuffle_rng(config.shuffle_seed);
  std::vector<std::size_t> order(train_samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    RandomStream epoch_rng = shuffle_rng.fork(static_cast<std::uint64_t>(epoch));
    epoch_rng.shuffle(order);

    double loss_sum = 0;
    for (std::size_t i = 0; i < order.size(); ++i) {
      const TrainSample& sample = train_samples[order[i]];
      try {
        const LossAndGrad lg = loss_and_grad(model, sample.frame, sample.labels);
        if (!std::isfinite(lg.loss)) throw std::runtime_error("non-finite loss");
        loss_sum += lg.loss;
        sgd_step(optimizer, model, lg.grad, sample.tier, sample.trust);
      } catch (const std::exception& e) {
        throw std::runtime_error("training diverged at epoch " + std::to_string(epoch) +
                                 ", sample " + std::to_string(i) + ": " + e.what());
      }
    }

    EpochRecord record;
    record.epoch = epoch;
    record.step = optimizer.step_count;
    record.train_loss = loss_sum / static_cast<double>(order.size());
    record.tf = config.pgt_trust;
    if (!val_samples.empty()) record.val_miou = evaluate_mean_iou(model, val_samples);
    log.push_back(record);

    if (config.snapshot_every > 0 && epoch % config.snapshot_every == 0 &&
        !config.snapshot_prefix.empty())
      save_model(model, config.snapshot_prefix + "_epoch" + std::to_string(epoch) + ".bin");
  }
  return log;
}

void save_train_log(const TrainLog& log, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write train log: " + path);
  out << "epoch,step,train_loss,val_miou,tf\n";
  char buf[64];
  for (const EpochRecord& r : log) {
    out << r.epoch << ',' << r.step << ',';
    std::snprintf(buf, sizeof buf, "%.17g", r.train_loss);
    out << buf << ',';
    if (r.val_miou) {
      std::snprintf(buf, sizeof buf, "%.17g", *r.val_miou);
      out << buf;
    }
    std::snprintf(buf, sizeof buf, "%.17g", r.tf);
    out << ',' << buf << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

double grad_check(const TinySegModel& model, const Frame& frame, const LabelMap& labels,
                  int num_coords, std::uint64_t seed, double epsilon) {
  if (num_coords < 1) throw std::invalid_argument("grad_check: num_coords must be >= 1");

  const LossAndGrad analytic = loss_and_grad(model, frame, labels);

  // Stratify coordinates across layers so every parameter block is probed.
  std::vector<std::pair<std::size_t, std::size_t>> blocks;  // (flat offset, size)
  std::size_t offset = 0;
  for (const ConvLayer& l : model.layers) {
    const std::size_t size =
        static_cast<std::size_t>(l.weights.size()) + static_cast<std::size_t>(l.bias.size());
    blocks.emplace_back(offset, size);
    offset += size;
  }

  RandomStream rng(seed);
  TinySegModel probe = model;
  double max_rel = 0;
  for (int i = 0; i < num_coords; ++i) {
    const auto& block = blocks[static_cast<std::size_t>(i) % blocks.size()];
    const std::size_t index = block.first + rng.uniform_index(block.second);

    const double saved = get_parameter(probe, index);
    set_parameter(probe, index, saved + epsilon);
    const double loss_plus = loss_only(probe, frame, labels);
    set_parameter(probe, index, saved - epsilon);
    const double loss_minus = loss_only(probe, frame, labels);
    set_parameter(probe, index, saved);

    const double numeric = (loss_plus - loss_minus) / (2.0 * epsilon);
    const double a = get_gradient(analytic.grad, model, index);
    const double rel =
        std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-2});
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace vidseg
