#pragma once

#include "vidseg/types.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace vidseg {

// Zero-padded convolution with square odd kernel; spatial size is preserved.
struct ConvLayer {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;
  Eigen::MatrixXd weights;  // out_channels x (in_channels * kernel * kernel)
  Eigen::VectorXd bias;     // out_channels
};

// conv(3->f1,kxk) -> relu -> conv(f1->f2,kxk) -> relu -> conv(f2->C,1x1).
// Small enough to train on a CPU in seconds while exercising the full
// trust-weighted update rule.
struct TinySegModel {
  int num_classes = 0;
  std::vector<ConvLayer> layers;

  std::size_t parameter_count() const;
};

// Seeded uniform fan-in initialization; deterministic given the seed.
TinySegModel make_tiny_model(int num_classes, int f1, int f2, int kernel, std::uint64_t seed);

// Per-pixel class scores, shape C x (width*height), pixels in raster order.
// Throws if any activation is non-finite (divergence signal).
Eigen::MatrixXd forward(const TinySegModel& model, const Frame& frame);

LabelMap predict_labels(const TinySegModel& model, const Frame& frame);

struct ModelGrad {
  std::vector<Eigen::MatrixXd> d_weights;
  std::vector<Eigen::VectorXd> d_bias;
};

struct LossAndGrad {
  double loss = 0;
  ModelGrad grad;
};

// Mean softmax cross-entropy over non-void pixels with the exact analytic
// gradient for every parameter. Errors on an all-void label map.
LossAndGrad loss_and_grad(const TinySegModel& model, const Frame& frame, const LabelMap& labels);

double loss_only(const TinySegModel& model, const Frame& frame, const LabelMap& labels);

// Flat parameter addressing (layer order; weights in row-major element
// order, then bias), shared by the optimizer tests and the gradient checker.
double get_parameter(const TinySegModel& model, std::size_t index);
void set_parameter(TinySegModel& model, std::size_t index, double value);
double get_gradient(const ModelGrad& grad, const TinySegModel& model, std::size_t index);

// Snapshot: text header (`vidseg-model v1`, class count, layer shapes)
// followed by little-endian float32 parameters in flat order.
void save_model(const TinySegModel& model, const std::string& path);
TinySegModel load_model(const std::string& path);

}  // namespace vidseg
