#include "vidseg/model.hpp"

#include "vidseg/random.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace vidseg {

namespace {

// Columns of the patch matrix for a same-padded k x k convolution: entry
// ((c*k + ky)*k + kx, p) is channel c of the input at the neighbor of p,
// zero outside the image.
Eigen::MatrixXd im2col(const Eigen::MatrixXd& input, int width, int height, int kernel) {
  const int C = static_cast<int>(input.rows());
  const int r = kernel / 2;
  Eigen::MatrixXd col = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(C) * kernel * kernel,
                                              input.cols());
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const Eigen::Index p = static_cast<Eigen::Index>(y) * width + x;
      for (int ky = 0; ky < kernel; ++ky) {
        const int sy = y + ky - r;
        if (sy < 0 || sy >= height) continue;
        for (int kx = 0; kx < kernel; ++kx) {
          const int sx = x + kx - r;
          if (sx < 0 || sx >= width) continue;
          const Eigen::Index sp = static_cast<Eigen::Index>(sy) * width + sx;
          for (int c = 0; c < C; ++c)
            col((static_cast<Eigen::Index>(c) * kernel + ky) * kernel + kx, p) = input(c, sp);
        }
      }
    }
  return col;
}

// Adjoint of im2col: scatter-adds column gradients back onto the input grid.
Eigen::MatrixXd col2im(const Eigen::MatrixXd& dcol, int channels, int width, int height,
                       int kernel) {
  const int r = kernel / 2;
  Eigen::MatrixXd dinput = Eigen::MatrixXd::Zero(channels, dcol.cols());
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const Eigen::Index p = static_cast<Eigen::Index>(y) * width + x;
      for (int ky = 0; ky < kernel; ++ky) {
        const int sy = y + ky - r;
        if (sy < 0 || sy >= height) continue;
        for (int kx = 0; kx < kernel; ++kx) {
          const int sx = x + kx - r;
          if (sx < 0 || sx >= width) continue;
          const Eigen::Index sp = static_cast<Eigen::Index>(sy) * width + sx;
          for (int c = 0; c < channels; ++c)
            dinput(c, sp) += dcol((static_cast<Eigen::Index>(c) * kernel + ky) * kernel + kx, p);
        }
      }
    }
  return dinput;
}

Eigen::MatrixXd frame_to_input(const Frame& frame) {
  Eigen::MatrixXd input(3, static_cast<Eigen::Index>(frame.pixel_count()));
  for (Eigen::Index p = 0; p < input.cols(); ++p) {
    input(0, p) = frame.data[static_cast<std::size_t>(p) * 3] / 255.0;
    input(1, p) = frame.data[static_cast<std::size_t>(p) * 3 + 1] / 255.0;
    input(2, p) = frame.data[static_cast<std::size_t>(p) * 3 + 2] / 255.0;
  }
  return input;
}

struct ForwardPass {
  std::vector<Eigen::MatrixXd> inputs;    // activation entering each layer
  std::vector<Eigen::MatrixXd> cols;      // im2col of each layer input
  std::vector<Eigen::MatrixXd> pre_acts;  // W*col + b per layer
  Eigen::MatrixXd scores;                 // final pre-activation (no relu on last layer)
};

ForwardPass run_forward(const TinySegModel& model, const Frame& frame) {
  ForwardPass pass;
  Eigen::MatrixXd act = frame_to_input(frame);
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const ConvLayer& layer = model.layers[i];
    pass.inputs.push_back(act);
    Eigen::MatrixXd col =
        layer.kernel == 1 ? act : im2col(act, frame.width, frame.height, layer.kernel);
    Eigen::MatrixXd pre = (layer.weights * col).colwise() + layer.bias;
    pass.cols.push_back(std::move(col));
    if (i + 1 < model.layers.size()) {
      act = pre.cwiseMax(0.0);  // relu
      pass.pre_acts.push_back(std::move(pre));
    } else {
      pass.pre_acts.push_back(pre);
      pass.scores = std::move(pre);
    }
  }
  if (!pass.scores.allFinite())
    throw std::runtime_error("forward: non-finite activations (diverged parameters)");
  return pass;
}

}  // namespace

std::size_t TinySegModel::parameter_count() const {
  std::size_t n = 0;
  for (const ConvLayer& l : layers)
    n += static_cast<std::size_t>(l.weights.size()) + static_cast<std::size_t>(l.bias.size());
  return n;
}

TinySegModel make_tiny_model(int num_classes, int f1, int f2, int kernel, std::uint64_t seed) {
  if (num_classes < 1 || f1 < 1 || f2 < 1)
    throw std::invalid_argument("make_tiny_model: channel counts must be >= 1");
  if (kernel < 1 || kernel % 2 == 0)
    throw std::invalid_argument("make_tiny_model: kernel must be odd");

  TinySegModel model;
  model.num_classes = num_classes;
  const int shapes[3][3] = {{3, f1, kernel}, {f1, f2, kernel}, {f2, num_classes, 1}};
  RandomStream rng(seed);
  for (const auto& s : shapes) {
    ConvLayer layer;
    layer.in_channels = s[0];
    layer.out_channels = s[1];
    layer.kernel = s[2];
    const Eigen::Index fan_in = static_cast<Eigen::Index>(s[0]) * s[2] * s[2];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    layer.weights.resize(s[1], fan_in);
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
        layer.weights(r, c) = rng.uniform(-bound, bound);
    layer.bias = Eigen::VectorXd::Zero(s[1]);
    model.layers.push_back(std::move(layer));
  }
  return model;
}

Eigen::MatrixXd forward(const TinySegModel& model, const Frame& frame) {
  return run_forward(model, frame).scores;
}

LabelMap predict_labels(const TinySegModel& model, const Frame& frame) {
  const Eigen::MatrixXd scores = forward(model, frame);
  LabelMap labels(frame.width, frame.height, model.num_classes);
  for (Eigen::Index p = 0; p < scores.cols(); ++p) {
    int best = 0;
    for (int l = 1; l < model.num_classes; ++l)
      if (scores(l, p) > scores(best, p)) best = l;  // ties keep the lowest index
    labels.labels[static_cast<std::size_t>(p)] = static_cast<std::uint8_t>(best);
  }
  return labels;
}

LossAndGrad loss_and_grad(const TinySegModel& model, const Frame& frame, const LabelMap& labels) {
  if (frame.width != labels.width || frame.height != labels.height)
    throw std::invalid_argument("loss_and_grad: frame/label dimension mismatch");
  if (labels.num_classes != model.num_classes)
    throw std::invalid_argument("loss_and_grad: class count mismatch");

  ForwardPass pass = run_forward(model, frame);
  const Eigen::Index n = pass.scores.cols();
  const int C = model.num_classes;

  Eigen::Index scored = 0;
  for (std::size_t i = 0; i < labels.labels.size(); ++i)
    if (labels.labels[i] != kVoidLabel) ++scored;
  if (scored == 0) throw std::invalid_argument("loss_and_grad: all pixels are void");

  // softmax cross-entropy and dL/dscores in one pass
  double loss = 0;
  Eigen::MatrixXd dscores = Eigen::MatrixXd::Zero(C, n);
  const double inv_scored = 1.0 / static_cast<double>(scored);
  for (Eigen::Index p = 0; p < n; ++p) {
    const std::uint8_t target = labels.labels[static_cast<std::size_t>(p)];
    if (target == kVoidLabel) continue;
    const double m = pass.scores.col(p).maxCoeff();
    const Eigen::ArrayXd shifted = pass.scores.col(p).array() - m;
    const Eigen::ArrayXd expd = shifted.exp();
    const double z = expd.sum();
    loss += (std::log(z) - shifted[target]) * inv_scored;
    dscores.col(p) = (expd / z).matrix() * inv_scored;
    dscores(target, p) -= inv_scored;
  }

  LossAndGrad out;
  out.loss = loss;
  out.grad.d_weights.resize(model.layers.size());
  out.grad.d_bias.resize(model.layers.size());

  Eigen::MatrixXd delta = std::move(dscores);  // gradient at each layer's pre-activation
  for (int i = static_cast<int>(model.layers.size()) - 1; i >= 0; --i) {
    const ConvLayer& layer = model.layers[static_cast<std::size_t>(i)];
    out.grad.d_weights[static_cast<std::size_t>(i)] =
        delta * pass.cols[static_cast<std::size_t>(i)].transpose();
    out.grad.d_bias[static_cast<std::size_t>(i)] = delta.rowwise().sum();
    if (i == 0) break;
    Eigen::MatrixXd dcol = layer.weights.transpose() * delta;
    Eigen::MatrixXd dinput =
        layer.kernel == 1
            ? std::move(dcol)
            : col2im(dcol, layer.in_channels, frame.width, frame.height, layer.kernel);
    // through the relu of the previous layer
    const Eigen::MatrixXd& pre = pass.pre_acts[static_cast<std::size_t>(i) - 1];
    delta = dinput.cwiseProduct((pre.array() > 0.0).cast<double>().matrix());
  }
  return out;
}

double loss_only(const TinySegModel& model, const Frame& frame, const LabelMap& labels) {
  ForwardPass pass = run_forward(model, frame);
  Eigen::Index scored = 0;
  double loss = 0;
  for (Eigen::Index p = 0; p < pass.scores.cols(); ++p) {
    const std::uint8_t target = labels.labels[static_cast<std::size_t>(p)];
    if (target == kVoidLabel) continue;
    ++scored;
    const double m = pass.scores.col(p).maxCoeff();
    const Eigen::ArrayXd shifted = pass.scores.col(p).array() - m;
    loss += std::log(shifted.exp().sum()) - shifted[target];
  }
  if (scored == 0) throw std::invalid_argument("loss_only: all pixels are void");
  return loss / static_cast<double>(scored);
}

namespace {

// Flat order: per layer, weights row-major, then bias.
struct ParamRef {
  bool is_bias;
  std::size_t layer;
  Eigen::Index row, col;
};

ParamRef locate(const TinySegModel& model, std::size_t index) {
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const ConvLayer& l = model.layers[i];
    const std::size_t w = static_cast<std::size_t>(l.weights.size());
    if (index < w) {
      const Eigen::Index r = static_cast<Eigen::Index>(index) / l.weights.cols();
      const Eigen::Index c = static_cast<Eigen::Index>(index) % l.weights.cols();
      return {false, i, r, c};
    }
    index -= w;
    const std::size_t b = static_cast<std::size_t>(l.bias.size());
    if (index < b) return {true, i, static_cast<Eigen::Index>(index), 0};
    index -= b;
  }
  throw std::out_of_range("parameter index out of range");
}

}  // namespace

double get_parameter(const TinySegModel& model, std::size_t index) {
  const ParamRef r = locate(model, index);
  return r.is_bias ? model.layers[r.layer].bias[r.row] : model.layers[r.layer].weights(r.row, r.col);
}

void set_parameter(TinySegModel& model, std::size_t index, double value) {
  const ParamRef r = locate(model, index);
  if (r.is_bias)
    model.layers[r.layer].bias[r.row] = value;
  else
    model.layers[r.layer].weights(r.row, r.col) = value;
}

double get_gradient(const ModelGrad& grad, const TinySegModel& model, std::size_t index) {
  const ParamRef r = locate(model, index);
  return r.is_bias ? grad.d_bias[r.layer][r.row] : grad.d_weights[r.layer](r.row, r.col);
}

void save_model(const TinySegModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write model: " + path);
  out << "vidseg-model v1\n";
  out << "classes " << model.num_classes << "\n";
  out << "layers " << model.layers.size() << "\n";
  for (const ConvLayer& l : model.layers)
    out << "conv " << l.in_channels << " " << l.out_channels << " " << l.kernel << "\n";
  out << "data float32-le\n";
  for (const ConvLayer& l : model.layers) {
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) {
        const float v = static_cast<float>(l.weights(r, c));
        out.write(reinterpret_cast<const char*>(&v), sizeof v);
      }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) {
      const float v = static_cast<float>(l.bias[r]);
      out.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

TinySegModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "vidseg-model v1")
    throw std::runtime_error("bad model header in " + path);

  TinySegModel model;
  std::size_t num_layers = 0;
  if (!std::getline(in, line) || line.rfind("classes ", 0) != 0)
    throw std::runtime_error("bad model header in " + path);
  model.num_classes = std::stoi(line.substr(8));
  if (!std::getline(in, line) || line.rfind("layers ", 0) != 0)
    throw std::runtime_error("bad model header in " + path);
  num_layers = static_cast<std::size_t>(std::stoul(line.substr(7)));
  for (std::size_t i = 0; i < num_layers; ++i) {
    if (!std::getline(in, line)) throw std::runtime_error("truncated model header in " + path);
    std::istringstream ls(line);
    std::string kind;
    ConvLayer layer;
    ls >> kind >> layer.in_channels >> layer.out_channels >> layer.kernel;
    if (!ls || kind != "conv") throw std::runtime_error("bad layer line in " + path);
    layer.weights.resize(layer.out_channels,
                         static_cast<Eigen::Index>(layer.in_channels) * layer.kernel * layer.kernel);
    layer.bias.resize(layer.out_channels);
    model.layers.push_back(std::move(layer));
  }
  if (!std::getline(in, line) || line != "data float32-le")
    throw std::runtime_error("bad model header in " + path);

  for (ConvLayer& l : model.layers) {
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) {
        float v;
        in.read(reinterpret_cast<char*>(&v), sizeof v);
        l.weights(r, c) = v;
      }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) {
      float v;
      in.read(reinterpret_cast<char*>(&v), sizeof v);
      l.bias[r] = v;
    }
  }
  if (!in) throw std::runtime_error("truncated model data in " + path);
  return model;
}

}  // namespace vidseg
