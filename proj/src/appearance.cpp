#include "vidseg/appearance.hpp"

#include "vidseg/random.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>

namespace vidseg {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// Diagonal covariances keep the density and the M-step elementwise.
struct DiagGaussian {
  double weight;
  Eigen::Vector3d mean;
  Eigen::Vector3d var;

  double log_norm() const {
    return -0.5 * (3.0 * kLog2Pi + std::log(var[0]) + std::log(var[1]) + std::log(var[2]));
  }
  double log_density(const Eigen::Vector3d& x) const {
    const Eigen::Vector3d d = x - mean;
    return log_norm() - 0.5 * (d.array().square() / var.array()).sum();
  }
};

double log_sum_exp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

// Mixture log-likelihood of one point, reused by EM and the public density.
double point_log_likelihood(const std::vector<DiagGaussian>& comps, const Eigen::Vector3d& x) {
  Eigen::VectorXd terms(static_cast<Eigen::Index>(comps.size()));
  for (std::size_t k = 0; k < comps.size(); ++k)
    terms[static_cast<Eigen::Index>(k)] = std::log(comps[k].weight) + comps[k].log_density(x);
  return log_sum_exp(terms);
}

std::vector<Eigen::Vector3d> kmeanspp_centers(const std::vector<Eigen::Vector3d>& points, int k,
                                              RandomStream& rng) {
  std::vector<Eigen::Vector3d> centers;
  centers.reserve(k);
  centers.push_back(points[rng.uniform_index(points.size())]);

  std::vector<double> d2(points.size());
  for (int c = 1; c < k; ++c) {
    double total = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const Eigen::Vector3d& m : centers)
        best = std::min(best, (points[i] - m).squaredNorm());
      d2[i] = best;
      total += best;
    }
    if (total <= 0) {
      // all points coincide with an existing center
      centers.push_back(points[rng.uniform_index(points.size())]);
      continue;
    }
    double target = rng.uniform() * total;
    std::size_t pick = points.size() - 1;
    double acc = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      acc += d2[i];
      if (acc >= target) {
        pick = i;
        break;
      }
    }
    centers.push_back(points[pick]);
  }
  return centers;
}

std::vector<DiagGaussian> fit_mixture(const std::vector<Eigen::Vector3d>& points, int num_comps,
                                      const AppearanceFitConfig& cfg, RandomStream rng) {
  const std::size_t n = points.size();
  const double floor_v = cfg.variance_floor;

  Eigen::Vector3d global_mean = Eigen::Vector3d::Zero();
  for (const auto& p : points) global_mean += p;
  global_mean /= static_cast<double>(n);
  Eigen::Vector3d global_var = Eigen::Vector3d::Zero();
  for (const auto& p : points) global_var += (p - global_mean).array().square().matrix();
  global_var = (global_var / static_cast<double>(n)).cwiseMax(floor_v);

  std::vector<Eigen::Vector3d> centers = kmeanspp_centers(points, num_comps, rng);
  std::vector<DiagGaussian> comps(num_comps);
  for (int k = 0; k < num_comps; ++k)
    comps[k] = {1.0 / num_comps, centers[k], global_var};

  Eigen::MatrixXd resp(n, num_comps);
  double prev_mean_ll = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    // E step
    double ll = 0;
    for (std::size_t i = 0; i < n; ++i) {
      Eigen::VectorXd terms(num_comps);
      for (int k = 0; k < num_comps; ++k)
        terms[k] = std::log(comps[k].weight) + comps[k].log_density(points[i]);
      const double lse = log_sum_exp(terms);
      ll += lse;
      resp.row(static_cast<Eigen::Index>(i)) = (terms.array() - lse).exp();
    }
    const double mean_ll = ll / static_cast<double>(n);
    if (mean_ll + 1e-9 < prev_mean_ll)
      throw std::logic_error("fit_appearance: EM log-likelihood decreased");
    const bool converged = iter > 0 && mean_ll - prev_mean_ll < cfg.convergence_gain;
    prev_mean_ll = mean_ll;
    if (converged) break;

    // M step
    for (int k = 0; k < num_comps; ++k) {
      const double nk = resp.col(k).sum();
      if (nk < 1e-9) continue;  // starved component keeps its parameters
      Eigen::Vector3d mu = Eigen::Vector3d::Zero();
      for (std::size_t i = 0; i < n; ++i) mu += resp(static_cast<Eigen::Index>(i), k) * points[i];
      mu /= nk;
      Eigen::Vector3d var = Eigen::Vector3d::Zero();
      for (std::size_t i = 0; i < n; ++i)
        var += resp(static_cast<Eigen::Index>(i), k) *
               (points[i] - mu).array().square().matrix();
      comps[k].mean = mu;
      comps[k].var = (var / nk).cwiseMax(floor_v);
      comps[k].weight = nk / static_cast<double>(n);
    }
    double wsum = 0;
    for (const auto& c : comps) wsum += c.weight;
    for (auto& c : comps) c.weight /= wsum;
  }
  return comps;
}

std::vector<DiagGaussian> to_diag(const ClassMixture& m) {
  std::vector<DiagGaussian> out(m.components.size());
  for (std::size_t k = 0; k < m.components.size(); ++k)
    out[k] = {m.components[k].weight, m.components[k].mean,
              m.components[k].covariance.diagonal()};
  return out;
}

}  // namespace

ClassAppearanceModel fit_appearance(const Frame& frame, const LabelMap& labels,
                                    const AppearanceFitConfig& config, std::uint64_t seed) {
  if (frame.width != labels.width || frame.height != labels.height)
    throw std::invalid_argument("fit_appearance: frame/label dimension mismatch");
  if (config.components_per_class < 1)
    throw std::invalid_argument("fit_appearance: components_per_class must be >= 1");

  const int C = labels.num_classes;
  std::vector<std::vector<Eigen::Vector3d>> class_points(C);
  for (int y = 0; y < frame.height; ++y)
    for (int x = 0; x < frame.width; ++x) {
      const std::uint8_t l = labels.at(x, y);
      if (l != kVoidLabel) class_points[l].push_back(frame.color(x, y));
    }

  const std::size_t min_pixels = static_cast<std::size_t>(
      std::max(config.components_per_class, config.min_class_pixels));

  ClassAppearanceModel model;
  model.num_classes = C;
  model.mixtures.resize(C);
  RandomStream base(seed);
  for (int cls = 0; cls < C; ++cls) {
    if (class_points[cls].size() < min_pixels) continue;  // absent
    const std::vector<DiagGaussian> comps = fit_mixture(
        class_points[cls], config.components_per_class, config,
        base.fork(static_cast<std::uint64_t>(cls)));
    ClassMixture mix;
    for (const DiagGaussian& g : comps) {
      GaussianComponent out;
      out.weight = g.weight;
      out.mean = g.mean;
      out.covariance = g.var.asDiagonal();
      mix.components.push_back(out);
    }
    model.mixtures[cls] = std::move(mix);
  }
  return model;
}

Real neg_log_likelihood(const ClassAppearanceModel& model, int cls,
                        const Eigen::Vector3d& color) {
  if (cls < 0 || cls >= model.num_classes)
    throw std::invalid_argument("neg_log_likelihood: class index out of range");
  const auto& mix = model.mixtures[cls];
  if (!mix) return kUnaryMax;
  const double ll = point_log_likelihood(to_diag(*mix), color);
  const double nll = -ll;
  if (!(nll == nll)) return kUnaryMax;  // NaN from degenerate input
  return std::min(std::max(nll, 0.0), kUnaryMax);
}

namespace {

constexpr char kAppearanceMagic[4] = {'V', 'S', 'A', 'M'};

template <typename T>
void write_raw(std::ofstream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof value);
}

template <typename T>
void read_raw(std::ifstream& in, T& value, const std::string& path) {
  in.read(reinterpret_cast<char*>(&value), sizeof value);
  if (!in) throw std::runtime_error("truncated appearance file: " + path);
}

}  // namespace

void save_appearance(const ClassAppearanceModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write appearance file: " + path);
  out.write(kAppearanceMagic, 4);
  write_raw(out, std::uint32_t{1});
  write_raw(out, static_cast<std::uint32_t>(model.num_classes));
  for (const auto& mix : model.mixtures) {
    write_raw(out, static_cast<std::uint8_t>(mix ? 1 : 0));
    if (!mix) continue;
    write_raw(out, static_cast<std::uint32_t>(mix->components.size()));
    for (const GaussianComponent& g : mix->components) {
      write_raw(out, g.weight);
      for (int i = 0; i < 3; ++i) write_raw(out, g.mean[i]);
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) write_raw(out, g.covariance(r, c));
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

ClassAppearanceModel load_appearance(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open appearance file: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kAppearanceMagic, 4) != 0)
    throw std::runtime_error("bad magic in appearance file: " + path);
  std::uint32_t version = 0, num_classes = 0;
  read_raw(in, version, path);
  if (version != 1)
    throw std::runtime_error("unsupported appearance file version: " + path);
  read_raw(in, num_classes, path);

  ClassAppearanceModel model;
  model.num_classes = static_cast<int>(num_classes);
  model.mixtures.resize(num_classes);
  for (std::uint32_t cls = 0; cls < num_classes; ++cls) {
    std::uint8_t present = 0;
    read_raw(in, present, path);
    if (!present) continue;
    std::uint32_t k = 0;
    read_raw(in, k, path);
    ClassMixture mix;
    mix.components.resize(k);
    for (std::uint32_t i = 0; i < k; ++i) {
      GaussianComponent& g = mix.components[i];
      read_raw(in, g.weight, path);
      for (int j = 0; j < 3; ++j) read_raw(in, g.mean[j], path);
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) read_raw(in, g.covariance(r, c), path);
    }
    model.mixtures[cls] = std::move(mix);
  }
  return model;
}

}  // namespace vidseg
