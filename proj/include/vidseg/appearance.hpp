#pragma once

#include "vidseg/types.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace vidseg {

// Energies are capped here so absent classes and density underflow cannot
// feed infinities into the mean-field exponentials.
inline constexpr Real kUnaryMax = 50.0;

struct GaussianComponent {
  Real weight = 0;                // in (0,1]; weights of a mixture sum to 1
  Eigen::Vector3d mean;           // normalized RGB
  Eigen::Matrix3d covariance;     // SPD, diagonal as fitted, eigenvalues >= floor
};

struct ClassMixture {
  std::vector<GaussianComponent> components;
};

// Per-class color mixtures fitted on a single labeled frame. Classes without
// enough support carry no mixture and are flagged absent.
struct ClassAppearanceModel {
  int num_classes = 0;
  std::vector<std::optional<ClassMixture>> mixtures;  // one slot per class

  bool is_absent(int cls) const { return !mixtures.at(cls).has_value(); }
};

struct AppearanceFitConfig {
  int components_per_class = 5;
  int min_class_pixels = 10;       // effective threshold is max(components, this)
  int max_iterations = 100;
  Real convergence_gain = 1e-6;    // stop when per-pixel log-likelihood gain drops below
  Real variance_floor = 1e-4;
};

// EM fit (k-means++ init) of diagonal-covariance mixtures, one per class with
// enough labeled pixels. Deterministic given (frame, labels, config, seed).
ClassAppearanceModel fit_appearance(const Frame& frame, const LabelMap& labels,
                                    const AppearanceFitConfig& config, std::uint64_t seed);

// -log sum_k w_k N(color; mu_k, Sigma_k), clamped to [0, kUnaryMax].
// Absent classes return exactly kUnaryMax.
Real neg_log_likelihood(const ClassAppearanceModel& model, int cls,
                        const Eigen::Vector3d& color);

// Versioned binary sidecar so propagation runs can reuse fits.
// Layout (little-endian): magic "VSAM", uint32 version = 1, uint32 C, then per
// class uint8 present flag and, if present, uint32 K followed by K records of
// (weight f64, mean 3xf64, covariance row-major 9xf64).
void save_appearance(const ClassAppearanceModel& model, const std::string& path);
ClassAppearanceModel load_appearance(const std::string& path);

}  // namespace vidseg
