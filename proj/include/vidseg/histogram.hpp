#pragma once

#include "vidseg/types.hpp"

#include <Eigen/Dense>

namespace vidseg {

// Per-channel marginal RGB histogram of a square image patch. Rows are the
// three channels, columns the bins; each channel row sums to total_weight.
struct PatchHistogram {
  int bins_per_channel = 0;
  Eigen::Matrix<Real, 3, Eigen::Dynamic> counts;
  Real total_weight = 0;
};

// Raw per-channel bin tallies over the (2*radius+1)^2 window around `center`,
// clipped to the image. No smoothing; each row sums to the clipped pixel
// count. Bin of an 8-bit value c is c*bins/256.
PatchHistogram patch_tally(const Frame& frame, int cx, int cy, int radius, int bins);

// patch_tally with add-epsilon smoothing (1e-3 per bin) followed by
// per-channel renormalization, so every bin is strictly positive and each
// channel sums to 1.
PatchHistogram patch_histogram(const Frame& frame, int cx, int cy, int radius, int bins);

inline constexpr Real kHistogramSmoothing = 1e-3;

// Symmetrized KL divergence 0.5*[KL(a||b) + KL(b||a)], summed over the three
// channel marginals. Zero iff the histograms are equal.
Real sym_kl(const PatchHistogram& a, const PatchHistogram& b);

// Histogram similarity in (0,1]: exp(-alpha * sym_kl). 1 iff identical.
Real motion_weight(const PatchHistogram& a, const PatchHistogram& b, Real alpha);

}  // namespace vidseg
