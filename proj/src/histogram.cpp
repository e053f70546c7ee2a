#include "vidseg/histogram.hpp"

#include <algorithm>
#include <cmath>

namespace vidseg {

PatchHistogram patch_tally(const Frame& frame, int cx, int cy, int radius, int bins) {
  if (bins < 2) throw std::invalid_argument("patch_tally: bins must be >= 2");
  if (radius < 0) throw std::invalid_argument("patch_tally: radius must be >= 0");
  if (!frame.contains(cx, cy))
    throw std::invalid_argument("patch_tally: center outside image");

  PatchHistogram h;
  h.bins_per_channel = bins;
  h.counts = Eigen::Matrix<Real, 3, Eigen::Dynamic>::Zero(3, bins);

  const int x0 = std::max(0, cx - radius), x1 = std::min(frame.width - 1, cx + radius);
  const int y0 = std::max(0, cy - radius), y1 = std::min(frame.height - 1, cy + radius);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const std::uint8_t* p = frame.rgb(x, y);
      for (int c = 0; c < 3; ++c) h.counts(c, p[c] * bins / 256) += 1.0;
    }
  h.total_weight = static_cast<Real>((x1 - x0 + 1) * (y1 - y0 + 1));
  return h;
}

PatchHistogram patch_histogram(const Frame& frame, int cx, int cy, int radius, int bins) {
  PatchHistogram h = patch_tally(frame, cx, cy, radius, bins);
  h.counts.array() += kHistogramSmoothing;
  for (int c = 0; c < 3; ++c) h.counts.row(c) /= h.counts.row(c).sum();
  h.total_weight = 1.0;
  return h;
}

Real sym_kl(const PatchHistogram& a, const PatchHistogram& b) {
  if (a.bins_per_channel != b.bins_per_channel)
    throw std::invalid_argument("sym_kl: bin count mismatch");
  Real total = 0;
  for (int c = 0; c < 3; ++c) {
    for (int k = 0; k < a.bins_per_channel; ++k) {
      const Real p = a.counts(c, k) / a.total_weight;
      const Real q = b.counts(c, k) / b.total_weight;
      // (p-q)(log p - log q) = p log(p/q) + q log(q/p); this form is exactly
      // symmetric in the arguments and each term is nonnegative
      if (p != q) total += 0.5 * (p - q) * (std::log(p) - std::log(q));
    }
  }
  return total;
}

Real motion_weight(const PatchHistogram& a, const PatchHistogram& b, Real alpha) {
  return std::exp(-alpha * sym_kl(a, b));
}

}  // namespace vidseg
