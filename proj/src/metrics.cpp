#include "vidseg/metrics.hpp"

#include <cstdio>
#include <fstream>

namespace vidseg {

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.num_classes() != num_classes())
    throw std::invalid_argument("ConfusionMatrix::merge: class count mismatch");
  counts_ += other.counts_;
}

void accumulate(ConfusionMatrix& conf, const LabelMap& pred, const LabelMap& gt) {
  if (pred.width != gt.width || pred.height != gt.height)
    throw std::invalid_argument("accumulate: dimension mismatch");
  if (pred.num_classes > conf.num_classes() || gt.num_classes > conf.num_classes())
    throw std::invalid_argument("accumulate: label map exceeds matrix class count");
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    const std::uint8_t g = gt.labels[i];
    if (g == kVoidLabel) continue;
    const std::uint8_t p = pred.labels[i];
    if (p == kVoidLabel)
      throw std::invalid_argument("accumulate: prediction contains void pixels");
    ++conf.at(g, p);
  }
}

std::vector<std::optional<Real>> class_iou(const ConfusionMatrix& conf) {
  const int C = conf.num_classes();
  std::vector<std::uint64_t> row(C, 0), col(C, 0);
  for (int g = 0; g < C; ++g)
    for (int p = 0; p < C; ++p) {
      row[g] += conf.at(g, p);
      col[p] += conf.at(g, p);
    }
  std::vector<std::optional<Real>> ious(C);
  for (int c = 0; c < C; ++c) {
    const std::uint64_t diag = conf.at(c, c);
    const std::uint64_t uni = row[c] + col[c] - diag;
    if (uni > 0) ious[c] = static_cast<Real>(diag) / static_cast<Real>(uni);
  }
  return ious;
}

Real mean_iou(const std::vector<std::optional<Real>>& ious) {
  Real sum = 0;
  int defined = 0;
  for (const auto& iou : ious)
    if (iou) {
      sum += *iou;
      ++defined;
    }
  if (defined == 0) throw std::runtime_error("mean_iou: no class has a defined IoU");
  return sum / defined;
}

Real mean_iou(const ConfusionMatrix& conf) { return mean_iou(class_iou(conf)); }

void write_iou_report(const ConfusionMatrix& conf, const Palette& palette,
                      const std::string& path) {
  if (palette.num_classes() != conf.num_classes())
    throw std::invalid_argument("write_iou_report: palette/matrix class count mismatch");
  const std::vector<std::optional<Real>> ious = class_iou(conf);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write report: " + path);
  out << "class,iou\n";
  char buf[64];
  for (int c = 0; c < conf.num_classes(); ++c) {
    out << palette.classes[c].name << ',';
    if (ious[c]) {
      std::snprintf(buf, sizeof buf, "%.6f", *ious[c]);
      out << buf;
    }
    out << "\n";
  }
  std::snprintf(buf, sizeof buf, "%.6f", mean_iou(ious));
  out << "mean," << buf << "\n";
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace vidseg
