#pragma once

#include "vidseg/types.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace vidseg {

// Rows are ground-truth classes, columns predictions. Void GT pixels are
// never counted.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes)
      : counts_(Eigen::Matrix<std::uint64_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(num_classes,
                                                                                   num_classes)) {}

  int num_classes() const { return static_cast<int>(counts_.rows()); }
  std::uint64_t at(int gt, int pred) const { return counts_(gt, pred); }
  std::uint64_t& at(int gt, int pred) { return counts_(gt, pred); }
  std::uint64_t total() const { return counts_.sum(); }

  void merge(const ConfusionMatrix& other);

 private:
  Eigen::Matrix<std::uint64_t, Eigen::Dynamic, Eigen::Dynamic> counts_;
};

// Tallies one (prediction, ground truth) pair into the matrix. Predictions
// must not contain void.
void accumulate(ConfusionMatrix& conf, const LabelMap& pred, const LabelMap& gt);

// IoU_c = diag / (row + col - diag); classes whose union is empty are
// undefined and excluded from the mean.
std::vector<std::optional<Real>> class_iou(const ConfusionMatrix& conf);

// Unweighted mean over the defined entries. Errors when none are defined.
Real mean_iou(const std::vector<std::optional<Real>>& ious);
Real mean_iou(const ConfusionMatrix& conf);

// CSV report: one `name,iou` row per class (empty iou for undefined classes)
// plus a final `mean` row.
void write_iou_report(const ConfusionMatrix& conf, const Palette& palette,
                      const std::string& path);

}  // namespace vidseg
