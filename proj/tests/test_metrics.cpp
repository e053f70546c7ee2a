#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_util.hpp"
#include "vidseg/metrics.hpp"

#include <fstream>
#include <numeric>

using namespace vidseg;

TEST_CASE("accumulate: perfect prediction fills the diagonal only") {
  RandomStream rng(1);
  const LabelMap gt = test::random_labels(8, 6, 4, rng);
  ConfusionMatrix conf(4);
  accumulate(conf, gt, gt);
  CHECK(conf.total() == 48);
  for (int g = 0; g < 4; ++g)
    for (int p = 0; p < 4; ++p)
      if (g != p) CHECK(conf.at(g, p) == 0);
  for (const auto iou : class_iou(conf))
    if (iou) CHECK(*iou == 1.0);
}

TEST_CASE("accumulate: all-void ground truth leaves the matrix unchanged") {
  RandomStream rng(2);
  const LabelMap pred = test::random_labels(6, 6, 3, rng);
  LabelMap gt(6, 6, 3, kVoidLabel);
  ConfusionMatrix conf(3);
  accumulate(conf, pred, gt);
  CHECK(conf.total() == 0);

  // void predictions over scored pixels are a contract violation
  LabelMap bad_pred(6, 6, 3, kVoidLabel);
  LabelMap scored_gt(6, 6, 3, 0);
  CHECK_THROWS(accumulate(conf, bad_pred, scored_gt));
}

TEST_CASE("accumulate: matches a hand tally on a 2x2 pair") {
  LabelMap pred(2, 2, 3, 0);
  LabelMap gt(2, 2, 3, 0);
  // pixel (0,0): gt 0 pred 0; (1,0): gt 1 pred 0; (0,1): gt 2 pred 1; (1,1): gt void
  gt.at(1, 0) = 1;
  gt.at(0, 1) = 2;
  gt.at(1, 1) = kVoidLabel;
  pred.at(0, 1) = 1;
  pred.at(1, 1) = 2;

  ConfusionMatrix conf(3);
  accumulate(conf, pred, gt);
  CHECK(conf.total() == 3);
  CHECK(conf.at(0, 0) == 1);
  CHECK(conf.at(1, 0) == 1);
  CHECK(conf.at(2, 1) == 1);
}

TEST_CASE("accumulate: order independence over image pairs") {
  RandomStream rng(3);
  std::vector<std::pair<LabelMap, LabelMap>> pairs;
  for (int i = 0; i < 6; ++i)
    pairs.push_back({test::random_labels(5, 5, 3, rng), test::random_labels(5, 5, 3, rng)});

  ConfusionMatrix forward_order(3);
  for (const auto& [pred, gt] : pairs) accumulate(forward_order, pred, gt);
  ConfusionMatrix reverse_order(3);
  for (auto it = pairs.rbegin(); it != pairs.rend(); ++it)
    accumulate(reverse_order, it->first, it->second);
  for (int g = 0; g < 3; ++g)
    for (int p = 0; p < 3; ++p) CHECK(forward_order.at(g, p) == reverse_order.at(g, p));
}

TEST_CASE("class_iou: formula on a hand matrix and undefined exclusion") {
  ConfusionMatrix conf(2);
  conf.at(0, 0) = 3;
  conf.at(0, 1) = 1;
  conf.at(1, 0) = 2;
  conf.at(1, 1) = 4;
  const auto ious = class_iou(conf);
  REQUIRE(ious.size() == 2);
  CHECK(*ious[0] == doctest::Approx(3.0 / 6.0));
  CHECK(*ious[1] == doctest::Approx(4.0 / 7.0));
  CHECK(mean_iou(conf) == doctest::Approx(0.5 * (3.0 / 6.0 + 4.0 / 7.0)));

  ConfusionMatrix sparse(3);
  sparse.at(0, 0) = 5;  // class 1 and 2 never appear
  const auto sparse_ious = class_iou(sparse);
  CHECK(sparse_ious[0].has_value());
  CHECK(!sparse_ious[1].has_value());
  CHECK(!sparse_ious[2].has_value());
  CHECK(mean_iou(sparse) == 1.0);

  ConfusionMatrix empty(2);
  CHECK_THROWS(mean_iou(empty));
}

TEST_CASE("mean_iou: single perfect class gives 1") {
  ConfusionMatrix conf(1);
  conf.at(0, 0) = 10;
  CHECK(mean_iou(conf) == 1.0);
}

TEST_CASE("class relabeling permutes IoUs and keeps the mean") {
  RandomStream rng(4);
  const int C = 4;
  ConfusionMatrix conf(C);
  for (int g = 0; g < C; ++g)
    for (int p = 0; p < C; ++p) conf.at(g, p) = rng.uniform_index(20);
  conf.at(1, 1) += 5;  // make sure every class appears

  const int perm[4] = {2, 0, 3, 1};
  ConfusionMatrix permuted(C);
  for (int g = 0; g < C; ++g)
    for (int p = 0; p < C; ++p) permuted.at(perm[g], perm[p]) = conf.at(g, p);

  const auto base = class_iou(conf);
  const auto moved = class_iou(permuted);
  for (int c = 0; c < C; ++c) CHECK(base[c] == moved[perm[c]]);
  CHECK(mean_iou(conf) == doctest::Approx(mean_iou(permuted)).epsilon(1e-12));
}

TEST_CASE("merge: entrywise sum supports parallel accumulation then reduction") {
  RandomStream rng(5);
  const LabelMap a_pred = test::random_labels(7, 7, 3, rng);
  const LabelMap a_gt = test::random_labels(7, 7, 3, rng);
  const LabelMap b_pred = test::random_labels(7, 7, 3, rng);
  const LabelMap b_gt = test::random_labels(7, 7, 3, rng);

  ConfusionMatrix whole(3);
  accumulate(whole, a_pred, a_gt);
  accumulate(whole, b_pred, b_gt);

  ConfusionMatrix part1(3), part2(3);
  accumulate(part1, a_pred, a_gt);
  accumulate(part2, b_pred, b_gt);
  part1.merge(part2);

  for (int g = 0; g < 3; ++g)
    for (int p = 0; p < 3; ++p) CHECK(whole.at(g, p) == part1.at(g, p));

  ConfusionMatrix wrong(4);
  CHECK_THROWS(part1.merge(wrong));
}

TEST_CASE("iou report: one row per class plus a mean row") {
  const std::string dir = test::temp_dir("metrics_report");
  ConfusionMatrix conf(2);
  conf.at(0, 0) = 3;
  conf.at(0, 1) = 1;
  conf.at(1, 1) = 4;
  Palette palette{{{"road", 1, 2, 3}, {"car", 4, 5, 6}}};
  const std::string path = dir + "/report.csv";
  write_iou_report(conf, palette, path);

  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "class,iou");
  std::getline(in, line);
  CHECK(line == "road,0.750000");
  std::getline(in, line);
  CHECK(line == "car,0.800000");
  std::getline(in, line);
  CHECK(line.substr(0, 5) == "mean,");
}
