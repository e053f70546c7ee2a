#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_util.hpp"
#include "vidseg/appearance.hpp"
#include "vidseg/histogram.hpp"

#include <cmath>
#include <fstream>

using namespace vidseg;

namespace {
constexpr double kPi = 3.14159265358979323846;
}

namespace {

PatchHistogram hand_histogram(std::initializer_list<Real> per_channel_bins) {
  PatchHistogram h;
  h.bins_per_channel = static_cast<int>(per_channel_bins.size());
  h.counts.resize(3, h.bins_per_channel);
  int k = 0;
  for (Real v : per_channel_bins) {
    for (int c = 0; c < 3; ++c) h.counts(c, k) = v;
    ++k;
  }
  h.total_weight = h.counts.row(0).sum();
  return h;
}

Frame constant_frame(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  Frame f(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      f.rgb(x, y)[0] = r;
      f.rgb(x, y)[1] = g;
      f.rgb(x, y)[2] = b;
    }
  return f;
}

}  // namespace

TEST_CASE("patch_tally: constant patch puts all mass in one bin per channel") {
  const Frame f = constant_frame(9, 9, 200, 10, 100);
  const PatchHistogram h = patch_tally(f, 4, 4, 3, 8);
  CHECK(h.total_weight == 49.0);
  // 200*8/256 = 6, 10*8/256 = 0, 100*8/256 = 3
  CHECK(h.counts(0, 6) == 49.0);
  CHECK(h.counts(1, 0) == 49.0);
  CHECK(h.counts(2, 3) == 49.0);
  CHECK(h.counts.sum() == 3 * 49.0);
}

TEST_CASE("patch_tally: radius 0 tallies the single center pixel") {
  const Frame f = constant_frame(3, 3, 255, 0, 128);
  const PatchHistogram h = patch_tally(f, 1, 1, 0, 4);
  CHECK(h.total_weight == 1.0);
  CHECK(h.counts(0, 3) == 1.0);
  CHECK(h.counts(1, 0) == 1.0);
  CHECK(h.counts(2, 2) == 1.0);
}

TEST_CASE("patch_tally: matches a naive double-loop tally on random patches") {
  RandomStream rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const int w = rng.uniform_int(7, 15), h = rng.uniform_int(7, 15);
    const Frame f = test::random_frame(w, h, rng);
    const int cx = rng.uniform_int(0, w - 1), cy = rng.uniform_int(0, h - 1);
    const int radius = 3, bins = 8;
    const PatchHistogram got = patch_tally(f, cx, cy, radius, bins);

    Eigen::Matrix<Real, 3, Eigen::Dynamic> expected =
        Eigen::Matrix<Real, 3, Eigen::Dynamic>::Zero(3, bins);
    for (int y = cy - radius; y <= cy + radius; ++y)
      for (int x = cx - radius; x <= cx + radius; ++x) {
        if (x < 0 || x >= w || y < 0 || y >= h) continue;
        for (int c = 0; c < 3; ++c) expected(c, f.rgb(x, y)[c] * bins / 256) += 1.0;
      }
    CHECK(got.counts == expected);
  }
}

TEST_CASE("patch_tally: rejects centers outside the image and bad parameters") {
  const Frame f = constant_frame(4, 4, 0, 0, 0);
  CHECK_THROWS(patch_tally(f, 4, 0, 1, 8));
  CHECK_THROWS(patch_tally(f, 0, -1, 1, 8));
  CHECK_THROWS(patch_tally(f, 0, 0, 1, 1));
  CHECK_THROWS(patch_tally(f, 0, 0, -1, 8));
}

TEST_CASE("patch_histogram: smoothed, strictly positive, channels sum to 1") {
  RandomStream rng(5);
  const Frame f = test::random_frame(10, 10, rng);
  const PatchHistogram h = patch_histogram(f, 5, 5, 3, 8);
  CHECK(h.total_weight == 1.0);
  CHECK((h.counts.array() > 0).all());
  for (int c = 0; c < 3; ++c)
    CHECK(h.counts.row(c).sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("sym_kl: zero at identity, symmetric, positive otherwise") {
  RandomStream rng(9);
  const Frame f = test::random_frame(12, 12, rng);
  const PatchHistogram a = patch_histogram(f, 3, 3, 2, 8);
  const PatchHistogram b = patch_histogram(f, 8, 8, 2, 8);
  CHECK(sym_kl(a, a) == 0.0);
  CHECK(sym_kl(a, b) == sym_kl(b, a));
  CHECK(sym_kl(a, b) > 0.0);

  const PatchHistogram four_bins = patch_histogram(f, 3, 3, 2, 4);
  CHECK_THROWS(sym_kl(a, four_bins));
}

TEST_CASE("sym_kl: hand-computed value on 2-bin histograms") {
  const PatchHistogram a = hand_histogram({0.9, 0.1});
  const PatchHistogram b = hand_histogram({0.5, 0.5});
  // per channel: 0.5*[0.9 ln(0.9/0.5) + 0.1 ln(0.1/0.5) + 0.5 ln(0.5/0.9) + 0.5 ln(0.5/0.1)]
  const double kl_ab = 0.9 * std::log(0.9 / 0.5) + 0.1 * std::log(0.1 / 0.5);
  const double kl_ba = 0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(0.5 / 0.1);
  const double expected = 3.0 * 0.5 * (kl_ab + kl_ba);
  CHECK(sym_kl(a, b) == doctest::Approx(expected).epsilon(1e-12));

  CHECK(motion_weight(a, b, 1.0) == doctest::Approx(std::exp(-expected)).epsilon(1e-12));
}

TEST_CASE("motion_weight: identity and disabled-alpha cases") {
  RandomStream rng(13);
  const Frame f = test::random_frame(9, 9, rng);
  const PatchHistogram a = patch_histogram(f, 2, 2, 2, 8);
  const PatchHistogram b = patch_histogram(f, 6, 6, 2, 8);
  CHECK(motion_weight(a, a, 1.0) == 1.0);
  CHECK(motion_weight(a, b, 0.0) == 1.0);
  CHECK(motion_weight(a, b, 1.0) <= 1.0);
  CHECK(motion_weight(a, b, 1.0) > 0.0);
  // nonincreasing in divergence: scaling alpha up cannot increase the weight
  CHECK(motion_weight(a, b, 2.0) <= motion_weight(a, b, 1.0));
}

namespace {

// Labels the left half class 0, right half class 1.
LabelMap split_labels(int w, int h, int num_classes) {
  LabelMap l(w, h, num_classes);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) l.at(x, y) = x < w / 2 ? 0 : 1;
  return l;
}

}  // namespace

TEST_CASE("fit_appearance: one-color class collapses to its color at the variance floor") {
  const int w = 24, h = 24;
  Frame f = constant_frame(w, h, 50, 100, 150);
  const LabelMap labels(w, h, 2, 0);  // all class 0

  AppearanceFitConfig cfg;
  cfg.components_per_class = 2;
  const ClassAppearanceModel model = fit_appearance(f, labels, cfg, 42);

  REQUIRE(!model.is_absent(0));
  CHECK(model.is_absent(1));
  const Eigen::Vector3d expected_mean(50 / 255.0, 100 / 255.0, 150 / 255.0);
  for (const GaussianComponent& g : model.mixtures[0]->components) {
    CHECK((g.mean - expected_mean).norm() < 1e-12);
    CHECK(g.covariance.diagonal().minCoeff() == doctest::Approx(cfg.variance_floor));
  }
}

TEST_CASE("fit_appearance: recovers two well-separated blob means within 0.02") {
  const int w = 40, h = 20;
  RandomStream rng(4);
  Frame f(w, h);
  // two color blobs under one class: left around (60,60,200), right around (220,40,40)
  Eigen::Vector3d sum_left = Eigen::Vector3d::Zero(), sum_right = Eigen::Vector3d::Zero();
  int n_left = 0, n_right = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const bool left = x < w / 2;
      const double base[3] = {left ? 60.0 : 220.0, left ? 60.0 : 40.0, left ? 200.0 : 40.0};
      for (int c = 0; c < 3; ++c) {
        const double v = std::min(255.0, std::max(0.0, base[c] + 8.0 * rng.gaussian()));
        f.rgb(x, y)[c] = static_cast<std::uint8_t>(std::lround(v));
      }
      if (left) {
        sum_left += f.color(x, y);
        ++n_left;
      } else {
        sum_right += f.color(x, y);
        ++n_right;
      }
    }
  const Eigen::Vector3d mean_left = sum_left / n_left, mean_right = sum_right / n_right;

  const LabelMap labels(w, h, 1, 0);
  AppearanceFitConfig cfg;
  cfg.components_per_class = 2;
  const ClassAppearanceModel model = fit_appearance(f, labels, cfg, 7);
  REQUIRE(!model.is_absent(0));
  REQUIRE(model.mixtures[0]->components.size() == 2);

  // match fitted means to sample means by nearest assignment
  const Eigen::Vector3d m0 = model.mixtures[0]->components[0].mean;
  const Eigen::Vector3d m1 = model.mixtures[0]->components[1].mean;
  const double direct = (m0 - mean_left).norm() + (m1 - mean_right).norm();
  const double swapped = (m0 - mean_right).norm() + (m1 - mean_left).norm();
  CHECK(std::min(direct, swapped) < 2 * 0.02);
}

TEST_CASE("fit_appearance: deterministic, weights normalized, floors respected") {
  RandomStream rng(17);
  const Frame f = test::random_frame(32, 32, rng);
  const LabelMap labels = split_labels(32, 32, 2);

  AppearanceFitConfig cfg;
  const ClassAppearanceModel a = fit_appearance(f, labels, cfg, 123);
  const ClassAppearanceModel b = fit_appearance(f, labels, cfg, 123);

  for (int cls = 0; cls < 2; ++cls) {
    REQUIRE(!a.is_absent(cls));
    double weight_sum = 0;
    for (std::size_t k = 0; k < a.mixtures[cls]->components.size(); ++k) {
      const GaussianComponent& ga = a.mixtures[cls]->components[k];
      const GaussianComponent& gb = b.mixtures[cls]->components[k];
      CHECK(ga.weight == gb.weight);
      CHECK(ga.mean == gb.mean);
      CHECK(ga.covariance == gb.covariance);
      CHECK(ga.covariance.diagonal().minCoeff() >= cfg.variance_floor - 1e-15);
      weight_sum += ga.weight;
    }
    CHECK(weight_sum == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("fit_appearance: dimension mismatch rejected, sparse class absent") {
  RandomStream rng(3);
  const Frame f = test::random_frame(16, 16, rng);
  const LabelMap wrong(8, 8, 2, 0);
  CHECK_THROWS(fit_appearance(f, wrong, {}, 1));

  LabelMap sparse(16, 16, 3, 0);
  sparse.at(0, 0) = 1;  // a single pixel of class 1, below the threshold
  const ClassAppearanceModel model = fit_appearance(f, sparse, {}, 1);
  CHECK(!model.is_absent(0));
  CHECK(model.is_absent(1));
  CHECK(model.is_absent(2));
  CHECK(neg_log_likelihood(model, 1, {0.5, 0.5, 0.5}) == kUnaryMax);
}

TEST_CASE("neg_log_likelihood: closed-form single gaussian and clamping") {
  ClassAppearanceModel model;
  model.num_classes = 1;
  GaussianComponent g;
  g.weight = 1.0;
  g.mean = {0.5, 0.5, 0.5};
  g.covariance = Eigen::Vector3d(0.25, 0.25, 0.25).asDiagonal();
  model.mixtures.resize(1);
  model.mixtures[0] = ClassMixture{{g}};

  // -log N(mu; mu, Sigma) = 0.5*(3 log 2pi + log det)
  const double expected = 0.5 * (3.0 * std::log(2.0 * kPi) + 3.0 * std::log(0.25));
  REQUIRE(expected > 0);  // in clamp range for this variance
  CHECK(neg_log_likelihood(model, 0, g.mean) == doctest::Approx(expected).epsilon(1e-12));

  // peaked density at the floor clamps to 0
  GaussianComponent tight = g;
  tight.covariance = Eigen::Vector3d(1e-4, 1e-4, 1e-4).asDiagonal();
  model.mixtures[0] = ClassMixture{{tight}};
  CHECK(neg_log_likelihood(model, 0, tight.mean) == 0.0);

  // far tail clamps to the cap
  CHECK(neg_log_likelihood(model, 0, {100.0, 100.0, 100.0}) == kUnaryMax);

  CHECK_THROWS(neg_log_likelihood(model, 1, g.mean));
  CHECK_THROWS(neg_log_likelihood(model, -1, g.mean));
}

TEST_CASE("neg_log_likelihood: matches naive component summation at random colors") {
  RandomStream rng(31);
  ClassAppearanceModel model;
  model.num_classes = 1;
  ClassMixture mix;
  double wsum = 0;
  for (int k = 0; k < 5; ++k) {
    GaussianComponent g;
    g.weight = rng.uniform(0.1, 1.0);
    wsum += g.weight;
    g.mean = {rng.uniform(), rng.uniform(), rng.uniform()};
    g.covariance =
        Eigen::Vector3d(rng.uniform(0.01, 0.3), rng.uniform(0.01, 0.3), rng.uniform(0.01, 0.3))
            .asDiagonal();
    mix.components.push_back(g);
  }
  for (auto& g : mix.components) g.weight /= wsum;
  model.mixtures.resize(1);
  model.mixtures[0] = mix;

  for (int i = 0; i < 50; ++i) {
    const Eigen::Vector3d color(rng.uniform(), rng.uniform(), rng.uniform());
    double density = 0;
    for (const GaussianComponent& g : mix.components) {
      const Eigen::Vector3d d = color - g.mean;
      const Eigen::Vector3d var = g.covariance.diagonal();
      const double expo = -0.5 * (d.array().square() / var.array()).sum();
      const double norm =
          std::pow(2.0 * kPi, -1.5) / std::sqrt(var[0] * var[1] * var[2]);
      density += g.weight * norm * std::exp(expo);
    }
    const double expected = std::min(std::max(-std::log(density), 0.0), kUnaryMax);
    CHECK(neg_log_likelihood(model, 0, color) == doctest::Approx(expected).epsilon(1e-10));
  }
}

TEST_CASE("appearance model: binary sidecar round trip") {
  const std::string dir = test::temp_dir("cues_sidecar");
  RandomStream rng(11);
  const Frame f = test::random_frame(24, 24, rng);
  LabelMap labels = split_labels(24, 24, 3);  // class 2 never appears
  const ClassAppearanceModel model = fit_appearance(f, labels, {}, 5);

  const std::string path = dir + "/model.vsam";
  save_appearance(model, path);
  const ClassAppearanceModel back = load_appearance(path);

  REQUIRE(back.num_classes == model.num_classes);
  for (int cls = 0; cls < model.num_classes; ++cls) {
    REQUIRE(back.is_absent(cls) == model.is_absent(cls));
    if (model.is_absent(cls)) continue;
    REQUIRE(back.mixtures[cls]->components.size() == model.mixtures[cls]->components.size());
    for (std::size_t k = 0; k < model.mixtures[cls]->components.size(); ++k) {
      CHECK(back.mixtures[cls]->components[k].weight == model.mixtures[cls]->components[k].weight);
      CHECK(back.mixtures[cls]->components[k].mean == model.mixtures[cls]->components[k].mean);
      CHECK(back.mixtures[cls]->components[k].covariance ==
            model.mixtures[cls]->components[k].covariance);
    }
  }

  std::ofstream(dir + "/junk.vsam") << "nope";
  CHECK_THROWS(load_appearance(dir + "/junk.vsam"));
}
