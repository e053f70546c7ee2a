#include "vidseg/crf.hpp"

#include <cmath>
#include <limits>

namespace vidseg {

namespace {

struct NeighborOffset {
  int dx, dy;
  Real inv_dist;
};

// Square neighborhood of the given radius, center excluded.
std::vector<NeighborOffset> neighborhood_offsets(int radius) {
  std::vector<NeighborOffset> offsets;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx) {
      if (dx == 0 && dy == 0) continue;
      offsets.push_back({dx, dy, Real(1) / std::sqrt(Real(dx * dx + dy * dy))});
    }
  return offsets;
}

// Offsets with (dy, dx) lexicographically positive; visiting these from every
// pixel enumerates each unordered neighbor pair exactly once.
std::vector<NeighborOffset> forward_offsets(int radius) {
  std::vector<NeighborOffset> offsets;
  for (const NeighborOffset& o : neighborhood_offsets(radius))
    if (o.dy > 0 || (o.dy == 0 && o.dx > 0)) offsets.push_back(o);
  return offsets;
}

Real contrast_weight(const Frame& frame, int mx, int my, int nx, int ny, Real beta) {
  const Eigen::Vector3d d = frame.color(mx, my) - frame.color(nx, ny);
  return std::exp(-beta * d.squaredNorm());
}

void require_same_dims(int w1, int h1, int w2, int h2, const char* what) {
  if (w1 != w2 || h1 != h2) throw std::invalid_argument(std::string(what) + ": dimension mismatch");
}

// Per-pixel, per-forward-offset pairwise weights dis^-1 * exp(-beta*||dh||^2),
// zero where the neighbor falls outside the image.
FieldMatrix pairwise_weights(const Frame& frame, const std::vector<NeighborOffset>& offsets,
                             Real beta) {
  const Eigen::Index n = static_cast<Eigen::Index>(frame.pixel_count());
  FieldMatrix w = FieldMatrix::Zero(n, static_cast<Eigen::Index>(offsets.size()));
  for (int y = 0; y < frame.height; ++y)
    for (int x = 0; x < frame.width; ++x) {
      const Eigen::Index p = static_cast<Eigen::Index>(y) * frame.width + x;
      for (std::size_t k = 0; k < offsets.size(); ++k) {
        const int nx = x + offsets[k].dx, ny = y + offsets[k].dy;
        if (!frame.contains(nx, ny)) continue;
        w(p, static_cast<Eigen::Index>(k)) =
            offsets[k].inv_dist * contrast_weight(frame, x, y, nx, ny, beta);
      }
    }
  return w;
}

}  // namespace

void CrfConfig::validate() const {
  if (lambda1 < 0 || lambda2 < 0)
    throw std::invalid_argument("CrfConfig: lambda1 and lambda2 must be >= 0");
  if (mf_iterations < 1) throw std::invalid_argument("CrfConfig: mf_iterations must be >= 1");
  if (damping < 0 || damping >= 1)
    throw std::invalid_argument("CrfConfig: damping must be in [0,1)");
  if (depth < 1) throw std::invalid_argument("CrfConfig: depth must be >= 1");
  if (neighborhood_radius < 1)
    throw std::invalid_argument("CrfConfig: neighborhood_radius must be >= 1");
  if (beta && *beta < 0) throw std::invalid_argument("CrfConfig: beta must be >= 0");
}

UnaryField motion_unary(const LabelMap& prev_labels, const Frame& prev_frame,
                        const Frame& next_frame, const FlowField& flow,
                        const CueConfig& cue_cfg) {
  require_same_dims(prev_labels.width, prev_labels.height, prev_frame.width, prev_frame.height,
                    "motion_unary");
  require_same_dims(prev_frame.width, prev_frame.height, next_frame.width, next_frame.height,
                    "motion_unary");
  require_same_dims(flow.width, flow.height, prev_frame.width, prev_frame.height,
                    "motion_unary");
  prev_labels.validate();

  const int C = prev_labels.num_classes;
  UnaryField unary(next_frame.width, next_frame.height, C);
  for (int y = 0; y < prev_frame.height; ++y)
    for (int x = 0; x < prev_frame.width; ++x) {
      const std::uint8_t source_label = prev_labels.at(x, y);
      if (source_label == kVoidLabel) continue;  // void sources cast no votes
      const int tx = static_cast<int>(std::lround(x + flow.u_at(x, y)));
      const int ty = static_cast<int>(std::lround(y + flow.v_at(x, y)));
      if (!next_frame.contains(tx, ty)) continue;

      const PatchHistogram source_hist =
          patch_histogram(prev_frame, x, y, cue_cfg.patch_radius, cue_cfg.patch_bins);
      const PatchHistogram target_hist =
          patch_histogram(next_frame, tx, ty, cue_cfg.patch_radius, cue_cfg.patch_bins);
      const Real w = motion_weight(source_hist, target_hist, cue_cfg.alpha);

      // w for every label except the carried one
      const Eigen::Index p = static_cast<Eigen::Index>(ty) * next_frame.width + tx;
      unary.costs.row(p).array() += w;
      unary.costs(p, source_label) -= w;
    }
  return unary;
}

UnaryField appearance_unary(const ClassAppearanceModel& model, const Frame& next_frame) {
  if (model.num_classes < 1)
    throw std::invalid_argument("appearance_unary: model has no classes");
  UnaryField unary(next_frame.width, next_frame.height, model.num_classes);

  // Per-class constants so the inner loop is arithmetic only.
  struct Comp {
    double log_w_norm;
    Eigen::Vector3d mean;
    Eigen::Vector3d inv_var;
  };
  constexpr double kLog2Pi = 1.8378770664093454835606594728112;
  std::vector<std::vector<Comp>> comps(model.num_classes);
  for (int cls = 0; cls < model.num_classes; ++cls) {
    if (model.is_absent(cls)) continue;
    for (const GaussianComponent& g : model.mixtures[cls]->components) {
      const Eigen::Vector3d var = g.covariance.diagonal();
      const double log_norm =
          -0.5 * (3.0 * kLog2Pi + std::log(var[0]) + std::log(var[1]) + std::log(var[2]));
      comps[cls].push_back({std::log(g.weight) + log_norm, g.mean, var.cwiseInverse()});
    }
  }

  for (int y = 0; y < next_frame.height; ++y)
    for (int x = 0; x < next_frame.width; ++x) {
      const Eigen::Index p = static_cast<Eigen::Index>(y) * next_frame.width + x;
      const Eigen::Vector3d color = next_frame.color(x, y);
      for (int cls = 0; cls < model.num_classes; ++cls) {
        if (comps[cls].empty()) {
          unary.costs(p, cls) = kUnaryMax;
          continue;
        }
        double best = -std::numeric_limits<double>::infinity();
        double sum = 0;
        // log-sum-exp over components, two passes avoided via max tracking
        Eigen::VectorXd terms(static_cast<Eigen::Index>(comps[cls].size()));
        for (std::size_t k = 0; k < comps[cls].size(); ++k) {
          const Comp& c = comps[cls][k];
          const Eigen::Vector3d d = color - c.mean;
          terms[static_cast<Eigen::Index>(k)] =
              c.log_w_norm - 0.5 * (d.array().square() * c.inv_var.array()).sum();
          best = std::max(best, terms[static_cast<Eigen::Index>(k)]);
        }
        for (Eigen::Index k = 0; k < terms.size(); ++k) sum += std::exp(terms[k] - best);
        const double nll = -(best + std::log(sum));
        unary.costs(p, cls) =
            std::isfinite(nll) ? std::min(std::max(nll, 0.0), kUnaryMax) : kUnaryMax;
      }
    }
  return unary;
}

Real resolve_beta(const CrfConfig& cfg, const Frame& frame) {
  if (cfg.beta) return *cfg.beta;
  const std::vector<NeighborOffset> offsets = forward_offsets(cfg.neighborhood_radius);
  double sum = 0;
  std::size_t pairs = 0;
  for (int y = 0; y < frame.height; ++y)
    for (int x = 0; x < frame.width; ++x)
      for (const NeighborOffset& o : offsets) {
        const int nx = x + o.dx, ny = y + o.dy;
        if (!frame.contains(nx, ny)) continue;
        sum += (frame.color(x, y) - frame.color(nx, ny)).squaredNorm();
        ++pairs;
      }
  if (pairs == 0 || sum <= 0) return 0;  // uniform image: no contrast to normalize
  return 1.0 / (2.0 * sum / static_cast<double>(pairs));
}

Real pairwise_cost(const Frame& frame, int mx, int my, int nx, int ny, int label_m, int label_n,
                   Real beta) {
  if (mx == nx && my == ny) throw std::invalid_argument("pairwise_cost: identical pixels");
  if (label_m == label_n) return 0;
  const Real dist = std::sqrt(Real((mx - nx) * (mx - nx) + (my - ny) * (my - ny)));
  return contrast_weight(frame, mx, my, nx, ny, beta) / dist;
}

Real total_energy(const LabelMap& labels, const UnaryField& motion,
                  const UnaryField& appearance, const Frame& frame, const CrfConfig& cfg) {
  cfg.validate();
  require_same_dims(labels.width, labels.height, motion.width, motion.height, "total_energy");
  require_same_dims(labels.width, labels.height, appearance.width, appearance.height,
                    "total_energy");
  require_same_dims(labels.width, labels.height, frame.width, frame.height, "total_energy");
  if (motion.num_classes() != appearance.num_classes())
    throw std::invalid_argument("total_energy: class count mismatch");

  const Real beta = resolve_beta(cfg, frame);
  const std::vector<NeighborOffset> offsets = forward_offsets(cfg.neighborhood_radius);

  Real energy = 0;
  for (int y = 0; y < labels.height; ++y)
    for (int x = 0; x < labels.width; ++x) {
      const std::uint8_t l = labels.at(x, y);
      if (l == kVoidLabel)
        throw std::invalid_argument("total_energy: labeling contains void pixels");
      const Eigen::Index p = static_cast<Eigen::Index>(y) * labels.width + x;
      energy += motion.costs(p, l) + cfg.lambda1 * appearance.costs(p, l);
      for (const NeighborOffset& o : offsets) {
        const int nx = x + o.dx, ny = y + o.dy;
        if (!frame.contains(nx, ny)) continue;
        const std::uint8_t ln = labels.at(nx, ny);
        if (ln == l) continue;
        energy += cfg.lambda2 * o.inv_dist * contrast_weight(frame, x, y, nx, ny, beta);
      }
    }
  return energy;
}

namespace {

LabelMap decode_argmax(const FieldMatrix& q, int width, int height, int num_classes) {
  LabelMap labels(width, height, num_classes);
  for (Eigen::Index p = 0; p < q.rows(); ++p) {
    int best = 0;
    for (int l = 1; l < num_classes; ++l)
      if (q(p, l) > q(p, best)) best = l;  // ties keep the lowest index
    labels.labels[static_cast<std::size_t>(p)] = static_cast<std::uint8_t>(best);
  }
  return labels;
}

// Mean-field free energy: E_Q[energy] - H(Q), with the pairwise expectation
// w * (1 - Q_m . Q_n) per neighbor pair.
Real free_energy(const FieldMatrix& q, const FieldMatrix& unary, const FieldMatrix& fw_weights,
                 const std::vector<NeighborOffset>& fw_offsets, int width, int height,
                 Real lambda2) {
  Real energy = (q.array() * unary.array()).sum();
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const Eigen::Index p = static_cast<Eigen::Index>(y) * width + x;
      for (std::size_t k = 0; k < fw_offsets.size(); ++k) {
        const Real w = fw_weights(p, static_cast<Eigen::Index>(k));
        if (w == 0) continue;
        const Eigen::Index pn =
            static_cast<Eigen::Index>(y + fw_offsets[k].dy) * width + (x + fw_offsets[k].dx);
        energy += lambda2 * w * (1.0 - q.row(p).dot(q.row(pn)));
      }
    }
  // entropy term, 0*log(0) treated as 0
  for (Eigen::Index p = 0; p < q.rows(); ++p)
    for (Eigen::Index l = 0; l < q.cols(); ++l)
      if (q(p, l) > 0) energy += q(p, l) * std::log(q(p, l));
  return energy;
}

// Energy of a hard labeling from the precomputed combined unaries and
// forward pairwise weights. Agrees with total_energy on the same config.
Real hard_energy(const LabelMap& labels, const FieldMatrix& unary,
                 const FieldMatrix& fw_weights, const std::vector<NeighborOffset>& fw_offsets,
                 int width, int height, Real lambda2) {
  Real energy = 0;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const Eigen::Index p = static_cast<Eigen::Index>(y) * width + x;
      const std::uint8_t l = labels.labels[static_cast<std::size_t>(p)];
      energy += unary(p, l);
      for (std::size_t k = 0; k < fw_offsets.size(); ++k) {
        const Real w = fw_weights(p, static_cast<Eigen::Index>(k));
        if (w == 0) continue;
        const std::uint8_t ln =
            labels.labels[static_cast<std::size_t>(y + fw_offsets[k].dy) * width +
                          (x + fw_offsets[k].dx)];
        if (ln != l) energy += lambda2 * w;
      }
    }
  return energy;
}

// Greedy single-pixel improvement of a decoded labeling under the true
// energy, raster order, until no flip helps. The marginal argmax of a
// converged mean field is often one or two flips away from the energy
// optimum it brackets; this closes that gap deterministically.
void icm_polish(LabelMap& labels, const FieldMatrix& unary, const FieldMatrix& all_weights,
                const std::vector<NeighborOffset>& all_offsets, int width, int height,
                Real lambda2) {
  const int C = static_cast<int>(unary.cols());
  bool improved = true;
  // every pass strictly lowers the energy; the cap only bounds the worst case
  for (int pass = 0; improved && pass < 100; ++pass) {
    improved = false;
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const Eigen::Index p = static_cast<Eigen::Index>(y) * width + x;
        // local energy of label l at pixel p given the rest
        Eigen::Array<Real, Eigen::Dynamic, 1> local = unary.row(p).transpose();
        for (std::size_t k = 0; k < all_offsets.size(); ++k) {
          const Real w = all_weights(p, static_cast<Eigen::Index>(k));
          if (w == 0) continue;
          const int nx = x + all_offsets[k].dx, ny = y + all_offsets[k].dy;
          const std::uint8_t ln =
              labels.labels[static_cast<std::size_t>(ny) * width + nx];
          local += lambda2 * w;  // every differing label pays w
          local[ln] -= lambda2 * w;
        }
        const std::uint8_t cur = labels.labels[static_cast<std::size_t>(p)];
        int best = cur;
        for (int l = 0; l < C; ++l)
          if (local[l] < local[best] - 1e-12) best = l;
        if (best != cur) {
          labels.labels[static_cast<std::size_t>(p)] = static_cast<std::uint8_t>(best);
          improved = true;
        }
      }
  }
}

}  // namespace

InferenceResult mean_field_infer(const UnaryField& motion, const UnaryField& appearance,
                                 const Frame& frame, const CrfConfig& cfg,
                                 const MarginalField* init) {
  cfg.validate();
  require_same_dims(motion.width, motion.height, appearance.width, appearance.height,
                    "mean_field_infer");
  require_same_dims(motion.width, motion.height, frame.width, frame.height, "mean_field_infer");
  if (motion.num_classes() != appearance.num_classes())
    throw std::invalid_argument("mean_field_infer: class count mismatch");

  const int width = frame.width, height = frame.height;
  const int C = motion.num_classes();
  const Eigen::Index n = static_cast<Eigen::Index>(frame.pixel_count());

  const FieldMatrix unary = motion.costs + cfg.lambda1 * appearance.costs;
  if (!unary.allFinite())
    throw std::invalid_argument("mean_field_infer: non-finite unaries");

  const Real beta = resolve_beta(cfg, frame);
  const std::vector<NeighborOffset> all_offsets = neighborhood_offsets(cfg.neighborhood_radius);
  const std::vector<NeighborOffset> fw_offsets = forward_offsets(cfg.neighborhood_radius);
  const FieldMatrix all_weights = pairwise_weights(frame, all_offsets, beta);
  const FieldMatrix fw_weights = pairwise_weights(frame, fw_offsets, beta);

  FieldMatrix q(n, C);
  if (init) {
    if (init->width != width || init->height != height || init->num_classes() != C)
      throw std::invalid_argument("mean_field_infer: init shape mismatch");
    q = init->q;
  } else {
    // softmax of negated unaries, row-wise
    for (Eigen::Index p = 0; p < n; ++p) {
      const Eigen::Index best = [&] {
        Eigen::Index i = 0;
        unary.row(p).minCoeff(&i);
        return i;
      }();
      Eigen::Array<Real, 1, Eigen::Dynamic> row =
          (-(unary.row(p).array() - unary(p, best))).exp();
      q.row(p) = row / row.sum();
    }
  }

  const LabelMap init_labels = decode_argmax(q, width, height, C);

  std::vector<Real> trace;
  trace.push_back(free_energy(q, unary, fw_weights, fw_offsets, width, height, cfg.lambda2));

  Eigen::Array<Real, 1, Eigen::Dynamic> message(C), new_q(C);
  int sweeps = 0;
  for (int iter = 0; iter < cfg.mf_iterations; ++iter) {
    Real max_change = 0;
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const Eigen::Index p = static_cast<Eigen::Index>(y) * width + x;
        message.setZero();
        Real weight_sum = 0;
        for (std::size_t k = 0; k < all_offsets.size(); ++k) {
          const Real w = all_weights(p, static_cast<Eigen::Index>(k));
          if (w == 0) continue;
          const Eigen::Index pn =
              static_cast<Eigen::Index>(y + all_offsets[k].dy) * width +
              (x + all_offsets[k].dx);
          message += w * q.row(pn).array();
          weight_sum += w;
        }
        // Potts message: sum_m w_nm (1 - Q_m(l))
        new_q = -(unary.row(p).array() + cfg.lambda2 * (weight_sum - message));
        new_q -= new_q.maxCoeff();
        new_q = new_q.exp();
        new_q /= new_q.sum();
        if (cfg.damping > 0) new_q = cfg.damping * q.row(p).array() + (1 - cfg.damping) * new_q;
        max_change = std::max(max_change, (new_q - q.row(p).array()).abs().sum());
        q.row(p) = new_q;
      }
    ++sweeps;
    trace.push_back(free_energy(q, unary, fw_weights, fw_offsets, width, height, cfg.lambda2));
    if (max_change < cfg.mf_tolerance) break;
  }

  InferenceResult result;
  result.labels = decode_argmax(q, width, height, C);
  icm_polish(result.labels, unary, all_weights, all_offsets, width, height, cfg.lambda2);
  result.marginals = MarginalField{width, height, std::move(q)};
  result.free_energy_trace = std::move(trace);
  result.iterations = sweeps;

  const auto energy_of = [&](const LabelMap& labels) {
    return hard_energy(labels, unary, fw_weights, fw_offsets, width, height, cfg.lambda2);
  };

  // Candidate decodes: strong couplings can freeze the marginals in the
  // wrong basin, where the energy optimum is near-constant. Polished
  // constant labelings cover exactly those cases; the initialization's
  // argmax keeps the never-worse-than-start guarantee. Strict comparison
  // keeps the marginal argmax on ties.
  Real best_energy = energy_of(result.labels);
  for (int l = 0; l < C + 1; ++l) {
    LabelMap candidate =
        l < C ? LabelMap(width, height, C, static_cast<std::uint8_t>(l)) : init_labels;
    icm_polish(candidate, unary, all_weights, all_offsets, width, height, cfg.lambda2);
    const Real e = energy_of(candidate);
    if (e < best_energy) {
      best_energy = e;
      result.labels = std::move(candidate);
    }
  }
  return result;
}

PropagationResult propagate_sequence(const Frame& gt_frame, const LabelMap& gt_labels,
                                     const std::vector<Frame>& frames,
                                     const std::vector<FlowField>& flows, const CrfConfig& cfg,
                                     const CueConfig& cue_cfg) {
  cfg.validate();
  if (static_cast<int>(frames.size()) < cfg.depth ||
      static_cast<int>(flows.size()) < cfg.depth)
    throw std::invalid_argument("propagate_sequence: need at least depth frames and flows");

  PropagationResult result;
  result.appearance =
      fit_appearance(gt_frame, gt_labels, cue_cfg.appearance, cue_cfg.appearance_seed);

  const Frame* prev_frame = &gt_frame;
  const LabelMap* prev_labels = &gt_labels;
  for (int t = 0; t < cfg.depth; ++t) {
    const Frame& next_frame = frames[static_cast<std::size_t>(t)];
    try {
      UnaryField motion =
          motion_unary(*prev_labels, *prev_frame, next_frame, flows[static_cast<std::size_t>(t)],
                       cue_cfg);
      UnaryField appearance = appearance_unary(result.appearance, next_frame);
      InferenceResult inferred = mean_field_infer(motion, appearance, next_frame, cfg);

      PropagatedFrame out;
      out.labels = std::move(inferred.labels);
      out.marginals = std::move(inferred.marginals);
      out.free_energy = inferred.free_energy_trace.back();
      out.iterations = inferred.iterations;
      result.frames.push_back(std::move(out));
    } catch (const std::exception& e) {
      throw std::runtime_error("propagation failed at frame offset " + std::to_string(t + 1) +
                               ": " + e.what());
    }
    prev_frame = &next_frame;
    prev_labels = &result.frames.back().labels;
  }
  return result;
}

}  // namespace vidseg
