#include "vidseg/commands.hpp"

#include "vidseg/datasets.hpp"
#include "vidseg/image_io.hpp"
#include "vidseg/manifest.hpp"
#include "vidseg/metrics.hpp"
#include "vidseg/propagation_io.hpp"
#include "vidseg/random.hpp"
#include "vidseg/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

namespace vidseg {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {  // for labels and directory names
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

void emit_resolved_config(const RunConfig& config, const std::string& out_dir) {
  write_text_file((fs::path(out_dir) / "config.resolved").string(),
                  resolved_config_text(config));
}

// Uniform wrapper: validation errors exit 1, runtime failures exit 2.
template <typename Fn>
int run_command(std::ostream& log, Fn&& fn) {
  try {
    fn();
    return kExitOk;
  } catch (const ValidationError& e) {
    log << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    log << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

TrainSet concat_manifests(const std::vector<std::string>& paths, const std::string& name) {
  TrainSet set;
  set.name = name;
  for (const std::string& path : paths) {
    const DatasetManifest manifest = load_manifest(path);
    for (const ManifestEntry& e : manifest.entries)
      set.samples.push_back({e.image_path, e.label_path, e.tier, e.seq_id, e.frame_offset,
                             e.rating});
  }
  return set;
}

struct TrainRunResult {
  double final_val_miou = 0;
  std::size_t parameters = 0;
};

// One full training run: build model + optimizer from config, train, write
// snapshot, log and (when a validation set exists) the IoU report.
TrainRunResult run_training(const RunConfig& config, const TrainSet& train_set,
                            const std::vector<TrainSample>& val_samples, double trust,
                            const Palette& palette, const std::string& out_dir) {
  const int C = palette.num_classes();
  std::vector<TrainSample> train_samples = load_train_samples(train_set, C, trust);
  if (train_samples.empty()) throw ValidationError("training set is empty");

  TinySegModel model = make_tiny_model(C, config.trainer.f1, config.trainer.f2,
                                       config.trainer.kernel, config.trainer.model_seed);
  OptimState optimizer = make_optimizer(model, config.trainer.learning_rate,
                                        config.trainer.momentum, config.trainer.weight_decay);
  TrainConfig tc;
  tc.epochs = config.trainer.epochs;
  tc.pgt_trust = trust;
  tc.shuffle_seed = config.trainer.shuffle_seed;
  tc.snapshot_every = config.trainer.snapshot_every;
  tc.snapshot_prefix = (fs::path(out_dir) / "snapshot").string();

  const TrainLog log = train(model, optimizer, train_samples, tc, val_samples);

  save_model(model, (fs::path(out_dir) / "model.bin").string());
  save_train_log(log, (fs::path(out_dir) / "train_log.csv").string());

  TrainRunResult result;
  result.parameters = model.parameter_count();
  if (!val_samples.empty()) {
    ConfusionMatrix conf(C);
    for (const TrainSample& s : val_samples)
      accumulate(conf, predict_labels(model, s.frame), s.labels);
    write_iou_report(conf, palette, (fs::path(out_dir) / "eval.csv").string());
    result.final_val_miou = mean_iou(conf);
  }
  return result;
}

}  // namespace

void prepare_out_dir(const std::string& out_dir, bool overwrite) {
  if (out_dir.empty()) throw ValidationError("--out directory is required");
  if (fs::exists(out_dir) && !fs::is_directory(out_dir))
    throw ValidationError("--out exists and is not a directory: " + out_dir);
  if (fs::exists(out_dir) && !fs::is_empty(out_dir) && !overwrite)
    throw ValidationError("output directory not empty (use --overwrite): " + out_dir);
  fs::create_directories(out_dir);
}

int cmd_synth(const SynthArgs& args, std::ostream& log) {
  return run_command(log, [&] {
    prepare_out_dir(args.out_dir, args.overwrite);
    SynthConfig synth = args.config.synth;
    synth.seed = args.config.seed;
    try {
      synth.validate();
    } catch (const std::invalid_argument& e) {
      throw ValidationError(e.what());
    }
    const SynthCorpus corpus = generate_synth_corpus(synth);
    write_synth_corpus(corpus, args.out_dir);
    emit_resolved_config(args.config, args.out_dir);
    log << "corpus: " << corpus.sequences.size() << " sequences, "
        << synth.num_frames << " frames each, " << synth.num_classes() << " classes\n";
  });
}

int cmd_propagate(const PropagateArgs& args, std::ostream& log) {
  return run_command(log, [&] {
    prepare_out_dir(args.out_dir, args.overwrite);
    const std::vector<CorpusSequencePaths> corpus = load_corpus_listing(args.corpus_csv);
    const Palette palette =
        load_palette((fs::path(args.corpus_csv).parent_path() / "palette.csv").string());
    const int C = palette.num_classes();

    CrfConfig crf = args.config.crf;
    crf.validate();
    const CueConfig& cue = args.config.cue;

    std::ofstream run_log((fs::path(args.out_dir) / "run_log.csv").string(), std::ios::trunc);
    run_log << "seq,offset,iters,free_energy,changed_pixels\n";

    PgtIndex index;
    std::vector<std::string> failures;
    for (const CorpusSequencePaths& seq : corpus) {
      try {
        if (static_cast<int>(seq.image_paths.size()) < crf.depth + 1)
          throw std::runtime_error("sequence has fewer than depth+1 frames");
        const Frame gt_frame = load_image(seq.image_paths[0]);
        const LabelMap gt_labels = load_labels(seq.label_paths[0], C);

        std::vector<Frame> frames;
        for (int t = 1; t <= crf.depth; ++t)
          frames.push_back(load_image(seq.image_paths[static_cast<std::size_t>(t)]));

        std::vector<FlowField> flows;
        for (int t = 0; t < crf.depth; ++t) {
          if (t < static_cast<int>(seq.flow_paths.size()) && !seq.flow_paths[t].empty()) {
            flows.push_back(read_flow(seq.flow_paths[static_cast<std::size_t>(t)]));
          } else if (args.estimate_flow) {
            const Frame& prev = t == 0 ? gt_frame : frames[static_cast<std::size_t>(t) - 1];
            flows.push_back(estimate_flow(prev, frames[static_cast<std::size_t>(t)],
                                          args.config.flow.block, args.config.flow.search));
          } else {
            throw std::runtime_error("sequence " + seq.seq_id + " lacks flow for transition " +
                                     std::to_string(t) + " and flow estimation is disabled");
          }
        }

        const PropagationResult result =
            propagate_sequence(gt_frame, gt_labels, frames, flows, crf, cue);
        PropagationWriter writer{args.out_dir, args.dump_marginals};
        const std::vector<std::string> label_paths =
            writer.write(seq.seq_id, gt_labels, result, run_log);
        for (int t = 0; t < crf.depth; ++t)
          index.items.push_back({seq.seq_id, t + 1, seq.image_paths[static_cast<std::size_t>(t) + 1],
                                 label_paths[static_cast<std::size_t>(t)], std::nullopt});
      } catch (const std::exception& e) {
        failures.push_back(seq.seq_id + ": " + e.what());
        log << "sequence " << seq.seq_id << " failed: " << e.what() << "\n";
      }
    }
    save_pgt_index(index, (fs::path(args.out_dir) / "index.csv").string());
    emit_resolved_config(args.config, args.out_dir);
    log << "propagated " << index.items.size() << " labelings from " << corpus.size()
        << " sequences\n";
    if (!failures.empty())
      throw std::runtime_error(std::to_string(failures.size()) + " sequence(s) failed");
  });
}

int cmd_make_sets(const MakeSetsArgs& args, std::ostream& log) {
  return run_command(log, [&] {
    if (args.scheme != "sequential" && args.scheme != "rated" && args.scheme != "random")
      throw ValidationError("scheme must be sequential, rated or random");
    if (args.scheme == "rated" && args.ratings_csv.empty())
      throw ValidationError("rated scheme requires --ratings");
    prepare_out_dir(args.out_dir, args.overwrite);

    const PgtIndex index = load_pgt_index(args.index_csv);
    std::array<TrainSet, 5> sets;
    if (args.scheme == "sequential") {
      sets = sequential_sets(index);
    } else if (args.scheme == "rated") {
      const RatingsTable ratings = load_ratings(args.ratings_csv);
      sets = rated_sets(index, &ratings);
    } else {
      sets = random_sets(index, args.config.seed);
    }

    for (const TrainSet& set : sets) {
      save_manifest(to_manifest(set), (fs::path(args.out_dir) / (set.name + ".csv")).string());
      log << set.name << ": " << set.samples.size() << " samples\n";
    }
    emit_resolved_config(args.config, args.out_dir);
  });
}

int cmd_jitter(const JitterArgs& args, std::ostream& log) {
  return run_command(log, [&] {
    if (args.copies < 1 || args.copies > 3)
      throw ValidationError("--copies must be in 1..3");
    prepare_out_dir(args.out_dir, args.overwrite);

    const DatasetManifest gt_manifest = load_manifest(args.gt_manifest);
    for (const ManifestEntry& e : gt_manifest.entries)
      if (e.tier != Tier::GT) throw ValidationError("jitter input must be a gt-only manifest");
    const TrainSet gt = train_set_from_manifest(gt_manifest, "GT");

    // Class count from the data itself: max label + 1 over the manifest.
    int num_classes = 1;
    {
      for (const ManifestEntry& e : gt_manifest.entries) {
        const LabelMap probe = load_labels(e.label_path, kVoidLabel - 1);
        for (std::uint8_t l : probe.labels)
          if (l != kVoidLabel) num_classes = std::max(num_classes, static_cast<int>(l) + 1);
      }
    }

    std::array<std::vector<std::string>, 3> jittered;
    for (std::size_t i = 0; i < gt.samples.size(); ++i) {
      const LabelMap labels = load_labels(gt.samples[i].label_path, num_classes);
      for (int copy = 0; copy < args.copies; ++copy) {
        const LabelMap out = jitter_labels(
            labels, args.config.jitter.dilation, args.config.jitter.shift_min,
            args.config.jitter.shift_max,
            mix_seed(args.config.seed, static_cast<std::uint64_t>(i) * 3 +
                                           static_cast<std::uint64_t>(copy)));
        const std::string path =
            (fs::path(args.out_dir) /
             (gt.samples[i].seq_id + "_jitter" + std::to_string(copy + 1) + ".png"))
                .string();
        write_labels(out, path);
        jittered[static_cast<std::size_t>(copy)].push_back(path);
      }
    }
    for (int copy = args.copies; copy < 3; ++copy)
      jittered[static_cast<std::size_t>(copy)] = jittered[0];  // unused below

    const int agt_count = args.copies;
    std::array<TrainSet, 3> agt = build_agt_sets(gt, jittered);
    for (int k = 0; k < agt_count; ++k) {
      save_manifest(to_manifest(agt[static_cast<std::size_t>(k)]),
                    (fs::path(args.out_dir) / (agt[static_cast<std::size_t>(k)].name + ".csv"))
                        .string());
      log << agt[static_cast<std::size_t>(k)].name << ": "
          << agt[static_cast<std::size_t>(k)].samples.size() << " samples\n";
    }
    emit_resolved_config(args.config, args.out_dir);
  });
}

int cmd_train(const TrainArgs& args, std::ostream& log) {
  return run_command(log, [&] {
    if (args.trust < 0 || args.trust > 1)
      throw ValidationError("--trust must be in [0,1]");
    if (args.train_manifests.empty()) throw ValidationError("--train manifest required");
    prepare_out_dir(args.out_dir, args.overwrite);

    const Palette palette = load_palette(args.palette_csv);
    const TrainSet train_set = concat_manifests(args.train_manifests, "train");
    std::vector<TrainSample> val_samples;
    if (!args.val_manifest.empty()) {
      const TrainSet val_set =
          train_set_from_manifest(load_manifest(args.val_manifest), "val");
      val_samples = load_train_samples(val_set, palette.num_classes(), 1.0);
    }

    const TrainRunResult result =
        run_training(args.config, train_set, val_samples, args.trust, palette, args.out_dir);

    // Record the resolved trust per sample alongside the run.
    DatasetManifest trained = to_manifest(train_set);
    for (ManifestEntry& e : trained.entries)
      e.trust = e.tier == Tier::GT ? 1.0 : args.trust;
    save_manifest(trained, (fs::path(args.out_dir) / "train_set.csv").string(), true);

    emit_resolved_config(args.config, args.out_dir);
    log << "trained " << train_set.samples.size() << " samples for "
        << args.config.trainer.epochs << " epochs (" << result.parameters << " parameters)";
    if (!val_samples.empty()) log << ", final val mIoU " << fmt(result.final_val_miou);
    log << "\n";
  });
}

int cmd_eval(const EvalArgs& args, std::ostream& log) {
  return run_command(log, [&] {
    prepare_out_dir(args.out_dir, args.overwrite);
    const Palette palette = load_palette(args.palette_csv);
    const TinySegModel model = load_model(args.model_path);
    if (model.num_classes != palette.num_classes())
      throw ValidationError("model was trained for " + std::to_string(model.num_classes) +
                            " classes but palette has " +
                            std::to_string(palette.num_classes()));

    const TrainSet set = train_set_from_manifest(load_manifest(args.manifest), "eval");
    if (set.samples.empty()) throw ValidationError("empty evaluation manifest");
    const std::vector<TrainSample> samples =
        load_train_samples(set, palette.num_classes(), 1.0);

    ConfusionMatrix conf(palette.num_classes());
    for (const TrainSample& s : samples)
      accumulate(conf, predict_labels(model, s.frame), s.labels);
    write_iou_report(conf, palette, (fs::path(args.out_dir) / "eval.csv").string());
    emit_resolved_config(args.config, args.out_dir);
    log << "mean_iou " << fmt(mean_iou(conf)) << "\n";
  });
}

int cmd_sweep(const SweepArgs& args, std::ostream& log) {
  return run_command(log, [&] {
    if (args.set_manifests.empty()) throw ValidationError("--sets required");
    if (args.trusts.empty()) throw ValidationError("--trusts required");
    for (double t : args.trusts)
      if (t < 0 || t > 1) throw ValidationError("trust factors must be in [0,1]");
    if (args.val_manifest.empty()) throw ValidationError("--val manifest required");
    prepare_out_dir(args.out_dir, args.overwrite);

    const Palette palette = load_palette(args.palette_csv);
    const std::vector<std::uint64_t> seeds =
        args.seeds.empty() ? std::vector<std::uint64_t>{args.config.seed} : args.seeds;

    const TrainSet gt = train_set_from_manifest(load_manifest(args.gt_manifest), "GT");
    std::vector<TrainSet> pgt_sets;
    for (const std::string& path : args.set_manifests)
      pgt_sets.push_back(
          train_set_from_manifest(load_manifest(path), fs::path(path).stem().string()));

    std::vector<TrainSet> rows;
    if (args.accumulate) {
      for (int k = 2; k <= static_cast<int>(pgt_sets.size()); ++k)
        rows.push_back(accumulate_sets(gt, pgt_sets, k));
    } else {
      for (const TrainSet& set : pgt_sets) {
        TrainSet row;
        row.name = "GT+" + set.name;
        row.samples = gt.samples;
        row.samples.insert(row.samples.end(), set.samples.begin(), set.samples.end());
        rows.push_back(std::move(row));
      }
    }

    const TrainSet val_set = train_set_from_manifest(load_manifest(args.val_manifest), "val");
    const std::vector<TrainSample> val_samples =
        load_train_samples(val_set, palette.num_classes(), 1.0);

    // one job per (set, trust, seed); failures recorded, sweep continues
    struct Job {
      std::size_t row, trust;
      std::uint64_t seed;
      double miou = 0;
      bool ok = false;
      std::string error;
    };
    std::vector<Job> jobs;
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t c = 0; c < args.trusts.size(); ++c)
        for (const std::uint64_t seed : seeds) jobs.push_back({r, c, seed, 0.0, false, {}});

    const auto run_job = [&](Job& job) {
      const std::string cell_dir =
          (fs::path(args.out_dir) / "cells" /
           (rows[job.row].name + "_tf" + fmt_short(args.trusts[job.trust]) + "_s" +
            std::to_string(job.seed)))
              .string();
      fs::create_directories(cell_dir);
      try {
        RunConfig cell_config = args.config;
        cell_config.trainer.model_seed = job.seed;
        cell_config.trainer.shuffle_seed = job.seed;
        const TrainRunResult result = run_training(cell_config, rows[job.row], val_samples,
                                                   args.trusts[job.trust], palette, cell_dir);
        job.miou = result.final_val_miou;
        job.ok = true;
      } catch (const std::exception& e) {
        job.error = rows[job.row].name + " tf=" + fmt_short(args.trusts[job.trust]) +
                    " seed=" + std::to_string(job.seed) + ": " + e.what();
      }
    };

    if (args.parallel) {
      std::atomic<std::size_t> next{0};
      const unsigned workers =
          std::min<unsigned>(std::max(1u, std::thread::hardware_concurrency()),
                             static_cast<unsigned>(jobs.size()));
      std::vector<std::thread> pool;
      for (unsigned w = 0; w < workers; ++w)
        pool.emplace_back([&] {
          for (std::size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1))
            run_job(jobs[i]);
        });
      for (std::thread& t : pool) t.join();
    } else {
      for (Job& job : jobs) run_job(job);
    }

    // reduce to per-cell means over seeds
    FieldMatrix table(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(args.trusts.size()));
    table.setConstant(std::numeric_limits<Real>::quiet_NaN());
    FieldMatrix counts = FieldMatrix::Zero(table.rows(), table.cols());
    std::vector<std::string> failures;
    for (const Job& job : jobs) {
      if (!job.ok) {
        failures.push_back(job.error);
        log << "cell failed: " << job.error << "\n";
        continue;
      }
      const Eigen::Index r = static_cast<Eigen::Index>(job.row);
      const Eigen::Index c = static_cast<Eigen::Index>(job.trust);
      if (counts(r, c) == 0) table(r, c) = 0;
      table(r, c) += job.miou;
      counts(r, c) += 1;
    }
    for (Eigen::Index r = 0; r < table.rows(); ++r)
      for (Eigen::Index c = 0; c < table.cols(); ++c)
        if (counts(r, c) > 0) table(r, c) /= counts(r, c);

    // aggregate CSV: rows = sets, columns = trust factors, plus means
    std::ofstream out((fs::path(args.out_dir) / "sweep.csv").string(), std::ios::trunc);
    out << "set";
    for (double t : args.trusts) out << ',' << fmt_short(t);
    out << ",avg\n";
    for (std::size_t r = 0; r < rows.size(); ++r) {
      out << rows[r].name;
      double sum = 0;
      int n = 0;
      for (std::size_t c = 0; c < args.trusts.size(); ++c) {
        const Real v = table(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
        out << ',';
        if (v == v) {
          out << fmt(v);
          sum += v;
          ++n;
        }
      }
      out << ',' << (n > 0 ? fmt(sum / n) : "") << "\n";
    }
    out << "avg";
    double grand_sum = 0;
    int grand_n = 0;
    for (std::size_t c = 0; c < args.trusts.size(); ++c) {
      double sum = 0;
      int n = 0;
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const Real v = table(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
        if (v == v) {
          sum += v;
          ++n;
        }
      }
      out << ',' << (n > 0 ? fmt(sum / n) : "");
      grand_sum += sum;
      grand_n += n;
    }
    out << ',' << (grand_n > 0 ? fmt(grand_sum / grand_n) : "") << "\n";
    if (!out) throw std::runtime_error("write failed: sweep.csv");
    out.close();

    emit_resolved_config(args.config, args.out_dir);
    log << "sweep: " << rows.size() * args.trusts.size() << " cells, " << failures.size()
        << " failed\n";
  });
}

}  // namespace vidseg
