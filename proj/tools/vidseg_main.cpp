#include "vidseg/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

// Shared --config/--seed handling; CLI --seed overrides the config file.
vidseg::RunConfig resolve_config(const std::string& config_path, bool seed_given,
                                 std::uint64_t seed) {
  vidseg::RunConfig config;
  if (!config_path.empty()) config = vidseg::load_run_config(config_path);
  if (seed_given) config.seed = seed;
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"video label propagation and trust-weighted training toolkit"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may appear after the subcommand name

  std::string config_path;
  std::uint64_t seed = 1;
  bool seed_given = false;
  std::string out_dir;
  bool overwrite = false;
  app.add_option("--config", config_path, "key = value configuration file")->expected(1);
  app.add_option("--seed", seed, "global seed override")->each([&](const std::string&) {
    seed_given = true;
  });
  app.add_option("--out", out_dir, "output directory");
  app.add_flag("--overwrite", overwrite, "allow writing into a non-empty output directory");

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus with dense GT and exact flows");

  auto* propagate = app.add_subcommand("propagate", "propagate GT labelings through each sequence");
  std::string corpus_csv;
  bool est_flow = false, dump_marginals = false;
  propagate->add_option("--corpus", corpus_csv, "corpus listing CSV")->required();
  propagate->add_flag("--estimate-flow", est_flow, "block-matching fallback when .flo files are missing");
  propagate->add_flag("--dump-marginals", dump_marginals, "write per-frame marginal dumps");

  auto* make_sets = app.add_subcommand("make-sets", "split a PGT index into the five canonical sets");
  std::string scheme, index_csv, ratings_csv;
  make_sets->add_option("--scheme", scheme, "sequential | rated | random")->required();
  make_sets->add_option("--index", index_csv, "PGT index CSV")->required();
  make_sets->add_option("--ratings", ratings_csv, "ratings CSV (rated scheme)");

  auto* jitter = app.add_subcommand("jitter", "create ambiguous labelings and the AGT sets");
  std::string gt_manifest_j;
  int copies = 3;
  jitter->add_option("--manifest", gt_manifest_j, "GT manifest")->required();
  jitter->add_option("--copies", copies, "jitter copies per image (1..3)");

  auto* train = app.add_subcommand("train", "train the segmentation model on manifests");
  std::vector<std::string> train_manifests;
  std::string val_manifest, palette_csv, model_path, eval_manifest;
  double trust = 1.0;
  train->add_option("--train", train_manifests, "training manifest(s), GT first")->required();
  train->add_option("--val", val_manifest, "validation manifest");
  train->add_option("--palette", palette_csv, "palette CSV")->required();
  train->add_option("--trust", trust, "trust factor applied to PGT samples");

  auto* eval = app.add_subcommand("eval", "evaluate a model snapshot on a manifest");
  eval->add_option("--model", model_path, "model snapshot")->required();
  eval->add_option("--manifest", eval_manifest, "evaluation manifest")->required();
  eval->add_option("--palette", palette_csv, "palette CSV")->required();

  auto* sweep = app.add_subcommand("sweep", "train a grid of sets x trust factors and aggregate");
  std::string gt_manifest_s;
  std::vector<std::string> set_manifests;
  std::vector<double> trusts;
  std::vector<std::uint64_t> seeds;
  bool accumulate = false;
  bool parallel = false;
  sweep->add_option("--gt", gt_manifest_s, "GT manifest")->required();
  sweep->add_option("--sets", set_manifests, "PGT set manifests")->required()->delimiter(',');
  sweep->add_option("--val", val_manifest, "validation manifest")->required();
  sweep->add_option("--palette", palette_csv, "palette CSV")->required();
  sweep->add_option("--trusts", trusts, "trust factors")->required()->delimiter(',');
  sweep->add_option("--seeds", seeds, "model/shuffle seeds")->delimiter(',');
  sweep->add_flag("--accumulate", accumulate, "accumulate sets: rows are GT+(1..k)");
  sweep->add_flag("--parallel", parallel, "train independent cells on worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints the message or requested help
    return code == 0 ? 0 : vidseg::kExitValidation;
  }

  try {
    const vidseg::RunConfig config = resolve_config(config_path, seed_given, seed);

    if (synth->parsed())
      return vidseg::cmd_synth({config, out_dir, overwrite}, std::cout);
    if (propagate->parsed())
      return vidseg::cmd_propagate({config, corpus_csv, out_dir, overwrite, est_flow,
                                    dump_marginals},
                                   std::cout);
    if (make_sets->parsed())
      return vidseg::cmd_make_sets({config, scheme, index_csv, ratings_csv, out_dir, overwrite},
                                   std::cout);
    if (jitter->parsed())
      return vidseg::cmd_jitter({config, gt_manifest_j, copies, out_dir, overwrite}, std::cout);
    if (train->parsed())
      return vidseg::cmd_train({config, train_manifests, val_manifest, palette_csv, trust,
                                out_dir, overwrite},
                               std::cout);
    if (eval->parsed())
      return vidseg::cmd_eval({config, model_path, eval_manifest, palette_csv, out_dir,
                               overwrite},
                              std::cout);
    if (sweep->parsed())
      return vidseg::cmd_sweep({config, gt_manifest_s, set_manifests, val_manifest, palette_csv,
                                trusts, seeds, accumulate, parallel, out_dir, overwrite},
                               std::cout);
  } catch (const vidseg::ValidationError& e) {
    std::cout << "error: " << e.what() << "\n";
    return vidseg::kExitValidation;
  } catch (const std::exception& e) {
    std::cout << "error: " << e.what() << "\n";
    return vidseg::kExitRuntime;
  }
  return vidseg::kExitValidation;
}
