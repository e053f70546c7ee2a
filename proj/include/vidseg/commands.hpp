#pragma once

#include "vidseg/run_config.hpp"

#include <ostream>
#include <string>
#include <vector>

namespace vidseg {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

struct SynthArgs {
  RunConfig config;
  std::string out_dir;
  bool overwrite = false;
};

struct PropagateArgs {
  RunConfig config;
  std::string corpus_csv;
  std::string out_dir;
  bool overwrite = false;
  bool estimate_flow = false;   // block-matching fallback when .flo files are absent
  bool dump_marginals = false;
};

struct MakeSetsArgs {
  RunConfig config;
  std::string scheme;  // sequential | rated | random
  std::string index_csv;
  std::string ratings_csv;  // required for rated
  std::string out_dir;
  bool overwrite = false;
};

struct JitterArgs {
  RunConfig config;
  std::string gt_manifest;
  int copies = 3;
  std::string out_dir;
  bool overwrite = false;
};

struct TrainArgs {
  RunConfig config;
  std::vector<std::string> train_manifests;
  std::string val_manifest;  // optional
  std::string palette_csv;
  double trust = 1.0;
  std::string out_dir;
  bool overwrite = false;
};

struct EvalArgs {
  RunConfig config;
  std::string model_path;
  std::string manifest;
  std::string palette_csv;
  std::string out_dir;
  bool overwrite = false;
};

struct SweepArgs {
  RunConfig config;
  std::string gt_manifest;
  std::vector<std::string> set_manifests;
  std::string val_manifest;
  std::string palette_csv;
  std::vector<double> trusts;
  std::vector<std::uint64_t> seeds;  // model/shuffle seed per repeat
  bool accumulate = false;           // rows become GT+(sets 1..k) instead of GT+set_k
  bool parallel = false;             // run independent cells on worker threads
  std::string out_dir;
  bool overwrite = false;
};

int cmd_synth(const SynthArgs& args, std::ostream& log);
int cmd_propagate(const PropagateArgs& args, std::ostream& log);
int cmd_make_sets(const MakeSetsArgs& args, std::ostream& log);
int cmd_jitter(const JitterArgs& args, std::ostream& log);
int cmd_train(const TrainArgs& args, std::ostream& log);
int cmd_eval(const EvalArgs& args, std::ostream& log);
int cmd_sweep(const SweepArgs& args, std::ostream& log);

// Creates out_dir; refuses to reuse a non-empty directory unless overwrite.
void prepare_out_dir(const std::string& out_dir, bool overwrite);

}  // namespace vidseg
