#pragma once

#include "vidseg/crf.hpp"
#include "vidseg/synth.hpp"

#include <cstdint>
#include <string>

namespace vidseg {

// Argument and config mistakes caught before any work starts; the CLI maps
// these to exit code 1 (runtime failures are 2).
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainerParams {
  int epochs = 10;
  double learning_rate = 1e-2;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int f1 = 8;
  int f2 = 8;
  int kernel = 3;
  std::uint64_t model_seed = 1;
  std::uint64_t shuffle_seed = 1;
  int snapshot_every = 0;
};

struct FlowParams {
  int block = 8;
  int search = 7;
};

struct JitterParams {
  int dilation = 1;
  int shift_min = 2;
  int shift_max = 4;
};

// Every tunable of every module, with the project defaults. Parsed from a
// line-oriented `key = value` document; unknown keys are rejected.
struct RunConfig {
  CrfConfig crf;
  CueConfig cue;
  SynthConfig synth;
  TrainerParams trainer;
  FlowParams flow;
  JitterParams jitter;
  std::uint64_t seed = 1;

  // Applies one `key = value` assignment; throws ValidationError on unknown
  // keys or unparsable values.
  void set(const std::string& key, const std::string& value);
};

RunConfig load_run_config(const std::string& path);
void apply_config_text(RunConfig& config, const std::string& text);

// Full key = value dump of the resolved configuration, suitable for reuse.
std::string resolved_config_text(const RunConfig& config);

}  // namespace vidseg
