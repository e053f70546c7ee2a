#include "vidseg/run_config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace vidseg {

namespace {

std::string trim(const std::string& s) {
  const std::size_t begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const std::size_t end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "': bad number '" + value + "'");
  }
}

int parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "': bad integer '" + value + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "': bad integer '" + value + "'");
  }
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "crf.lambda1") crf.lambda1 = parse_double(key, value);
  else if (key == "crf.lambda2") crf.lambda2 = parse_double(key, value);
  else if (key == "crf.beta") {
    if (value == "auto") crf.beta.reset();
    else crf.beta = parse_double(key, value);
  }
  else if (key == "crf.radius") crf.neighborhood_radius = parse_int(key, value);
  else if (key == "crf.iterations") crf.mf_iterations = parse_int(key, value);
  else if (key == "crf.tolerance") crf.mf_tolerance = parse_double(key, value);
  else if (key == "crf.damping") crf.damping = parse_double(key, value);
  else if (key == "crf.depth") crf.depth = parse_int(key, value);
  else if (key == "cue.patch_radius") cue.patch_radius = parse_int(key, value);
  else if (key == "cue.bins") cue.patch_bins = parse_int(key, value);
  else if (key == "cue.alpha") cue.alpha = parse_double(key, value);
  else if (key == "cue.components") cue.appearance.components_per_class = parse_int(key, value);
  else if (key == "cue.min_pixels") cue.appearance.min_class_pixels = parse_int(key, value);
  else if (key == "cue.variance_floor") cue.appearance.variance_floor = parse_double(key, value);
  else if (key == "cue.seed") cue.appearance_seed = parse_u64(key, value);
  else if (key == "synth.width") synth.width = parse_int(key, value);
  else if (key == "synth.height") synth.height = parse_int(key, value);
  else if (key == "synth.objects") synth.num_objects = parse_int(key, value);
  else if (key == "synth.velocity") synth.max_velocity = parse_int(key, value);
  else if (key == "synth.noise") synth.noise_sigma = parse_double(key, value);
  else if (key == "synth.frames") synth.num_frames = parse_int(key, value);
  else if (key == "synth.sequences") synth.num_sequences = parse_int(key, value);
  else if (key == "synth.min_object") synth.min_object_size = parse_int(key, value);
  else if (key == "synth.max_object") synth.max_object_size = parse_int(key, value);
  else if (key == "train.epochs") trainer.epochs = parse_int(key, value);
  else if (key == "train.lr") trainer.learning_rate = parse_double(key, value);
  else if (key == "train.momentum") trainer.momentum = parse_double(key, value);
  else if (key == "train.decay") trainer.weight_decay = parse_double(key, value);
  else if (key == "train.f1") trainer.f1 = parse_int(key, value);
  else if (key == "train.f2") trainer.f2 = parse_int(key, value);
  else if (key == "train.kernel") trainer.kernel = parse_int(key, value);
  else if (key == "train.model_seed") trainer.model_seed = parse_u64(key, value);
  else if (key == "train.shuffle_seed") trainer.shuffle_seed = parse_u64(key, value);
  else if (key == "train.snapshot_every") trainer.snapshot_every = parse_int(key, value);
  else if (key == "flow.block") flow.block = parse_int(key, value);
  else if (key == "flow.search") flow.search = parse_int(key, value);
  else if (key == "jitter.dilation") jitter.dilation = parse_int(key, value);
  else if (key == "jitter.shift_min") jitter.shift_min = parse_int(key, value);
  else if (key == "jitter.shift_max") jitter.shift_max = parse_int(key, value);
  else if (key == "seed") seed = parse_u64(key, value);
  else throw ValidationError("unknown config key '" + key + "'");
}

void apply_config_text(RunConfig& config, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config line " + std::to_string(line_no) +
                            ": expected 'key = value'");
    config.set(trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
  }
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file: " + path);
  std::ostringstream text;
  text << in.rdbuf();
  RunConfig config;
  apply_config_text(config, text.str());
  return config;
}

std::string resolved_config_text(const RunConfig& c) {
  std::ostringstream out;
  out << "crf.lambda1 = " << format_double(c.crf.lambda1) << "\n";
  out << "crf.lambda2 = " << format_double(c.crf.lambda2) << "\n";
  out << "crf.beta = " << (c.crf.beta ? format_double(*c.crf.beta) : std::string("auto")) << "\n";
  out << "crf.radius = " << c.crf.neighborhood_radius << "\n";
  out << "crf.iterations = " << c.crf.mf_iterations << "\n";
  out << "crf.tolerance = " << format_double(c.crf.mf_tolerance) << "\n";
  out << "crf.damping = " << format_double(c.crf.damping) << "\n";
  out << "crf.depth = " << c.crf.depth << "\n";
  out << "cue.patch_radius = " << c.cue.patch_radius << "\n";
  out << "cue.bins = " << c.cue.patch_bins << "\n";
  out << "cue.alpha = " << format_double(c.cue.alpha) << "\n";
  out << "cue.components = " << c.cue.appearance.components_per_class << "\n";
  out << "cue.min_pixels = " << c.cue.appearance.min_class_pixels << "\n";
  out << "cue.variance_floor = " << format_double(c.cue.appearance.variance_floor) << "\n";
  out << "cue.seed = " << c.cue.appearance_seed << "\n";
  out << "synth.width = " << c.synth.width << "\n";
  out << "synth.height = " << c.synth.height << "\n";
  out << "synth.objects = " << c.synth.num_objects << "\n";
  out << "synth.velocity = " << c.synth.max_velocity << "\n";
  out << "synth.noise = " << format_double(c.synth.noise_sigma) << "\n";
  out << "synth.frames = " << c.synth.num_frames << "\n";
  out << "synth.sequences = " << c.synth.num_sequences << "\n";
  out << "synth.min_object = " << c.synth.min_object_size << "\n";
  out << "synth.max_object = " << c.synth.max_object_size << "\n";
  out << "train.epochs = " << c.trainer.epochs << "\n";
  out << "train.lr = " << format_double(c.trainer.learning_rate) << "\n";
  out << "train.momentum = " << format_double(c.trainer.momentum) << "\n";
  out << "train.decay = " << format_double(c.trainer.weight_decay) << "\n";
  out << "train.f1 = " << c.trainer.f1 << "\n";
  out << "train.f2 = " << c.trainer.f2 << "\n";
  out << "train.kernel = " << c.trainer.kernel << "\n";
  out << "train.model_seed = " << c.trainer.model_seed << "\n";
  out << "train.shuffle_seed = " << c.trainer.shuffle_seed << "\n";
  out << "train.snapshot_every = " << c.trainer.snapshot_every << "\n";
  out << "flow.block = " << c.flow.block << "\n";
  out << "flow.search = " << c.flow.search << "\n";
  out << "jitter.dilation = " << c.jitter.dilation << "\n";
  out << "jitter.shift_min = " << c.jitter.shift_min << "\n";
  out << "jitter.shift_max = " << c.jitter.shift_max << "\n";
  out << "seed = " << c.seed << "\n";
  return out.str();
}

}  // namespace vidseg
