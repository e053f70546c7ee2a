#pragma once

#include "vidseg/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace vidseg {

// Desk-scale stand-in for real driving sequences: a textured static
// background with rigid colored objects moving at constant integer
// velocities, so dense ground truth and exact flows exist for every frame.
struct SynthConfig {
  int width = 64;
  int height = 48;
  int num_objects = 3;
  int max_velocity = 2;   // per-axis pixels/frame, integer
  double noise_sigma = 6.0;  // texture noise on 0..255 channels
  int num_frames = 6;     // reference frame plus num_frames-1 propagation targets
  int num_sequences = 4;
  std::uint64_t seed = 1;
  int min_object_size = 8;
  int max_object_size = 16;

  int num_classes() const { return num_objects + 1; }  // background is class 0
  void validate() const;
};

struct SynthSequence {
  std::string seq_id;
  std::vector<Frame> frames;
  std::vector<LabelMap> labels;     // dense GT for every frame
  std::vector<FlowField> flows;     // flows[t] maps frame t to t+1
};

struct SynthCorpus {
  SynthConfig config;
  std::vector<SynthSequence> sequences;
  Palette palette;
};

// Deterministic given the seed. Object trajectories are placed so their
// swept bounding boxes stay inside the frame and never overlap.
SynthCorpus generate_synth_corpus(const SynthConfig& config);

// Writes `<root>/<seq_id>/{frame_%02d.png, labels_%02d.png, flow_%02d.flo}`
// plus corpus.csv (`seq,frame,image,labels,flow`), gt.csv (a manifest of the
// reference frames), and palette.csv. Returns the corpus CSV path.
std::string write_synth_corpus(const SynthCorpus& corpus, const std::string& root);

struct CorpusSequencePaths {
  std::string seq_id;
  std::vector<std::string> image_paths;
  std::vector<std::string> label_paths;  // may be empty strings past frame 0
  std::vector<std::string> flow_paths;   // one per frame transition; may be empty
};

std::vector<CorpusSequencePaths> load_corpus_listing(const std::string& corpus_csv);
void save_corpus_listing(const std::vector<CorpusSequencePaths>& sequences,
                         const std::string& corpus_csv);

Palette load_palette(const std::string& path);
void save_palette(const Palette& palette, const std::string& path);

// Block-matching flow: every pixel of a block gets the integer displacement
// minimizing the block's sum of absolute RGB differences within +-search,
// ties broken toward zero displacement, then lexicographically by (dy, dx).
// Candidates that would push the block outside the image are skipped.
FlowField estimate_flow(const Frame& prev, const Frame& next, int block = 8, int search = 7);

}  // namespace vidseg
