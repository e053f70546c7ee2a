#pragma once

#include "vidseg/manifest.hpp"
#include "vidseg/types.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace vidseg {

struct PgtItem {
  std::string seq_id;
  int frame_offset = 0;  // 1..depth
  std::string image_path;
  std::string label_path;
  std::optional<int> rating;  // 1..9 for PGT
};

// All propagated labelings of a corpus, keyed by (seq_id, frame_offset).
struct PgtIndex {
  std::vector<PgtItem> items;

  void validate() const;
};

// CSV with header `seq,offset,image,labels,rating`.
PgtIndex load_pgt_index(const std::string& path);
void save_pgt_index(const PgtIndex& index, const std::string& path);

struct TrainSetItem {
  std::string image_path;
  std::string label_path;
  Tier tier = Tier::PGT;
  std::string seq_id;
  int frame_offset = 0;
  std::optional<int> rating;
};

struct TrainSet {
  std::string name;
  std::vector<TrainSetItem> samples;

  std::size_t count(Tier t) const;
};

TrainSet train_set_from_manifest(const DatasetManifest& manifest, const std::string& name);
DatasetManifest to_manifest(const TrainSet& set);

// Five sets grouped by frame offset: set k holds every item with
// frame_offset == k. Every sequence must contribute all offsets 1..5.
std::array<TrainSet, 5> sequential_sets(const PgtIndex& index);

// Five equal consecutive blocks after sorting by rating descending, ties by
// (seq_id, frame_offset) ascending. Block 1 holds the best-rated items.
// Ratings come from the index itself or, when given, the ratings table.
std::array<TrainSet, 5> rated_sets(const PgtIndex& index, const RatingsTable* ratings = nullptr);

// Five near-equal blocks of a seeded uniform shuffle. Disjoint by
// construction; sizes differ by at most 1.
std::array<TrainSet, 5> random_sets(const PgtIndex& index, std::uint64_t seed);

// GT followed by the first k PGT sets, in order. 2 <= k <= sets.size().
TrainSet accumulate_sets(const TrainSet& gt, const std::vector<TrainSet>& pgt_sets, int k);

// Border dilation plus a small random shift per connected semantic region.
// Contested pixels go to the larger region (ties to the lower class index,
// then lower region id); vacated pixels keep their prior labels.
LabelMap jitter_labels(const LabelMap& labels, int dilation_radius, int shift_min, int shift_max,
                       std::uint64_t seed);

// GT plus the first 1, 2 and 3 jittered labelings of every image.
// jittered[i] holds the per-image label paths of jitter copy i.
std::array<TrainSet, 3> build_agt_sets(const TrainSet& gt,
                                       const std::array<std::vector<std::string>, 3>& jittered);

// Canonical CLI-facing set names: PGT_S1..S5, PGT_R1..R5, PGT_RND1..RND5.
std::string set_name(const std::string& scheme_prefix, int k);

}  // namespace vidseg
