#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_util.hpp"
#include "vidseg/datasets.hpp"
#include "vidseg/image_io.hpp"
#include "vidseg/synth.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

using namespace vidseg;

namespace {

PgtIndex make_index(int sequences, int depth, bool rated = false) {
  PgtIndex index;
  int rating_counter = 0;
  for (int s = 0; s < sequences; ++s)
    for (int k = 1; k <= depth; ++k) {
      PgtItem item;
      item.seq_id = "seq" + std::to_string(1000 + s);
      item.frame_offset = k;
      item.image_path = "img_" + item.seq_id + "_" + std::to_string(k) + ".png";
      item.label_path = "lab_" + item.seq_id + "_" + std::to_string(k) + ".png";
      if (rated) item.rating = 1 + (rating_counter++ % 9);
      index.items.push_back(std::move(item));
    }
  return index;
}

std::set<std::pair<std::string, int>> keys_of(const TrainSet& set) {
  std::set<std::pair<std::string, int>> keys;
  for (const TrainSetItem& s : set.samples) keys.insert({s.seq_id, s.frame_offset});
  return keys;
}

// disjoint and covering
void check_partition(const std::array<TrainSet, 5>& sets, const PgtIndex& index) {
  std::set<std::pair<std::string, int>> all_keys;
  std::size_t total = 0;
  for (const TrainSet& set : sets) {
    const auto keys = keys_of(set);
    CHECK(keys.size() == set.samples.size());
    for (const auto& k : keys) CHECK(all_keys.insert(k).second);  // disjoint
    total += set.samples.size();
  }
  CHECK(total == index.items.size());
}

}  // namespace

TEST_CASE("sequential_sets: partitions 367x5 into five sets of 367 by offset") {
  const PgtIndex index = make_index(367, 5);
  const std::array<TrainSet, 5> sets = sequential_sets(index);
  for (int k = 0; k < 5; ++k) {
    CHECK(sets[k].name == "PGT_S" + std::to_string(k + 1));
    CHECK(sets[k].samples.size() == 367);
    for (const TrainSetItem& s : sets[k].samples) CHECK(s.frame_offset == k + 1);
  }
  check_partition(sets, index);
}

TEST_CASE("sequential_sets: single sequence gives five singletons; missing offsets reported") {
  const PgtIndex index = make_index(1, 5);
  const std::array<TrainSet, 5> sets = sequential_sets(index);
  for (const TrainSet& set : sets) CHECK(set.samples.size() == 1);

  PgtIndex incomplete = make_index(2, 5);
  incomplete.items.erase(incomplete.items.begin() + 7);  // drop seq1001 offset 3
  CHECK_THROWS_WITH_AS(sequential_sets(incomplete), doctest::Contains("seq1001"),
                       std::runtime_error);
}

TEST_CASE("rated_sets: five blocks of 367, sorted by rating with deterministic ties") {
  const PgtIndex index = make_index(367, 5, true);
  const std::array<TrainSet, 5> sets = rated_sets(index);
  check_partition(sets, index);
  int last_min = 10;
  for (int k = 0; k < 5; ++k) {
    CHECK(sets[k].name == "PGT_R" + std::to_string(k + 1));
    CHECK(sets[k].samples.size() == 367);
    int block_max = 0, block_min = 10;
    for (const TrainSetItem& s : sets[k].samples) {
      block_max = std::max(block_max, *s.rating);
      block_min = std::min(block_min, *s.rating);
    }
    CHECK(block_max <= last_min);  // min rating of R_k >= max rating of R_{k+1}
    last_min = block_min;
  }
}

TEST_CASE("rated_sets: all-equal ratings fall back to the (seq, offset) tie-break") {
  PgtIndex index = make_index(10, 5);
  for (PgtItem& item : index.items) item.rating = 4;
  const std::array<TrainSet, 5> sets = rated_sets(index);
  check_partition(sets, index);
  // tie-break is (seq asc, offset asc): first block holds the first 10 items
  std::vector<std::pair<std::string, int>> expected;
  for (const PgtItem& item : index.items) expected.push_back({item.seq_id, item.frame_offset});
  std::sort(expected.begin(), expected.end());
  for (int i = 0; i < 10; ++i) {
    CHECK(sets[0].samples[i].seq_id == expected[i].first);
    CHECK(sets[0].samples[i].frame_offset == expected[i].second);
  }
}

TEST_CASE("rated_sets: unrated items and out-of-range ratings rejected") {
  PgtIndex index = make_index(5, 5);
  CHECK_THROWS_WITH_AS(rated_sets(index), doctest::Contains("unrated"), std::runtime_error);

  // ratings table can supply what the index lacks
  RatingsTable ratings;
  for (const PgtItem& item : index.items)
    ratings[{item.seq_id, item.frame_offset}] = 1 + item.frame_offset;
  CHECK_NOTHROW(rated_sets(index, &ratings));

  ratings[{index.items[0].seq_id, index.items[0].frame_offset}] = 10;  // 10 is gt-only
  CHECK_THROWS(rated_sets(index, &ratings));
}

TEST_CASE("random_sets: seeded, deterministic, near-equal partition") {
  const PgtIndex index = make_index(367, 5);
  const std::array<TrainSet, 5> a = random_sets(index, 99);
  const std::array<TrainSet, 5> b = random_sets(index, 99);
  const std::array<TrainSet, 5> c = random_sets(index, 100);
  check_partition(a, index);
  for (int k = 0; k < 5; ++k) {
    CHECK(a[k].name == "PGT_RND" + std::to_string(k + 1));
    CHECK(a[k].samples.size() == 367);
    REQUIRE(a[k].samples.size() == b[k].samples.size());
    for (std::size_t i = 0; i < a[k].samples.size(); ++i) {
      CHECK(a[k].samples[i].seq_id == b[k].samples[i].seq_id);
      CHECK(a[k].samples[i].frame_offset == b[k].samples[i].frame_offset);
    }
  }
  // different seed shuffles differently
  bool any_differs = false;
  for (int k = 0; k < 5 && !any_differs; ++k)
    for (std::size_t i = 0; i < a[k].samples.size(); ++i)
      if (a[k].samples[i].seq_id != c[k].samples[i].seq_id ||
          a[k].samples[i].frame_offset != c[k].samples[i].frame_offset) {
        any_differs = true;
        break;
      }
  CHECK(any_differs);

  // sizes differ by at most 1 when not divisible
  const PgtIndex odd = make_index(3, 4);  // 12 items
  const std::array<TrainSet, 5> sets = random_sets(odd, 1);
  check_partition(sets, odd);
  for (const TrainSet& set : sets) {
    CHECK(set.samples.size() >= 2);
    CHECK(set.samples.size() <= 3);
  }
}

TEST_CASE("accumulate_sets: GT first, 5:1 ratio at k=5, k range enforced") {
  TrainSet gt;
  gt.name = "GT";
  for (int i = 0; i < 367; ++i)
    gt.samples.push_back({"gi" + std::to_string(i), "gl" + std::to_string(i), Tier::GT,
                          "seq" + std::to_string(i), 0, 10});
  const PgtIndex index = make_index(367, 5);
  std::vector<TrainSet> sets;
  for (const TrainSet& s : sequential_sets(index)) sets.push_back(s);

  const TrainSet k2 = accumulate_sets(gt, sets, 2);
  CHECK(k2.count(Tier::GT) == 367);
  CHECK(k2.count(Tier::PGT) == 734);
  for (std::size_t i = 0; i < 367; ++i) CHECK(k2.samples[i].tier == Tier::GT);

  const TrainSet k5 = accumulate_sets(gt, sets, 5);
  CHECK(k5.count(Tier::PGT) == 5 * k5.count(Tier::GT));
  CHECK(k5.samples.size() == 367 + 1835);

  CHECK_THROWS(accumulate_sets(gt, sets, 1));
  CHECK_THROWS(accumulate_sets(gt, sets, 6));
}

TEST_CASE("jitter_labels: identity configuration returns the input") {
  RandomStream rng(3);
  const LabelMap labels = test::random_labels(16, 12, 4, rng);
  CHECK(jitter_labels(labels, 0, 0, 0, 7) == labels);
}

TEST_CASE("jitter_labels: deterministic under a fixed seed") {
  RandomStream rng(5);
  const LabelMap labels = test::random_labels(20, 16, 3, rng);
  CHECK(jitter_labels(labels, 1, 2, 4, 11) == jitter_labels(labels, 1, 2, 4, 11));
  CHECK(jitter_labels(labels, 1, 2, 4, 11) != jitter_labels(labels, 1, 2, 4, 12));
}

namespace {

// chunky block labeling: regions are rectangles >= 6x6
LabelMap block_labels(int blocks_x, int blocks_y, int block_px, int num_classes,
                      RandomStream& rng) {
  LabelMap labels(blocks_x * block_px, blocks_y * block_px, num_classes);
  for (int by = 0; by < blocks_y; ++by)
    for (int bx = 0; bx < blocks_x; ++bx) {
      const std::uint8_t cls =
          static_cast<std::uint8_t>(rng.uniform_index(static_cast<std::uint64_t>(num_classes)));
      for (int y = 0; y < block_px; ++y)
        for (int x = 0; x < block_px; ++x)
          labels.at(bx * block_px + x, by * block_px + y) = cls;
    }
  return labels;
}

std::size_t boundary_pixel_count(const LabelMap& labels) {
  std::size_t count = 0;
  for (int y = 0; y < labels.height; ++y)
    for (int x = 0; x < labels.width; ++x) {
      const std::uint8_t l = labels.at(x, y);
      const int nbr[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
      for (const auto& nb : nbr) {
        const bool outside = nb[0] < 0 || nb[0] >= labels.width || nb[1] < 0 ||
                             nb[1] >= labels.height;
        if (outside || labels.at(nb[0], nb[1]) != l) {
          ++count;
          break;
        }
      }
    }
  return count;
}

}  // namespace

TEST_CASE("jitter_labels: changed pixels bounded by the perimeter band") {
  RandomStream rng(13);
  for (int trial = 0; trial < 5; ++trial) {
    const LabelMap labels = block_labels(4, 3, 8, 3, rng);
    const int radius = 1, shift_max = 4;
    const LabelMap jittered = jitter_labels(labels, radius, 2, shift_max, 100 + trial);

    std::size_t changed = 0;
    for (std::size_t p = 0; p < labels.labels.size(); ++p)
      if (labels.labels[p] != jittered.labels[p]) ++changed;

    const std::size_t bound = boundary_pixel_count(labels) * (radius + shift_max);
    CHECK(changed <= bound);
  }
}

TEST_CASE("jitter_labels: preserves the class inventory") {
  RandomStream rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    const LabelMap labels = block_labels(3, 3, 7, 4, rng);
    const LabelMap jittered = jitter_labels(labels, 1, 2, 4, 50 + trial);
    std::set<std::uint8_t> in_classes(labels.labels.begin(), labels.labels.end());
    for (const std::uint8_t l : jittered.labels) CHECK(in_classes.count(l) == 1);
    CHECK_NOTHROW(jittered.validate());
  }
}

TEST_CASE("jitter_labels: void pixels are not treated as regions") {
  LabelMap labels(12, 12, 2, 0);
  for (int y = 4; y < 8; ++y)
    for (int x = 4; x < 8; ++x) labels.at(x, y) = kVoidLabel;
  const LabelMap jittered = jitter_labels(labels, 1, 2, 2, 9);
  // the one real region may spill into the void hole but void never moves
  bool void_survives_somewhere = false;
  for (const std::uint8_t l : jittered.labels)
    if (l == kVoidLabel) void_survives_somewhere = true;
  CHECK(void_survives_somewhere);
}

TEST_CASE("build_agt_sets: nesting, counts and shared image paths") {
  TrainSet gt;
  gt.name = "GT";
  for (int i = 0; i < 367; ++i)
    gt.samples.push_back({"img" + std::to_string(i) + ".png", "lab" + std::to_string(i) + ".png",
                          Tier::GT, "s" + std::to_string(i), 0, 10});
  std::array<std::vector<std::string>, 3> jittered;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 367; ++i)
      jittered[c].push_back("jit" + std::to_string(c) + "_" + std::to_string(i) + ".png");

  const std::array<TrainSet, 3> agt = build_agt_sets(gt, jittered);
  CHECK(agt[0].name == "AGT_1");
  CHECK(agt[0].samples.size() == 2 * 367);
  CHECK(agt[1].samples.size() == 3 * 367);
  CHECK(agt[2].name == "AGT_1-3");
  CHECK(agt[2].samples.size() == 367 + 3 * 367);

  // nesting as sample multisets
  for (int k = 0; k + 1 < 3; ++k) {
    std::multiset<std::pair<std::string, std::string>> small, large;
    for (const auto& s : agt[k].samples) small.insert({s.image_path, s.label_path});
    for (const auto& s : agt[k + 1].samples) large.insert({s.image_path, s.label_path});
    CHECK(std::includes(large.begin(), large.end(), small.begin(), small.end()));
  }

  // every jittered sample shares its image with a GT sample
  std::set<std::string> gt_images;
  for (const auto& s : gt.samples) gt_images.insert(s.image_path);
  for (const auto& s : agt[2].samples)
    if (s.tier == Tier::PGT) CHECK(gt_images.count(s.image_path) == 1);
}

TEST_CASE("synth_corpus: no objects means a static scene") {
  SynthConfig cfg;
  cfg.width = 24;
  cfg.height = 20;
  cfg.num_objects = 0;
  cfg.num_frames = 3;
  cfg.num_sequences = 1;
  cfg.seed = 1;
  const SynthCorpus corpus = generate_synth_corpus(cfg);
  const SynthSequence& seq = corpus.sequences[0];
  for (int t = 1; t < 3; ++t) {
    CHECK(seq.frames[t] == seq.frames[0]);
    CHECK(seq.labels[t] == seq.labels[0]);
  }
  for (const FlowField& flow : seq.flows) {
    CHECK((flow.u == 0.0f).all());
    CHECK((flow.v == 0.0f).all());
  }
  for (const std::uint8_t l : seq.labels[0].labels) CHECK(l == 0);
}

TEST_CASE("synth_corpus: masks translate rigidly and flows warp GT exactly") {
  SynthConfig cfg;
  cfg.width = 48;
  cfg.height = 36;
  cfg.num_objects = 2;
  cfg.max_velocity = 2;
  cfg.num_frames = 5;
  cfg.num_sequences = 2;
  cfg.seed = 77;
  const SynthCorpus corpus = generate_synth_corpus(cfg);
  for (const SynthSequence& seq : corpus.sequences) {
    for (std::size_t t = 0; t + 1 < seq.labels.size(); ++t) {
      const FlowField& flow = seq.flows[t];
      for (int y = 0; y < cfg.height; ++y)
        for (int x = 0; x < cfg.width; ++x) {
          const int tx = x + static_cast<int>(flow.u_at(x, y));
          const int ty = y + static_cast<int>(flow.v_at(x, y));
          // background pixels an object moves onto are occluded; all others
          // must warp exactly (object trajectories are disjoint)
          const bool occluded =
              seq.labels[t].at(x, y) == 0 && seq.labels[t + 1].at(tx, ty) != 0;
          if (!occluded) REQUIRE(seq.labels[t + 1].at(tx, ty) == seq.labels[t].at(x, y));
        }
    }
  }
}

TEST_CASE("synth_corpus: determinism and infeasible configs rejected") {
  SynthConfig cfg;
  cfg.width = 32;
  cfg.height = 24;
  cfg.num_objects = 2;
  cfg.num_frames = 4;
  cfg.num_sequences = 2;
  cfg.seed = 5;
  const SynthCorpus a = generate_synth_corpus(cfg);
  const SynthCorpus b = generate_synth_corpus(cfg);
  for (std::size_t s = 0; s < a.sequences.size(); ++s)
    for (std::size_t t = 0; t < a.sequences[s].frames.size(); ++t)
      CHECK(a.sequences[s].frames[t] == b.sequences[s].frames[t]);

  SynthConfig bad = cfg;
  bad.max_velocity = 10;
  bad.num_frames = 10;
  CHECK_THROWS(generate_synth_corpus(bad));
}

TEST_CASE("synth_corpus: on-disk layout and corpus listing round trip") {
  const std::string dir = test::temp_dir("datasets_corpus");
  SynthConfig cfg;
  cfg.width = 24;
  cfg.height = 20;
  cfg.num_objects = 1;
  cfg.min_object_size = 5;
  cfg.max_object_size = 8;
  cfg.num_frames = 3;
  cfg.num_sequences = 2;
  cfg.seed = 9;
  const SynthCorpus corpus = generate_synth_corpus(cfg);
  const std::string corpus_csv = write_synth_corpus(corpus, dir);

  namespace fs = std::filesystem;
  CHECK(fs::exists(fs::path(dir) / "seq000" / "frame_00.png"));
  CHECK(fs::exists(fs::path(dir) / "seq000" / "labels_02.png"));
  CHECK(fs::exists(fs::path(dir) / "seq001" / "flow_01.flo"));
  CHECK(fs::exists(fs::path(dir) / "gt.csv"));
  CHECK(fs::exists(fs::path(dir) / "palette.csv"));

  const std::vector<CorpusSequencePaths> listing = load_corpus_listing(corpus_csv);
  REQUIRE(listing.size() == 2);
  CHECK(listing[0].image_paths.size() == 3);
  CHECK(listing[0].flow_paths.size() == 2);
  CHECK(load_image(listing[1].image_paths[0]) == corpus.sequences[1].frames[0]);
  CHECK(load_labels(listing[1].label_paths[2], cfg.num_classes()) == corpus.sequences[1].labels[2]);

  const Palette palette = load_palette((fs::path(dir) / "palette.csv").string());
  CHECK(palette.num_classes() == cfg.num_classes());

  const DatasetManifest gt = load_manifest((fs::path(dir) / "gt.csv").string());
  CHECK(gt.entries.size() == 2);
  CHECK(gt.count(Tier::GT) == 2);
}

TEST_CASE("pgt index: save/load round trip and validation") {
  const std::string dir = test::temp_dir("datasets_index");
  PgtIndex index = make_index(3, 5, true);
  const std::string path = dir + "/index.csv";
  save_pgt_index(index, path);
  const PgtIndex back = load_pgt_index(path);
  REQUIRE(back.items.size() == index.items.size());
  for (std::size_t i = 0; i < index.items.size(); ++i) {
    CHECK(back.items[i].seq_id == index.items[i].seq_id);
    CHECK(back.items[i].frame_offset == index.items[i].frame_offset);
    CHECK(back.items[i].image_path == index.items[i].image_path);
    CHECK(back.items[i].label_path == index.items[i].label_path);
    CHECK(back.items[i].rating == index.items[i].rating);
  }

  index.items.push_back(index.items[0]);  // duplicate key
  CHECK_THROWS(index.validate());
}

TEST_CASE("estimate_flow: identical frames give zero flow") {
  RandomStream rng(23);
  const Frame f = test::random_frame(32, 24, rng);
  const FlowField flow = estimate_flow(f, f, 8, 4);
  CHECK((flow.u == 0.0f).all());
  CHECK((flow.v == 0.0f).all());
}

TEST_CASE("estimate_flow: recovers a global (2,0) shift in the interior") {
  RandomStream rng(29);
  const Frame prev = test::random_frame(32, 32, rng);
  Frame next = prev;
  for (int y = 0; y < 32; ++y)
    for (int x = 31; x >= 2; --x) {
      const std::uint8_t* src = prev.rgb(x - 2, y);
      std::uint8_t* dst = next.rgb(x, y);
      dst[0] = src[0];
      dst[1] = src[1];
      dst[2] = src[2];
    }
  const FlowField flow = estimate_flow(prev, next, 8, 7);
  // interior blocks (not the last column of blocks, which sees new content)
  for (int y = 8; y < 24; ++y)
    for (int x = 8; x < 16; ++x) {
      CHECK(flow.u_at(x, y) == 2.0f);
      CHECK(flow.v_at(x, y) == 0.0f);
    }
}

TEST_CASE("estimate_flow: search 0 pins everything to zero displacement") {
  RandomStream rng(31);
  const Frame a = test::random_frame(24, 24, rng);
  const Frame b = test::random_frame(24, 24, rng);
  const FlowField flow = estimate_flow(a, b, 8, 0);
  CHECK((flow.u == 0.0f).all());
  CHECK((flow.v == 0.0f).all());

  CHECK_THROWS(estimate_flow(a, test::random_frame(16, 16, rng), 8, 2));
}
