#include "vidseg/datasets.hpp"

#include "vidseg/random.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace vidseg {

void PgtIndex::validate() const {
  std::set<std::pair<std::string, int>> keys;
  for (const PgtItem& item : items) {
    if (item.frame_offset < 1)
      throw std::runtime_error("pgt index: frame offset must be >= 1 for " + item.seq_id);
    if (item.rating && (*item.rating < 1 || *item.rating > 9))
      throw std::runtime_error("pgt index: rating out of range 1..9 for " + item.seq_id + "/" +
                               std::to_string(item.frame_offset));
    if (!keys.insert({item.seq_id, item.frame_offset}).second)
      throw std::runtime_error("pgt index: duplicate key " + item.seq_id + "/" +
                               std::to_string(item.frame_offset));
  }
}

PgtIndex load_pgt_index(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open pgt index: " + path);
  std::string line;
  if (!std::getline(in, line) ||
      split_csv_line(line) != std::vector<std::string>{"seq", "offset", "image", "labels", "rating"})
    throw std::runtime_error("bad pgt index header in " + path);

  PgtIndex index;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != 5)
      throw std::runtime_error("pgt index line " + std::to_string(line_no) +
                               ": wrong field count");
    PgtItem item;
    item.seq_id = f[0];
    item.frame_offset = std::stoi(f[1]);
    item.image_path = f[2];
    item.label_path = f[3];
    if (!f[4].empty()) item.rating = std::stoi(f[4]);
    index.items.push_back(std::move(item));
  }
  index.validate();
  return index;
}

void save_pgt_index(const PgtIndex& index, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write pgt index: " + path);
  out << "seq,offset,image,labels,rating\n";
  for (const PgtItem& item : index.items) {
    out << item.seq_id << ',' << item.frame_offset << ',' << item.image_path << ','
        << item.label_path << ',';
    if (item.rating) out << *item.rating;
    out << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::size_t TrainSet::count(Tier t) const {
  return static_cast<std::size_t>(std::count_if(
      samples.begin(), samples.end(), [t](const TrainSetItem& s) { return s.tier == t; }));
}

TrainSet train_set_from_manifest(const DatasetManifest& manifest, const std::string& name) {
  TrainSet set;
  set.name = name;
  for (const ManifestEntry& e : manifest.entries)
    set.samples.push_back({e.image_path, e.label_path, e.tier, e.seq_id, e.frame_offset,
                           e.rating});
  return set;
}

DatasetManifest to_manifest(const TrainSet& set) {
  DatasetManifest manifest;
  for (const TrainSetItem& s : set.samples)
    manifest.entries.push_back({s.image_path, s.label_path, s.tier, s.seq_id, s.frame_offset,
                                s.rating, std::nullopt});
  return manifest;
}

namespace {

TrainSetItem to_train_item(const PgtItem& item) {
  return {item.image_path, item.label_path, Tier::PGT, item.seq_id, item.frame_offset,
          item.rating};
}

// Splits `items` (already ordered) into `parts` consecutive blocks whose
// sizes differ by at most one, earlier blocks taking the extra items.
std::vector<std::vector<PgtItem>> consecutive_blocks(const std::vector<PgtItem>& items,
                                                     int parts) {
  std::vector<std::vector<PgtItem>> blocks(parts);
  const std::size_t base = items.size() / parts;
  const std::size_t extra = items.size() % parts;
  std::size_t pos = 0;
  for (int b = 0; b < parts; ++b) {
    const std::size_t size = base + (static_cast<std::size_t>(b) < extra ? 1 : 0);
    for (std::size_t i = 0; i < size; ++i) blocks[b].push_back(items[pos++]);
  }
  return blocks;
}

}  // namespace

std::array<TrainSet, 5> sequential_sets(const PgtIndex& index) {
  index.validate();
  std::array<TrainSet, 5> sets;
  std::map<std::string, std::set<int>> seen;
  for (const PgtItem& item : index.items) {
    if (item.frame_offset > 5)
      throw std::runtime_error("sequential_sets: offset " + std::to_string(item.frame_offset) +
                               " beyond depth 5 for " + item.seq_id);
    sets[static_cast<std::size_t>(item.frame_offset - 1)].samples.push_back(to_train_item(item));
    seen[item.seq_id].insert(item.frame_offset);
  }
  std::ostringstream missing;
  for (const auto& [seq, offsets] : seen)
    for (int k = 1; k <= 5; ++k)
      if (!offsets.count(k)) missing << "\n  " << seq << " missing offset " << k;
  if (!missing.str().empty())
    throw std::runtime_error("sequential_sets: incomplete sequences:" + missing.str());
  for (int k = 0; k < 5; ++k) sets[k].name = set_name("PGT_S", k + 1);
  return sets;
}

std::array<TrainSet, 5> rated_sets(const PgtIndex& index, const RatingsTable* ratings) {
  index.validate();
  std::vector<PgtItem> items = index.items;
  std::vector<std::string> unrated;
  for (PgtItem& item : items) {
    if (ratings) {
      const auto it = ratings->find({item.seq_id, item.frame_offset});
      if (it != ratings->end()) item.rating = it->second;
    }
    if (!item.rating)
      unrated.push_back(item.seq_id + "/" + std::to_string(item.frame_offset));
    else if (*item.rating < 1 || *item.rating > 9)
      throw std::runtime_error("rated_sets: pgt rating out of range 1..9 for " + item.seq_id +
                               "/" + std::to_string(item.frame_offset));
  }
  if (!unrated.empty()) {
    std::ostringstream msg;
    msg << "rated_sets: " << unrated.size() << " unrated item(s):";
    for (const std::string& u : unrated) msg << "\n  " << u;
    throw std::runtime_error(msg.str());
  }

  std::stable_sort(items.begin(), items.end(), [](const PgtItem& a, const PgtItem& b) {
    if (*a.rating != *b.rating) return *a.rating > *b.rating;
    if (a.seq_id != b.seq_id) return a.seq_id < b.seq_id;
    return a.frame_offset < b.frame_offset;
  });

  std::array<TrainSet, 5> sets;
  const std::vector<std::vector<PgtItem>> blocks = consecutive_blocks(items, 5);
  for (int k = 0; k < 5; ++k) {
    sets[k].name = set_name("PGT_R", k + 1);
    for (const PgtItem& item : blocks[k]) sets[k].samples.push_back(to_train_item(item));
  }
  return sets;
}

std::array<TrainSet, 5> random_sets(const PgtIndex& index, std::uint64_t seed) {
  index.validate();
  std::vector<PgtItem> items = index.items;
  RandomStream rng(seed);
  rng.shuffle(items);

  std::array<TrainSet, 5> sets;
  const std::vector<std::vector<PgtItem>> blocks = consecutive_blocks(items, 5);
  for (int k = 0; k < 5; ++k) {
    sets[k].name = set_name("PGT_RND", k + 1);
    for (const PgtItem& item : blocks[k]) sets[k].samples.push_back(to_train_item(item));
  }
  return sets;
}

TrainSet accumulate_sets(const TrainSet& gt, const std::vector<TrainSet>& pgt_sets, int k) {
  if (k < 2 || k > static_cast<int>(pgt_sets.size()))
    throw std::invalid_argument("accumulate_sets: k out of range 2.." +
                                std::to_string(pgt_sets.size()));
  TrainSet out;
  out.name = "GT+PGT(1-" + std::to_string(k) + ")";
  out.samples = gt.samples;
  for (int i = 0; i < k; ++i)
    out.samples.insert(out.samples.end(), pgt_sets[static_cast<std::size_t>(i)].samples.begin(),
                       pgt_sets[static_cast<std::size_t>(i)].samples.end());
  return out;
}

namespace {

struct Region {
  std::uint8_t cls = 0;
  std::size_t size = 0;
  std::vector<std::int32_t> pixels;  // raster indices
};

// 4-connected components per class, void excluded, ids in raster order.
std::vector<Region> connected_regions(const LabelMap& labels) {
  const int w = labels.width, h = labels.height;
  std::vector<std::int32_t> region_of(static_cast<std::size_t>(w) * h, -1);
  std::vector<Region> regions;
  std::vector<std::int32_t> stack;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::int32_t start = y * w + x;
      if (region_of[static_cast<std::size_t>(start)] != -1) continue;
      const std::uint8_t cls = labels.labels[static_cast<std::size_t>(start)];
      if (cls == kVoidLabel) continue;
      const std::int32_t id = static_cast<std::int32_t>(regions.size());
      regions.push_back({cls, 0, {}});
      stack.push_back(start);
      region_of[static_cast<std::size_t>(start)] = id;
      while (!stack.empty()) {
        const std::int32_t p = stack.back();
        stack.pop_back();
        regions[static_cast<std::size_t>(id)].pixels.push_back(p);
        const int px = p % w, py = p / w;
        const int nbr[4][2] = {{px - 1, py}, {px + 1, py}, {px, py - 1}, {px, py + 1}};
        for (const auto& nb : nbr) {
          if (nb[0] < 0 || nb[0] >= w || nb[1] < 0 || nb[1] >= h) continue;
          const std::int32_t np = nb[1] * w + nb[0];
          if (region_of[static_cast<std::size_t>(np)] != -1) continue;
          if (labels.labels[static_cast<std::size_t>(np)] != cls) continue;
          region_of[static_cast<std::size_t>(np)] = id;
          stack.push_back(np);
        }
      }
      regions[static_cast<std::size_t>(id)].size = regions[static_cast<std::size_t>(id)].pixels.size();
    }
  return regions;
}

}  // namespace

LabelMap jitter_labels(const LabelMap& labels, int dilation_radius, int shift_min, int shift_max,
                       std::uint64_t seed) {
  if (dilation_radius < 0) throw std::invalid_argument("jitter_labels: negative dilation radius");
  if (shift_min < 0 || shift_max > 8 || shift_min > shift_max)
    throw std::invalid_argument("jitter_labels: shift range must lie within [0,8]");
  labels.validate();

  const int w = labels.width, h = labels.height;
  const std::vector<Region> regions = connected_regions(labels);

  LabelMap out = labels;
  // Winner per pixel: (size, lower class, lower region id) dominates.
  struct Claim {
    std::size_t size = 0;
    int cls = 256;
    std::int32_t region = -1;
  };
  std::vector<Claim> claims(static_cast<std::size_t>(w) * h);

  // one compass step per magnitude unit; diagonals move in both axes
  static const int kCompass[8][2] = {{0, -1}, {1, -1}, {1, 0},  {1, 1},
                                     {0, 1},  {-1, 1}, {-1, 0}, {-1, -1}};

  RandomStream rng(seed);
  for (std::size_t id = 0; id < regions.size(); ++id) {
    const Region& region = regions[id];
    RandomStream region_rng = rng.fork(static_cast<std::uint64_t>(id));
    const int magnitude = region_rng.uniform_int(shift_min, shift_max);
    const int dir = region_rng.uniform_int(0, 7);
    const int sx = kCompass[dir][0] * magnitude;
    const int sy = kCompass[dir][1] * magnitude;

    const auto wins = [&](const Claim& c) {
      if (region.size != c.size) return region.size > c.size;
      if (static_cast<int>(region.cls) != c.cls) return static_cast<int>(region.cls) < c.cls;
      return static_cast<std::int32_t>(id) < c.region;
    };

    for (const std::int32_t p : region.pixels) {
      const int px = p % w, py = p / w;
      for (int dy = -dilation_radius; dy <= dilation_radius; ++dy)
        for (int dx = -dilation_radius; dx <= dilation_radius; ++dx) {
          const int tx = px + dx + sx, ty = py + dy + sy;
          if (tx < 0 || tx >= w || ty < 0 || ty >= h) continue;
          Claim& c = claims[static_cast<std::size_t>(ty) * w + tx];
          if (c.region == -1 || wins(c)) {
            c = {region.size, static_cast<int>(region.cls), static_cast<std::int32_t>(id)};
          }
        }
    }
  }

  for (std::size_t p = 0; p < claims.size(); ++p)
    if (claims[p].region != -1) out.labels[p] = static_cast<std::uint8_t>(claims[p].cls);
  return out;
}

std::array<TrainSet, 3> build_agt_sets(const TrainSet& gt,
                                       const std::array<std::vector<std::string>, 3>& jittered) {
  for (const auto& copy : jittered)
    if (copy.size() != gt.samples.size())
      throw std::invalid_argument("build_agt_sets: need one jittered labeling per GT image");

  std::array<TrainSet, 3> sets;
  const std::string names[3] = {"AGT_1", "AGT_1-2", "AGT_1-3"};
  for (int k = 0; k < 3; ++k) {
    sets[k].name = names[k];
    sets[k].samples = gt.samples;
    for (int copy = 0; copy <= k; ++copy)
      for (std::size_t i = 0; i < gt.samples.size(); ++i) {
        TrainSetItem item = gt.samples[i];
        item.tier = Tier::PGT;          // ambiguous labelings are trusted like PGT
        item.frame_offset = copy + 1;   // jitter copy index keeps manifest keys unique
        item.label_path = jittered[static_cast<std::size_t>(copy)][i];
        item.rating.reset();
        sets[k].samples.push_back(std::move(item));
      }
  }
  return sets;
}

std::string set_name(const std::string& scheme_prefix, int k) {
  return scheme_prefix + std::to_string(k);
}

}  // namespace vidseg
