#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace vidseg {

enum class Tier { GT, PGT };

std::string tier_name(Tier t);
Tier parse_tier(const std::string& s);

struct ManifestEntry {
  std::string image_path;
  std::string label_path;
  Tier tier = Tier::GT;
  std::string seq_id;
  int frame_offset = 0;
  std::optional<int> rating;   // 1..10; GT rated entries must be 10
  std::optional<double> trust;  // recorded by training runs, informational on load
};

// Line-oriented CSV with header `image,labels,tier,seq,offset,rating`.
// A trailing `trust` column is accepted and written by the trainer.
struct DatasetManifest {
  std::vector<ManifestEntry> entries;

  std::size_t count(Tier t) const;
};

// Loads and validates a manifest. `check_paths` verifies that every
// referenced file exists; missing ones are all reported in the error.
DatasetManifest load_manifest(const std::string& path, bool check_paths = true);
void save_manifest(const DatasetManifest& manifest, const std::string& path,
                   bool with_trust = false);

// Ratings CSV with header `id,rating`, id = `<seq_id>/<frame_offset>`.
using RatingsTable = std::map<std::pair<std::string, int>, int>;
RatingsTable load_ratings(const std::string& path);
void save_ratings(const RatingsTable& ratings, const std::string& path);

// Shared CSV plumbing (no quoting; fields must not contain commas).
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace vidseg
