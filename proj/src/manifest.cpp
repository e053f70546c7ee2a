#include "vidseg/manifest.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace vidseg {

std::string tier_name(Tier t) { return t == Tier::GT ? "gt" : "pgt"; }

Tier parse_tier(const std::string& s) {
  if (s == "gt") return Tier::GT;
  if (s == "pgt") return Tier::PGT;
  throw std::runtime_error("unknown tier: " + s);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

std::size_t DatasetManifest::count(Tier t) const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(),
                    [t](const ManifestEntry& e) { return e.tier == t; }));
}

namespace {

int parse_int_field(const std::string& s, const std::string& what, int line_no) {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("manifest line " + std::to_string(line_no) + ": bad " + what +
                             " '" + s + "'");
  }
}

}  // namespace

DatasetManifest load_manifest(const std::string& path, bool check_paths) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path);

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty manifest file: " + path);
  const std::vector<std::string> header = split_csv_line(line);
  const std::vector<std::string> base = {"image", "labels", "tier", "seq", "offset", "rating"};
  bool has_trust = false;
  if (header.size() == 7 && header[6] == "trust") {
    has_trust = true;
  } else if (header.size() != 6) {
    throw std::runtime_error("bad manifest header in " + path);
  }
  for (std::size_t i = 0; i < 6; ++i)
    if (header[i] != base[i]) throw std::runtime_error("bad manifest header in " + path);

  DatasetManifest manifest;
  std::set<std::tuple<std::string, int, Tier>> keys;
  std::vector<std::string> missing;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != (has_trust ? 7u : 6u))
      throw std::runtime_error("manifest line " + std::to_string(line_no) +
                               ": wrong field count");

    ManifestEntry e;
    e.image_path = f[0];
    e.label_path = f[1];
    e.tier = parse_tier(f[2]);
    e.seq_id = f[3];
    e.frame_offset = parse_int_field(f[4], "offset", line_no);
    if (!f[5].empty()) {
      const int r = parse_int_field(f[5], "rating", line_no);
      if (r < 1 || r > 10)
        throw std::runtime_error("manifest line " + std::to_string(line_no) +
                                 ": rating out of range 1..10");
      e.rating = r;
    }
    if (has_trust && !f[6].empty()) e.trust = std::stod(f[6]);

    if (e.frame_offset < 0)
      throw std::runtime_error("manifest line " + std::to_string(line_no) + ": negative offset");
    if (e.tier == Tier::GT) {
      if (e.frame_offset != 0)
        throw std::runtime_error("manifest line " + std::to_string(line_no) +
                                 ": gt entries must have offset 0");
      if (e.rating && *e.rating != 10)
        throw std::runtime_error("manifest line " + std::to_string(line_no) +
                                 ": rated gt entries must have rating 10");
    }

    if (!keys.insert({e.seq_id, e.frame_offset, e.tier}).second)
      throw std::runtime_error("manifest line " + std::to_string(line_no) +
                               ": duplicate key (" + e.seq_id + ", " +
                               std::to_string(e.frame_offset) + ", " + tier_name(e.tier) + ")");

    if (check_paths) {
      if (!std::filesystem::exists(e.image_path)) missing.push_back(e.image_path);
      if (!std::filesystem::exists(e.label_path)) missing.push_back(e.label_path);
    }
    manifest.entries.push_back(std::move(e));
  }

  if (!missing.empty()) {
    std::ostringstream msg;
    msg << "manifest " << path << " references " << missing.size() << " missing file(s):";
    for (const std::string& m : missing) msg << "\n  " << m;
    throw std::runtime_error(msg.str());
  }
  return manifest;
}

void save_manifest(const DatasetManifest& manifest, const std::string& path, bool with_trust) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write manifest: " + path);
  out << "image,labels,tier,seq,offset,rating";
  if (with_trust) out << ",trust";
  out << "\n";
  char buf[64];
  for (const ManifestEntry& e : manifest.entries) {
    out << e.image_path << ',' << e.label_path << ',' << tier_name(e.tier) << ',' << e.seq_id
        << ',' << e.frame_offset << ',';
    if (e.rating) out << *e.rating;
    if (with_trust) {
      out << ',';
      if (e.trust) {
        std::snprintf(buf, sizeof buf, "%.17g", *e.trust);
        out << buf;
      }
    }
    out << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

RatingsTable load_ratings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open ratings file: " + path);
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) != std::vector<std::string>{"id", "rating"})
    throw std::runtime_error("bad ratings header in " + path);

  RatingsTable table;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != 2)
      throw std::runtime_error("ratings line " + std::to_string(line_no) + ": wrong field count");
    const std::size_t slash = f[0].rfind('/');
    if (slash == std::string::npos)
      throw std::runtime_error("ratings line " + std::to_string(line_no) +
                               ": id must be <seq>/<offset>");
    const std::string seq = f[0].substr(0, slash);
    const int offset = parse_int_field(f[0].substr(slash + 1), "offset", line_no);
    const int rating = parse_int_field(f[1], "rating", line_no);
    if (rating < 1 || rating > 10)
      throw std::runtime_error("ratings line " + std::to_string(line_no) +
                               ": rating out of range 1..10");
    if (!table.emplace(std::make_pair(seq, offset), rating).second)
      throw std::runtime_error("ratings line " + std::to_string(line_no) + ": duplicate id " +
                               f[0]);
  }
  return table;
}

void save_ratings(const RatingsTable& ratings, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write ratings file: " + path);
  out << "id,rating\n";
  for (const auto& [key, rating] : ratings)
    out << key.first << '/' << key.second << ',' << rating << "\n";
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace vidseg
