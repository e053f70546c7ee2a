#include "vidseg/synth.hpp"

#include "vidseg/image_io.hpp"
#include "vidseg/manifest.hpp"
#include "vidseg/random.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

namespace vidseg {

void SynthConfig::validate() const {
  if (width < 8 || height < 8) throw std::invalid_argument("synth: frame too small");
  if (num_objects < 0) throw std::invalid_argument("synth: negative object count");
  if (max_velocity < 0) throw std::invalid_argument("synth: negative velocity");
  if (noise_sigma < 0) throw std::invalid_argument("synth: negative noise sigma");
  if (num_frames < 2) throw std::invalid_argument("synth: need at least 2 frames");
  if (num_sequences < 1) throw std::invalid_argument("synth: need at least 1 sequence");
  if (min_object_size < 2 || max_object_size < min_object_size)
    throw std::invalid_argument("synth: bad object size range");
  // Feasibility: the widest object plus its full travel must fit the frame.
  const int travel = max_velocity * (num_frames - 1);
  if (num_objects > 0 && (max_object_size + travel >= width || max_object_size + travel >= height))
    throw std::invalid_argument(
        "synth: objects would exit the frame; shrink velocity, sizes or frame count");
}

namespace {

struct ObjectSpec {
  int x0, y0, w, h;  // position at frame 0
  int vx, vy;
  std::uint8_t cls;  // 1..num_objects
  std::vector<std::uint8_t> texture;  // w*h*3, anchored to the object
};

struct Box {
  int x0, y0, x1, y1;  // inclusive
  bool intersects(const Box& o) const {
    return !(x1 < o.x0 || o.x1 < x0 || y1 < o.y0 || o.y1 < y0);
  }
};

Box swept_box(int x0, int y0, int w, int h, int vx, int vy, int frames) {
  const int dx = vx * (frames - 1), dy = vy * (frames - 1);
  return {std::min(x0, x0 + dx), std::min(y0, y0 + dy), std::max(x0 + w - 1, x0 + w - 1 + dx),
          std::max(y0 + h - 1, y0 + h - 1 + dy)};
}

std::uint8_t clamp_channel(double v) {
  return static_cast<std::uint8_t>(std::lround(std::min(255.0, std::max(0.0, v))));
}

// Well-separated base colors: background dark gray, objects on a hue wheel.
Eigen::Vector3d base_color(int cls, int num_classes) {
  if (cls == 0) return {70, 70, 70};
  const double t = (cls - 1) / std::max(1.0, static_cast<double>(num_classes - 1));
  const double angle = t * 2.0 * 3.14159265358979323846;
  return {150.0 + 100.0 * std::cos(angle), 150.0 + 100.0 * std::cos(angle + 2.094),
          150.0 + 100.0 * std::cos(angle + 4.188)};
}

std::vector<std::uint8_t> make_texture(int w, int h, const Eigen::Vector3d& base,
                                       double sigma, RandomStream& rng) {
  std::vector<std::uint8_t> tex(static_cast<std::size_t>(w) * h * 3);
  for (std::size_t i = 0; i < tex.size(); ++i)
    tex[i] = clamp_channel(base[i % 3] + sigma * rng.gaussian());
  return tex;
}

SynthSequence generate_sequence(const SynthConfig& cfg, const std::string& seq_id,
                                RandomStream rng) {
  const int travel_frames = cfg.num_frames;

  // Place objects with pairwise-disjoint swept boxes.
  std::vector<ObjectSpec> objects;
  std::vector<Box> boxes;
  for (int i = 0; i < cfg.num_objects; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      ObjectSpec obj;
      obj.w = rng.uniform_int(cfg.min_object_size, cfg.max_object_size);
      obj.h = rng.uniform_int(cfg.min_object_size, cfg.max_object_size);
      obj.vx = rng.uniform_int(-cfg.max_velocity, cfg.max_velocity);
      obj.vy = rng.uniform_int(-cfg.max_velocity, cfg.max_velocity);
      const int dx = obj.vx * (travel_frames - 1), dy = obj.vy * (travel_frames - 1);
      const int lo_x = std::max(0, -dx), hi_x = std::min(cfg.width - obj.w, cfg.width - obj.w - dx);
      const int lo_y = std::max(0, -dy), hi_y = std::min(cfg.height - obj.h, cfg.height - obj.h - dy);
      if (lo_x > hi_x || lo_y > hi_y) continue;
      obj.x0 = rng.uniform_int(lo_x, hi_x);
      obj.y0 = rng.uniform_int(lo_y, hi_y);
      const Box box = swept_box(obj.x0, obj.y0, obj.w, obj.h, obj.vx, obj.vy, travel_frames);
      bool clash = false;
      for (const Box& other : boxes) clash = clash || box.intersects(other);
      if (clash) continue;
      obj.cls = static_cast<std::uint8_t>(i + 1);
      obj.texture = make_texture(obj.w, obj.h, base_color(i + 1, cfg.num_classes()),
                                 cfg.noise_sigma, rng);
      objects.push_back(std::move(obj));
      boxes.push_back(box);
      placed = true;
    }
    if (!placed)
      throw std::runtime_error("synth: could not place object " + std::to_string(i) + " in " +
                               seq_id + "; reduce object count, sizes or velocity");
  }

  const std::vector<std::uint8_t> background =
      make_texture(cfg.width, cfg.height, base_color(0, cfg.num_classes()), cfg.noise_sigma, rng);

  SynthSequence seq;
  seq.seq_id = seq_id;
  for (int t = 0; t < cfg.num_frames; ++t) {
    Frame frame(cfg.width, cfg.height);
    std::copy(background.begin(), background.end(), frame.data.begin());
    LabelMap labels(cfg.width, cfg.height, cfg.num_classes(), 0);
    for (const ObjectSpec& obj : objects) {
      const int ox = obj.x0 + obj.vx * t, oy = obj.y0 + obj.vy * t;
      for (int y = 0; y < obj.h; ++y)
        for (int x = 0; x < obj.w; ++x) {
          const std::size_t src = (static_cast<std::size_t>(y) * obj.w + x) * 3;
          std::uint8_t* dst = frame.rgb(ox + x, oy + y);
          dst[0] = obj.texture[src];
          dst[1] = obj.texture[src + 1];
          dst[2] = obj.texture[src + 2];
          labels.at(ox + x, oy + y) = obj.cls;
        }
    }
    seq.frames.push_back(std::move(frame));
    seq.labels.push_back(std::move(labels));
  }

  for (int t = 0; t + 1 < cfg.num_frames; ++t) {
    FlowField flow(cfg.width, cfg.height);
    for (const ObjectSpec& obj : objects) {
      const int ox = obj.x0 + obj.vx * t, oy = obj.y0 + obj.vy * t;
      for (int y = 0; y < obj.h; ++y)
        for (int x = 0; x < obj.w; ++x)
          flow.set(ox + x, oy + y, static_cast<float>(obj.vx), static_cast<float>(obj.vy));
    }
    seq.flows.push_back(std::move(flow));
  }
  return seq;
}

std::string zero_pad(int v, int width) {
  std::string s = std::to_string(v);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

}  // namespace

SynthCorpus generate_synth_corpus(const SynthConfig& config) {
  config.validate();
  SynthCorpus corpus;
  corpus.config = config;
  RandomStream rng(config.seed);
  for (int s = 0; s < config.num_sequences; ++s)
    corpus.sequences.push_back(generate_sequence(config, "seq" + zero_pad(s, 3),
                                                 rng.fork(static_cast<std::uint64_t>(s))));
  corpus.palette.classes.push_back({"background", 70, 70, 70});
  for (int i = 1; i < config.num_classes(); ++i) {
    const Eigen::Vector3d c = base_color(i, config.num_classes());
    corpus.palette.classes.push_back({"object_" + std::to_string(i),
                                      static_cast<std::uint8_t>(c[0]),
                                      static_cast<std::uint8_t>(c[1]),
                                      static_cast<std::uint8_t>(c[2])});
  }
  return corpus;
}

std::string write_synth_corpus(const SynthCorpus& corpus, const std::string& root) {
  namespace fs = std::filesystem;
  fs::create_directories(root);

  std::vector<CorpusSequencePaths> listing;
  DatasetManifest gt_manifest;
  for (const SynthSequence& seq : corpus.sequences) {
    const fs::path seq_dir = fs::path(root) / seq.seq_id;
    fs::create_directories(seq_dir);
    CorpusSequencePaths paths;
    paths.seq_id = seq.seq_id;
    for (std::size_t t = 0; t < seq.frames.size(); ++t) {
      const std::string image = (seq_dir / ("frame_" + zero_pad(static_cast<int>(t), 2) + ".png")).string();
      const std::string label = (seq_dir / ("labels_" + zero_pad(static_cast<int>(t), 2) + ".png")).string();
      write_image(seq.frames[t], image);
      write_labels(seq.labels[t], label);
      paths.image_paths.push_back(image);
      paths.label_paths.push_back(label);
      if (t + 1 < seq.frames.size()) {
        const std::string flow = (seq_dir / ("flow_" + zero_pad(static_cast<int>(t), 2) + ".flo")).string();
        write_flow(seq.flows[t], flow);
        paths.flow_paths.push_back(flow);
      }
    }
    gt_manifest.entries.push_back({paths.image_paths[0], paths.label_paths[0], Tier::GT,
                                   seq.seq_id, 0, 10, std::nullopt});
    listing.push_back(std::move(paths));
  }

  const std::string corpus_csv = (fs::path(root) / "corpus.csv").string();
  save_corpus_listing(listing, corpus_csv);
  save_manifest(gt_manifest, (fs::path(root) / "gt.csv").string());
  save_palette(corpus.palette, (fs::path(root) / "palette.csv").string());
  return corpus_csv;
}

std::vector<CorpusSequencePaths> load_corpus_listing(const std::string& corpus_csv) {
  std::ifstream in(corpus_csv);
  if (!in) throw std::runtime_error("cannot open corpus listing: " + corpus_csv);
  std::string line;
  if (!std::getline(in, line) ||
      split_csv_line(line) != std::vector<std::string>{"seq", "frame", "image", "labels", "flow"})
    throw std::runtime_error("bad corpus listing header in " + corpus_csv);

  std::vector<CorpusSequencePaths> sequences;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != 5)
      throw std::runtime_error("corpus listing line " + std::to_string(line_no) +
                               ": wrong field count");
    const int frame = std::stoi(f[1]);
    if (sequences.empty() || sequences.back().seq_id != f[0]) {
      if (frame != 0)
        throw std::runtime_error("corpus listing line " + std::to_string(line_no) +
                                 ": sequence must start at frame 0");
      sequences.push_back({f[0], {}, {}, {}});
    }
    CorpusSequencePaths& seq = sequences.back();
    if (frame != static_cast<int>(seq.image_paths.size()))
      throw std::runtime_error("corpus listing line " + std::to_string(line_no) +
                               ": frames must be consecutive");
    seq.image_paths.push_back(f[2]);
    seq.label_paths.push_back(f[3]);
    if (!f[4].empty()) seq.flow_paths.push_back(f[4]);
  }
  return sequences;
}

void save_corpus_listing(const std::vector<CorpusSequencePaths>& sequences,
                         const std::string& corpus_csv) {
  std::ofstream out(corpus_csv, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write corpus listing: " + corpus_csv);
  out << "seq,frame,image,labels,flow\n";
  for (const CorpusSequencePaths& seq : sequences)
    for (std::size_t t = 0; t < seq.image_paths.size(); ++t) {
      out << seq.seq_id << ',' << t << ',' << seq.image_paths[t] << ','
          << (t < seq.label_paths.size() ? seq.label_paths[t] : std::string()) << ','
          << (t < seq.flow_paths.size() ? seq.flow_paths[t] : std::string()) << "\n";
    }
  if (!out) throw std::runtime_error("write failed: " + corpus_csv);
}

Palette load_palette(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open palette: " + path);
  std::string line;
  if (!std::getline(in, line) ||
      split_csv_line(line) != std::vector<std::string>{"name", "r", "g", "b"})
    throw std::runtime_error("bad palette header in " + path);
  Palette palette;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != 4) throw std::runtime_error("bad palette row in " + path);
    palette.classes.push_back({f[0], static_cast<std::uint8_t>(std::stoi(f[1])),
                               static_cast<std::uint8_t>(std::stoi(f[2])),
                               static_cast<std::uint8_t>(std::stoi(f[3]))});
  }
  palette.validate();
  return palette;
}

void save_palette(const Palette& palette, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write palette: " + path);
  out << "name,r,g,b\n";
  for (const PaletteEntry& e : palette.classes)
    out << e.name << ',' << static_cast<int>(e.r) << ',' << static_cast<int>(e.g) << ','
        << static_cast<int>(e.b) << "\n";
  if (!out) throw std::runtime_error("write failed: " + path);
}

FlowField estimate_flow(const Frame& prev, const Frame& next, int block, int search) {
  if (prev.width != next.width || prev.height != next.height)
    throw std::invalid_argument("estimate_flow: dimension mismatch");
  if (block < 1 || search < 0) throw std::invalid_argument("estimate_flow: bad parameters");

  FlowField flow(prev.width, prev.height);
  for (int by = 0; by < prev.height; by += block)
    for (int bx = 0; bx < prev.width; bx += block) {
      const int bw = std::min(block, prev.width - bx);
      const int bh = std::min(block, prev.height - by);

      long best_cost = std::numeric_limits<long>::max();
      int best_dx = 0, best_dy = 0, best_norm = 0;
      for (int dy = -search; dy <= search; ++dy)
        for (int dx = -search; dx <= search; ++dx) {
          if (bx + dx < 0 || by + dy < 0 || bx + dx + bw > prev.width ||
              by + dy + bh > prev.height)
            continue;
          long cost = 0;
          for (int y = 0; y < bh; ++y)
            for (int x = 0; x < bw; ++x) {
              const std::uint8_t* a = prev.rgb(bx + x, by + y);
              const std::uint8_t* b = next.rgb(bx + dx + x, by + dy + y);
              cost += std::abs(int(a[0]) - int(b[0])) + std::abs(int(a[1]) - int(b[1])) +
                      std::abs(int(a[2]) - int(b[2]));
            }
          const int norm = dx * dx + dy * dy;
          const bool better =
              cost < best_cost ||
              (cost == best_cost &&
               (norm < best_norm || (norm == best_norm &&
                                     (dy < best_dy || (dy == best_dy && dx < best_dx)))));
          if (better) {
            best_cost = cost;
            best_dx = dx;
            best_dy = dy;
            best_norm = norm;
          }
        }
      for (int y = 0; y < bh; ++y)
        for (int x = 0; x < bw; ++x)
          flow.set(bx + x, by + y, static_cast<float>(best_dx), static_cast<float>(best_dy));
    }
  return flow;
}

}  // namespace vidseg
