#include "vidseg/propagation_io.hpp"

#include "vidseg/image_io.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <ostream>

namespace vidseg {

std::vector<std::string> PropagationWriter::write(const std::string& seq_id,
                                                  const LabelMap& gt_labels,
                                                  const PropagationResult& result,
                                                  std::ostream& run_log) const {
  std::vector<std::string> label_paths;
  const LabelMap* reference = &gt_labels;
  char buf[64];
  for (std::size_t i = 0; i < result.frames.size(); ++i) {
    const PropagatedFrame& frame = result.frames[i];
    const int offset = static_cast<int>(i) + 1;
    const std::string stem = seq_id + "_p" + std::to_string(offset);
    const std::string label_path =
        (std::filesystem::path(out_dir) / (stem + ".png")).string();
    write_labels(frame.labels, label_path);
    label_paths.push_back(label_path);
    if (dump_marginals)
      write_marginals(frame.marginals,
                      (std::filesystem::path(out_dir) / (stem + ".mrg")).string());

    std::size_t changed = 0;
    for (std::size_t p = 0; p < frame.labels.labels.size(); ++p)
      if (frame.labels.labels[p] != reference->labels[p]) ++changed;

    std::snprintf(buf, sizeof buf, "%.17g", frame.free_energy);
    run_log << seq_id << ',' << offset << ',' << frame.iterations << ',' << buf << ','
            << changed << "\n";
    reference = &frame.labels;
  }
  return label_paths;
}

namespace {
constexpr char kMarginalMagic[4] = {'V', 'S', 'M', 'F'};
}

void write_marginals(const MarginalField& marginals, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write marginals: " + path);
  out.write(kMarginalMagic, 4);
  const std::int32_t dims[3] = {marginals.width, marginals.height,
                                static_cast<std::int32_t>(marginals.num_classes())};
  out.write(reinterpret_cast<const char*>(dims), sizeof dims);
  for (Eigen::Index p = 0; p < marginals.q.rows(); ++p)
    for (Eigen::Index l = 0; l < marginals.q.cols(); ++l) {
      const float v = static_cast<float>(marginals.q(p, l));
      out.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
  if (!out) throw std::runtime_error("write failed: " + path);
}

MarginalField read_marginals(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open marginals: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMarginalMagic, 4) != 0)
    throw std::runtime_error("bad magic in marginals file: " + path);
  std::int32_t dims[3];
  in.read(reinterpret_cast<char*>(dims), sizeof dims);
  if (!in || dims[0] < 1 || dims[1] < 1 || dims[2] < 1)
    throw std::runtime_error("bad dimensions in marginals file: " + path);
  MarginalField m;
  m.width = dims[0];
  m.height = dims[1];
  m.q.resize(static_cast<Eigen::Index>(dims[0]) * dims[1], dims[2]);
  for (Eigen::Index p = 0; p < m.q.rows(); ++p)
    for (Eigen::Index l = 0; l < m.q.cols(); ++l) {
      float v;
      in.read(reinterpret_cast<char*>(&v), sizeof v);
      if (!in) throw std::runtime_error("truncated marginals file: " + path);
      m.q(p, l) = v;
    }
  return m;
}

}  // namespace vidseg
