#pragma once

#include "vidseg/random.hpp"
#include "vidseg/types.hpp"

#include <filesystem>
#include <string>

namespace vidseg::test {

// Fresh per-suite scratch directory under the build tree.
inline std::string temp_dir(const std::string& name) {
  const std::filesystem::path dir = std::filesystem::path("test_tmp") / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

inline Frame random_frame(int width, int height, RandomStream& rng) {
  Frame frame(width, height);
  for (auto& byte : frame.data) byte = static_cast<std::uint8_t>(rng.uniform_index(256));
  return frame;
}

inline LabelMap random_labels(int width, int height, int num_classes, RandomStream& rng) {
  LabelMap labels(width, height, num_classes);
  for (auto& l : labels.labels)
    l = static_cast<std::uint8_t>(rng.uniform_index(static_cast<std::uint64_t>(num_classes)));
  return labels;
}

}  // namespace vidseg::test
