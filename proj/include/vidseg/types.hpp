#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace vidseg {

using Real = double;

// Per-pixel, per-class dense field: one row per pixel (raster order), one
// column per class. Row-major so a pixel's class vector is contiguous.
template <typename Scalar>
using PixelClassMatrix =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using FieldMatrix = PixelClassMatrix<Real>;

template <typename Scalar>
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;

// Sentinel for unlabeled pixels in 8-bit label rasters.
inline constexpr std::uint8_t kVoidLabel = 255;

// 8-bit RGB image, row-major interleaved.
struct Frame {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // width*height*3

  Frame() = default;
  Frame(int w, int h, std::uint8_t fill = 0) : width(w), height(h) {
    if (w < 1 || h < 1) throw std::invalid_argument("Frame: dimensions must be >= 1");
    data.assign(static_cast<std::size_t>(w) * h * 3, fill);
  }

  std::size_t pixel_index(int x, int y) const {
    return (static_cast<std::size_t>(y) * width + x) * 3;
  }
  const std::uint8_t* rgb(int x, int y) const { return data.data() + pixel_index(x, y); }
  std::uint8_t* rgb(int x, int y) { return data.data() + pixel_index(x, y); }

  // Color in [0,1]^3, the representation all energies consume.
  Eigen::Vector3d color(int x, int y) const {
    const std::uint8_t* p = rgb(x, y);
    return {p[0] / 255.0, p[1] / 255.0, p[2] / 255.0};
  }

  bool contains(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

  bool operator==(const Frame&) const = default;
};

// Per-pixel class indices in {0..num_classes-1} plus the void sentinel.
struct LabelMap {
  int width = 0;
  int height = 0;
  int num_classes = 0;
  std::vector<std::uint8_t> labels;  // width*height

  LabelMap() = default;
  LabelMap(int w, int h, int classes, std::uint8_t fill = 0)
      : width(w), height(h), num_classes(classes) {
    if (w < 1 || h < 1) throw std::invalid_argument("LabelMap: dimensions must be >= 1");
    if (classes < 1 || classes >= kVoidLabel)
      throw std::invalid_argument("LabelMap: num_classes out of range");
    labels.assign(static_cast<std::size_t>(w) * h, fill);
  }

  std::uint8_t at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int x, int y) { return labels[static_cast<std::size_t>(y) * width + x]; }
  bool is_void(int x, int y) const { return at(x, y) == kVoidLabel; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

  // Enforces the range invariant; loaders and generators call this before
  // handing a map to anyone else.
  void validate() const;

  bool operator==(const LabelMap&) const = default;
};

// Forward optical flow, pixels/frame, from frame t to frame t+1.
// Components stay float so file round-trips are bitwise exact.
struct FlowField {
  int width = 0;
  int height = 0;
  Eigen::ArrayXf u;  // size width*height, raster order
  Eigen::ArrayXf v;

  FlowField() = default;
  FlowField(int w, int h) : width(w), height(h) {
    if (w < 1 || h < 1) throw std::invalid_argument("FlowField: dimensions must be >= 1");
    u = Eigen::ArrayXf::Zero(static_cast<Eigen::Index>(w) * h);
    v = Eigen::ArrayXf::Zero(static_cast<Eigen::Index>(w) * h);
  }

  Eigen::Index idx(int x, int y) const { return static_cast<Eigen::Index>(y) * width + x; }
  float u_at(int x, int y) const { return u[idx(x, y)]; }
  float v_at(int x, int y) const { return v[idx(x, y)]; }
  void set(int x, int y, float fu, float fv) {
    u[idx(x, y)] = fu;
    v[idx(x, y)] = fv;
  }
  bool all_finite() const { return u.isFinite().all() && v.isFinite().all(); }
};

struct PaletteEntry {
  std::string name;
  std::uint8_t r = 0, g = 0, b = 0;
};

// Ordered class names with display colors.
struct Palette {
  std::vector<PaletteEntry> classes;

  int num_classes() const { return static_cast<int>(classes.size()); }
  void validate() const;
};

// The 11-class outdoor driving palette used as the built-in preset.
Palette camvid_palette();

}  // namespace vidseg
