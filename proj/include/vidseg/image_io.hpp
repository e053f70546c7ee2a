#pragma once

#include "vidseg/types.hpp"

#include <string>

namespace vidseg {

// PNG, 8-bit RGB. Pixel values pass through untouched.
Frame load_image(const std::string& path);
void write_image(const Frame& frame, const std::string& path);

// PNG, 8-bit single channel. Values 0..num_classes-1 plus 255 = void;
// anything else is rejected.
LabelMap load_labels(const std::string& path, int num_classes);
void write_labels(const LabelMap& labels, const std::string& path);

// Renders class indices through a palette, void as black. Visualization only.
Frame colorize_labels(const LabelMap& labels, const Palette& palette);

// Middlebury ".flo": float32 magic 202021.25, int32 width, int32 height,
// then row-major (u,v) float32 pairs. Little-endian throughout. Non-finite
// content is rejected at load.
FlowField read_flow(const std::string& path);
void write_flow(const FlowField& flow, const std::string& path);

inline constexpr float kFlowMagic = 202021.25f;

}  // namespace vidseg
