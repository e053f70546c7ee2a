#include "vidseg/image_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>

namespace vidseg {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::string& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw std::runtime_error("cannot open file: " + path);
  return f;
}

void png_warn_fn(png_structp, png_const_charp) {}

struct PngReader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  PngReader() {
    png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warn_fn);
    if (png) info = png_create_info_struct(png);
    if (!png || !info) throw std::runtime_error("png: allocation failed");
  }
  ~PngReader() { png_destroy_read_struct(&png, &info, nullptr); }
};

struct PngWriter {
  png_structp png = nullptr;
  png_infop info = nullptr;
  PngWriter() {
    png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warn_fn);
    if (png) info = png_create_info_struct(png);
    if (!png || !info) throw std::runtime_error("png: allocation failed");
  }
  ~PngWriter() { png_destroy_write_struct(&png, &info); }
};

// Reads an 8-bit raster with the requested channel count (3 = RGB, 1 = gray).
std::vector<std::uint8_t> read_png(const std::string& path, int channels, int& width,
                                   int& height) {
  FilePtr file = open_file(path, "rb");

  unsigned char sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw std::runtime_error("not a PNG file: " + path);

  PngReader r;
  // libpng reports stream errors through longjmp; translate at this frame.
  if (setjmp(png_jmpbuf(r.png)))
    throw std::runtime_error("corrupt PNG stream: " + path);
  png_init_io(r.png, file.get());
  png_set_sig_bytes(r.png, 8);
  png_read_info(r.png, r.info);

  const png_uint_32 w = png_get_image_width(r.png, r.info);
  const png_uint_32 h = png_get_image_height(r.png, r.info);
  const int depth = png_get_bit_depth(r.png, r.info);
  const int color = png_get_color_type(r.png, r.info);

  if (w == 0 || h == 0) throw std::runtime_error("zero-sized PNG: " + path);
  if (depth != 8)
    throw std::runtime_error("unsupported bit depth " + std::to_string(depth) + ": " + path);

  if (channels == 3) {
    if (color != PNG_COLOR_TYPE_RGB)
      throw std::runtime_error("expected 8-bit RGB PNG: " + path);
  } else {
    if (color != PNG_COLOR_TYPE_GRAY)
      throw std::runtime_error("expected 8-bit single-channel PNG: " + path);
  }

  png_read_update_info(r.png, r.info);
  if (png_get_rowbytes(r.png, r.info) != w * static_cast<png_uint_32>(channels))
    throw std::runtime_error("unexpected PNG row size: " + path);

  std::vector<std::uint8_t> data(static_cast<std::size_t>(w) * h * channels);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y)
    rows[y] = data.data() + static_cast<std::size_t>(y) * w * channels;
  png_read_image(r.png, rows.data());
  png_read_end(r.png, nullptr);

  width = static_cast<int>(w);
  height = static_cast<int>(h);
  return data;
}

void write_png(const std::string& path, const std::uint8_t* data, int width, int height,
               int channels) {
  FilePtr file = open_file(path, "wb");
  PngWriter wr;
  if (setjmp(png_jmpbuf(wr.png)))
    throw std::runtime_error("PNG write failed: " + path);
  png_init_io(wr.png, file.get());
  const int color = channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
  png_set_IHDR(wr.png, wr.info, width, height, 8, color, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(wr.png, wr.info);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y)
    rows[y] = const_cast<png_bytep>(data + static_cast<std::size_t>(y) * width * channels);
  png_write_image(wr.png, rows.data());
  png_write_end(wr.png, nullptr);
}

void write_le_u32(std::FILE* f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  if (std::fwrite(b, 1, 4, f) != 4) throw std::runtime_error("flow write failed");
}

std::uint32_t read_le_u32(std::FILE* f, const std::string& path) {
  unsigned char b[4];
  if (std::fread(b, 1, 4, f) != 4) throw std::runtime_error("truncated flow file: " + path);
  return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

float bits_to_float(std::uint32_t u) {
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

std::uint32_t float_to_bits(float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  return u;
}

}  // namespace

Frame load_image(const std::string& path) {
  Frame frame;
  frame.data = read_png(path, 3, frame.width, frame.height);
  return frame;
}

void write_image(const Frame& frame, const std::string& path) {
  if (frame.width < 1 || frame.height < 1 ||
      frame.data.size() != frame.pixel_count() * 3)
    throw std::invalid_argument("write_image: malformed frame");
  write_png(path, frame.data.data(), frame.width, frame.height, 3);
}

LabelMap load_labels(const std::string& path, int num_classes) {
  if (num_classes < 1 || num_classes >= kVoidLabel)
    throw std::invalid_argument("load_labels: num_classes out of range");
  int w = 0, h = 0;
  std::vector<std::uint8_t> raw = read_png(path, 1, w, h);
  LabelMap map(w, h, num_classes);
  map.labels = std::move(raw);
  map.validate();
  return map;
}

void write_labels(const LabelMap& labels, const std::string& path) {
  if (labels.width < 1 || labels.height < 1 ||
      labels.labels.size() != labels.pixel_count())
    throw std::invalid_argument("write_labels: malformed label map");
  write_png(path, labels.labels.data(), labels.width, labels.height, 1);
}

Frame colorize_labels(const LabelMap& labels, const Palette& palette) {
  if (palette.num_classes() < labels.num_classes)
    throw std::invalid_argument("colorize_labels: palette smaller than class count");
  Frame out(labels.width, labels.height);
  for (int y = 0; y < labels.height; ++y)
    for (int x = 0; x < labels.width; ++x) {
      std::uint8_t* p = out.rgb(x, y);
      const std::uint8_t l = labels.at(x, y);
      if (l == kVoidLabel) {
        p[0] = p[1] = p[2] = 0;
      } else {
        const PaletteEntry& e = palette.classes[l];
        p[0] = e.r, p[1] = e.g, p[2] = e.b;
      }
    }
  return out;
}

FlowField read_flow(const std::string& path) {
  FilePtr file = open_file(path, "rb");
  const float magic = bits_to_float(read_le_u32(file.get(), path));
  if (magic != kFlowMagic)
    throw std::runtime_error("bad magic in flow file: " + path);
  const std::int32_t w = static_cast<std::int32_t>(read_le_u32(file.get(), path));
  const std::int32_t h = static_cast<std::int32_t>(read_le_u32(file.get(), path));
  if (w < 1 || h < 1) throw std::runtime_error("bad dimensions in flow file: " + path);

  FlowField flow(w, h);
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(w) * h; ++i) {
    flow.u[i] = bits_to_float(read_le_u32(file.get(), path));
    flow.v[i] = bits_to_float(read_le_u32(file.get(), path));
  }
  unsigned char extra;
  if (std::fread(&extra, 1, 1, file.get()) == 1)
    throw std::runtime_error("trailing bytes in flow file: " + path);
  if (!flow.all_finite())
    throw std::runtime_error("non-finite values in flow file: " + path);
  return flow;
}

void write_flow(const FlowField& flow, const std::string& path) {
  if (flow.width < 1 || flow.height < 1 || !flow.all_finite())
    throw std::invalid_argument("write_flow: malformed flow field");
  FilePtr file = open_file(path, "wb");
  write_le_u32(file.get(), float_to_bits(kFlowMagic));
  write_le_u32(file.get(), static_cast<std::uint32_t>(flow.width));
  write_le_u32(file.get(), static_cast<std::uint32_t>(flow.height));
  for (Eigen::Index i = 0; i < flow.u.size(); ++i) {
    write_le_u32(file.get(), float_to_bits(flow.u[i]));
    write_le_u32(file.get(), float_to_bits(flow.v[i]));
  }
}

void LabelMap::validate() const {
  if (width < 1 || height < 1) throw std::runtime_error("LabelMap: dimension zero");
  if (labels.size() != pixel_count()) throw std::runtime_error("LabelMap: size mismatch");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::uint8_t l = labels[i];
    if (l != kVoidLabel && l >= num_classes)
      throw std::runtime_error("LabelMap: class index " + std::to_string(l) +
                               " out of range at pixel " + std::to_string(i));
  }
}

void Palette::validate() const {
  for (std::size_t i = 0; i < classes.size(); ++i)
    for (std::size_t j = i + 1; j < classes.size(); ++j)
      if (classes[i].name == classes[j].name)
        throw std::runtime_error("Palette: duplicate class name " + classes[i].name);
}

Palette camvid_palette() {
  return Palette{{{"Building", 128, 0, 0},
                  {"Tree", 128, 128, 0},
                  {"Sky", 128, 128, 128},
                  {"Car", 64, 0, 128},
                  {"Sign", 192, 128, 128},
                  {"Road", 128, 64, 128},
                  {"Pedestrian", 64, 64, 0},
                  {"Fence", 64, 64, 128},
                  {"Pole", 192, 192, 128},
                  {"Sidewalk", 0, 0, 192},
                  {"Bicycle", 0, 128, 192}}};
}

}  // namespace vidseg
