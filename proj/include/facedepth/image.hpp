#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace facedepth {

// Row-major single-channel rasters; depth carries millimeters with 0 marking
// a missing measurement.
struct ImageU8 {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> px;

  ImageU8() = default;
  ImageU8(int h, int w, uint8_t fill = 0)
      : height(h), width(w), px(static_cast<size_t>(h) * w, fill) {
    if (h <= 0 || w <= 0) throw std::invalid_argument("image extents must be positive");
  }
  uint8_t& at(int r, int c) { return px[static_cast<size_t>(r) * width + c]; }
  uint8_t at(int r, int c) const { return px[static_cast<size_t>(r) * width + c]; }
};

struct ImageU16 {
  int height = 0;
  int width = 0;
  std::vector<uint16_t> px;

  ImageU16() = default;
  ImageU16(int h, int w, uint16_t fill = 0)
      : height(h), width(w), px(static_cast<size_t>(h) * w, fill) {
    if (h <= 0 || w <= 0) throw std::invalid_argument("image extents must be positive");
  }
  uint16_t& at(int r, int c) { return px[static_cast<size_t>(r) * width + c]; }
  uint16_t at(int r, int c) const { return px[static_cast<size_t>(r) * width + c]; }
};

// Float raster used by the metric suite.
struct ImageF {
  int height = 0;
  int width = 0;
  std::vector<double> px;

  ImageF() = default;
  ImageF(int h, int w, double fill = 0.0)
      : height(h), width(w), px(static_cast<size_t>(h) * w, fill) {}
  double& at(int r, int c) { return px[static_cast<size_t>(r) * width + c]; }
  double at(int r, int c) const { return px[static_cast<size_t>(r) * width + c]; }
};

inline ImageF to_float_image(const ImageU16& img) {
  ImageF out(img.height, img.width);
  for (size_t i = 0; i < img.px.size(); ++i) out.px[i] = img.px[i];
  return out;
}

inline ImageF to_float_image(const ImageU8& img) {
  ImageF out(img.height, img.width);
  for (size_t i = 0; i < img.px.size(); ++i) out.px[i] = img.px[i];
  return out;
}

}  // namespace facedepth
