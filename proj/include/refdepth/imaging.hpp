#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "refdepth/error.hpp"

namespace refdepth {

// Dense row-major raster of doubles, 1 or 3 interleaved channels.
// Intensities live in [0,1]; depth maps are meters.
struct ScalarField {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<double> data;

  static ScalarField zeros(int w, int h, int ch = 1);
  static ScalarField constant(int w, int h, double value, int ch = 1);

  double& at(int x, int y, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }
  bool same_shape(const ScalarField& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
  bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
};

struct SampleResult {
  double value = 0.0;
  bool valid = false;
};

// Bilinear interpolation at a continuous location; pixel centers sit at
// integer coordinates. Invalid outside [0, w-1] x [0, h-1].
SampleResult bilinear_sample(const ScalarField& img, double x, double y, int channel = 0);

// Rec.601 luma for 3-channel input; 1-channel input passes through.
ScalarField to_grayscale(const ScalarField& img);

// Forward differences; last column / row are zero.
std::pair<ScalarField, ScalarField> image_gradients(const ScalarField& img);

// 2x2 box average. Odd trailing row/column is dropped.
ScalarField downsample2x(const ScalarField& img);

// Mask-aware variant: require_all keeps a low-res pixel only when all four
// sources are set (erode), otherwise any source keeps it (dilate).
ScalarField downsample2x_mask(const ScalarField& mask, bool require_all);

ScalarField flip_vertical(const ScalarField& img);

// 8-bit PNG (gray or RGB) scaled to/from [0,1]; values are clamped on write.
ScalarField read_png(const std::string& path);
void write_png(const ScalarField& img, const std::string& path);

// Single-channel 32-bit float PFM, little-endian (scale -1), bottom row first.
ScalarField read_pfm(const std::string& path);
void write_pfm(const ScalarField& img, const std::string& path);

// Dispatch on extension: .png, .pfm.
ScalarField read_image(const std::string& path);
void write_image(const ScalarField& img, const std::string& path);

}  // namespace refdepth
