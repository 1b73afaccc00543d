#include "refdepth/imaging.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace refdepth {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw IoError(msg);
}

std::string lower_ext(const std::string& path) {
  const auto dot = path.find_last_of('.');
  if (dot == std::string::npos) return {};
  std::string ext = path.substr(dot + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

float byteswap_float(float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  bits = ((bits & 0xff000000u) >> 24) | ((bits & 0x00ff0000u) >> 8) |
         ((bits & 0x0000ff00u) << 8) | ((bits & 0x000000ffu) << 24);
  std::memcpy(&v, &bits, sizeof(bits));
  return v;
}

constexpr bool kHostLittleEndian = std::endian::native == std::endian::little;

}  // namespace

ScalarField ScalarField::zeros(int w, int h, int ch) {
  ScalarField f;
  f.width = w;
  f.height = h;
  f.channels = ch;
  f.data.assign(static_cast<std::size_t>(w) * h * ch, 0.0);
  return f;
}

ScalarField ScalarField::constant(int w, int h, double value, int ch) {
  ScalarField f = zeros(w, h, ch);
  std::fill(f.data.begin(), f.data.end(), value);
  return f;
}

SampleResult bilinear_sample(const ScalarField& img, double x, double y, int channel) {
  if (!(x >= 0.0 && x <= img.width - 1 && y >= 0.0 && y <= img.height - 1)) {
    return {0.0, false};
  }
  int x0 = static_cast<int>(std::floor(x));
  int y0 = static_cast<int>(std::floor(y));
  x0 = std::clamp(x0, 0, std::max(0, img.width - 2));
  y0 = std::clamp(y0, 0, std::max(0, img.height - 2));
  const int x1 = std::min(x0 + 1, img.width - 1);
  const int y1 = std::min(y0 + 1, img.height - 1);
  const double tx = x - x0;
  const double ty = y - y0;
  const double v00 = img.at(x0, y0, channel);
  const double v10 = img.at(x1, y0, channel);
  const double v01 = img.at(x0, y1, channel);
  const double v11 = img.at(x1, y1, channel);
  const double top = v00 + tx * (v10 - v00);
  const double bot = v01 + tx * (v11 - v01);
  return {top + ty * (bot - top), true};
}

ScalarField to_grayscale(const ScalarField& img) {
  if (img.channels == 1) return img;
  if (img.channels != 3) throw NumericalError("to_grayscale: expected 1 or 3 channels");
  ScalarField out = ScalarField::zeros(img.width, img.height, 1);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      out.at(x, y) = 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
    }
  }
  return out;
}

std::pair<ScalarField, ScalarField> image_gradients(const ScalarField& img) {
  ScalarField dx = ScalarField::zeros(img.width, img.height, img.channels);
  ScalarField dy = ScalarField::zeros(img.width, img.height, img.channels);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        if (x + 1 < img.width) dx.at(x, y, c) = img.at(x + 1, y, c) - img.at(x, y, c);
        if (y + 1 < img.height) dy.at(x, y, c) = img.at(x, y + 1, c) - img.at(x, y, c);
      }
    }
  }
  return {std::move(dx), std::move(dy)};
}

ScalarField downsample2x(const ScalarField& img) {
  const int w2 = img.width / 2;
  const int h2 = img.height / 2;
  if (w2 < 1 || h2 < 1) throw NumericalError("downsample2x: image too small");
  ScalarField out = ScalarField::zeros(w2, h2, img.channels);
  for (int y = 0; y < h2; ++y) {
    for (int x = 0; x < w2; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        out.at(x, y, c) = 0.25 * (img.at(2 * x, 2 * y, c) + img.at(2 * x + 1, 2 * y, c) +
                                  img.at(2 * x, 2 * y + 1, c) + img.at(2 * x + 1, 2 * y + 1, c));
      }
    }
  }
  return out;
}

ScalarField downsample2x_mask(const ScalarField& mask, bool require_all) {
  if (mask.channels != 1) throw NumericalError("downsample2x_mask: expected 1 channel");
  const int w2 = mask.width / 2;
  const int h2 = mask.height / 2;
  if (w2 < 1 || h2 < 1) throw NumericalError("downsample2x_mask: mask too small");
  ScalarField out = ScalarField::zeros(w2, h2, 1);
  for (int y = 0; y < h2; ++y) {
    for (int x = 0; x < w2; ++x) {
      const bool a = mask.at(2 * x, 2 * y) > 0.5;
      const bool b = mask.at(2 * x + 1, 2 * y) > 0.5;
      const bool c = mask.at(2 * x, 2 * y + 1) > 0.5;
      const bool d = mask.at(2 * x + 1, 2 * y + 1) > 0.5;
      const bool set = require_all ? (a && b && c && d) : (a || b || c || d);
      out.at(x, y) = set ? 1.0 : 0.0;
    }
  }
  return out;
}

ScalarField flip_vertical(const ScalarField& img) {
  ScalarField out = img;
  const std::size_t row = static_cast<std::size_t>(img.width) * img.channels;
  for (int y = 0; y < img.height; ++y) {
    std::copy_n(img.data.data() + row * y, row,
                out.data.data() + row * (img.height - 1 - y));
  }
  return out;
}

ScalarField read_png(const std::string& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw IoError("read_png: " + path + ": " + image.message);
  }
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int channels = color ? 3 : 1;
  std::vector<unsigned char> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError("read_png: " + path + ": " + msg);
  }
  ScalarField out = ScalarField::zeros(static_cast<int>(image.width),
                                       static_cast<int>(image.height), channels);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = buffer[i] / 255.0;
  }
  return out;
}

void write_png(const ScalarField& img, const std::string& path) {
  if (img.channels != 1 && img.channels != 3) {
    throw IoError("write_png: expected 1 or 3 channels");
  }
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<unsigned char> buffer(img.data.size());
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const double v = std::clamp(img.data[i], 0.0, 1.0);
    buffer[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw IoError("write_png: " + path + ": " + image.message);
  }
}

ScalarField read_pfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "read_pfm: cannot open " + path);
  std::string magic;
  int w = 0, h = 0;
  double scale = 0.0;
  in >> magic >> w >> h >> scale;
  require(in.good(), "read_pfm: malformed header in " + path);
  require(magic == "Pf" || magic == "PF", "read_pfm: bad magic in " + path);
  require(w > 0 && h > 0, "read_pfm: bad dimensions in " + path);
  require(scale != 0.0, "read_pfm: zero scale in " + path);
  in.get();  // single whitespace byte after the scale line
  const int channels = magic == "PF" ? 3 : 1;
  const bool data_little_endian = scale < 0.0;
  ScalarField out = ScalarField::zeros(w, h, channels);
  std::vector<float> row(static_cast<std::size_t>(w) * channels);
  for (int y = h - 1; y >= 0; --y) {  // file stores the bottom row first
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
    require(in.good(), "read_pfm: truncated data in " + path);
    for (std::size_t i = 0; i < row.size(); ++i) {
      float v = row[i];
      if (data_little_endian != kHostLittleEndian) v = byteswap_float(v);
      out.data[static_cast<std::size_t>(y) * row.size() + i] = v;
    }
  }
  return out;
}

void write_pfm(const ScalarField& img, const std::string& path) {
  if (img.channels != 1 && img.channels != 3) {
    throw IoError("write_pfm: expected 1 or 3 channels");
  }
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "write_pfm: cannot open " + path);
  out << (img.channels == 3 ? "PF" : "Pf") << "\n"
      << img.width << " " << img.height << "\n"
      << "-1.0" << "\n";
  std::vector<float> row(static_cast<std::size_t>(img.width) * img.channels);
  for (int y = img.height - 1; y >= 0; --y) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      float v = static_cast<float>(img.data[static_cast<std::size_t>(y) * row.size() + i]);
      if (!kHostLittleEndian) v = byteswap_float(v);
      row[i] = v;
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  require(out.good(), "write_pfm: write failed for " + path);
}

ScalarField read_image(const std::string& path) {
  const std::string ext = lower_ext(path);
  if (ext == "png") return read_png(path);
  if (ext == "pfm") return read_pfm(path);
  throw IoError("read_image: unsupported extension on " + path);
}

void write_image(const ScalarField& img, const std::string& path) {
  const std::string ext = lower_ext(path);
  if (ext == "png") {
    write_png(img, path);
  } else if (ext == "pfm") {
    write_pfm(img, path);
  } else {
    throw IoError("write_image: unsupported extension on " + path);
  }
}

}  // namespace refdepth
