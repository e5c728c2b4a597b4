#include "capaa/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "capaa/error.hpp"

namespace capaa {

RgbImage::RgbImage(Tensor pixels) : pixels_(std::move(pixels)) {
  if (pixels_.channels() != 3) throw Error("invalid_image", "RgbImage needs 3 channels, got " + pixels_.shape().str());
  if (pixels_.height() < kMinSide || pixels_.width() < kMinSide) {
    throw Error("invalid_image", "RgbImage sides must be >= 8, got " + pixels_.shape().str());
  }
  for (double v : pixels_.values()) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error("invalid_image", "RgbImage value outside [0,1]: " + std::to_string(v));
  }
}

RgbImage RgbImage::clipped(Tensor pixels) {
  for (double& v : pixels.values()) v = std::clamp(v, 0.0, 1.0);
  return RgbImage(std::move(pixels));
}

RgbImage RgbImage::filled(int height, int width, double r, double g, double b) {
  Tensor t({3, height, width});
  const double rgb[3] = {r, g, b};
  for (int c = 0; c < 3; ++c)
    for (double& v : t.plane(c)) v = rgb[c];
  return RgbImage(std::move(t));
}

Tensor make_map(int height, int width, double fill) { return Tensor({1, height, width}, fill); }

Tensor quantize8(const Tensor& t) {
  Tensor out = t;
  for (double& v : out.values()) v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
  return out;
}

namespace {
struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;
}  // namespace

void write_png(const std::filesystem::path& path, const Tensor& image) {
  const int channels = image.channels();
  if (channels != 1 && channels != 3) throw Error("invalid_image", "write_png supports 1 or 3 channels");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw Error("io_error", "cannot open for writing: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("io_error", "libpng failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  const int h = image.height();
  const int w = image.width();
  png_set_IHDR(png, info, w, h, 8, channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(static_cast<std::size_t>(w) * channels);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c)
        row[x * channels + c] = static_cast<png_byte>(std::lround(std::clamp(image.at(c, y, x), 0.0, 1.0) * 255.0));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Tensor read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw Error("missing_file", "cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("io_error", "libpng failed reading " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_expand(png);
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int channels = png_get_channels(png, info);
  std::vector<png_byte> buffer(png_get_rowbytes(png, info) * h);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = buffer.data() + y * png_get_rowbytes(png, info);
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  const int out_c = channels >= 3 ? 3 : 1;
  Tensor out({out_c, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < out_c; ++c) out.at(c, y, x) = rows[y][x * channels + c] / 255.0;
  return out;
}

}  // namespace capaa
