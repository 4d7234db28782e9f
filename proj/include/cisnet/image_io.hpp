#pragma once

#include <png.h>

#include <cstdio>
#include <filesystem>

#include "cisnet/channel.hpp"

namespace cisnet {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::string& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw std::runtime_error("cannot open " + path);
  return f;
}

}  // namespace detail

// 8-bit RGB image as interleaved rows, the exchange format of the file codecs.
struct Rgb8Image {
  int height = 0, width = 0;
  std::vector<uint8_t> pixels;  // h*w*3, row-major, RGB interleaved

  bool operator==(const Rgb8Image&) const = default;
};

inline void save_png_rgb8(const Rgb8Image& img, const std::string& path) {
  auto f = detail::open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("png write failed: " + path);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height),
               8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(static_cast<size_t>(img.height));
  for (int y = 0; y < img.height; ++y)
    rows[static_cast<size_t>(y)] =
        const_cast<png_bytep>(img.pixels.data() + static_cast<size_t>(y) * img.width * 3);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline Rgb8Image load_png_rgb8(const std::string& path) {
  auto f = detail::open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("png read failed: " + path);
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  // normalize everything (palette, gray, 16-bit, alpha) to 8-bit RGB
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  Rgb8Image img;
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.pixels.resize(static_cast<size_t>(img.height) * img.width * 3);
  std::vector<png_bytep> rows(static_cast<size_t>(img.height));
  for (int y = 0; y < img.height; ++y)
    rows[static_cast<size_t>(y)] = img.pixels.data() + static_cast<size_t>(y) * img.width * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

// [3,H,W] planar in [-1,1] -> interleaved 8-bit
template <class T>
inline Rgb8Image to_rgb8_image(const Tensor<T>& img) {
  if (img.ndim() != 3 || img.dim(0) != 3)
    throw std::invalid_argument("to_rgb8_image: expected [3,H,W], got " + img.shape_str());
  Rgb8Image out;
  out.height = img.dim(1);
  out.width = img.dim(2);
  out.pixels = to_rgb8(img);
  return out;
}

template <class T>
inline Tensor<T> from_rgb8_image(const Rgb8Image& img) {
  return from_rgb8<T>(img.pixels, img.height, img.width);
}

enum class ImageFormat { png, jpeg };

struct ImageFormatSpec {
  ImageFormat format = ImageFormat::png;
  int quality = 90;  // jpeg only

  static ImageFormatSpec from_path(const std::string& path, int quality = 90) {
    std::string ext = std::filesystem::path(path).extension().string();
    for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (ext == ".png") return {ImageFormat::png, quality};
    if (ext == ".jpg" || ext == ".jpeg") return {ImageFormat::jpeg, quality};
    throw std::invalid_argument("unsupported image extension: " + path);
  }
};

// img [3,H,W] in [-1,1]; PNG is lossless at 8-bit, JPEG goes through the
// same codec as the channel module
template <class T>
inline void save_image(const Tensor<T>& img, const std::string& path, int jpeg_quality = 90) {
  ImageFormatSpec spec = ImageFormatSpec::from_path(path, jpeg_quality);
  Rgb8Image rgb = to_rgb8_image(img);
  if (spec.format == ImageFormat::png) {
    save_png_rgb8(rgb, path);
  } else {
    std::vector<uint8_t> blob = detail::jpeg_encode_rgb(rgb.pixels, rgb.width, rgb.height,
                                                        spec.quality);
    auto f = detail::open_file(path, "wb");
    if (std::fwrite(blob.data(), 1, blob.size(), f.get()) != blob.size())
      throw std::runtime_error("short write: " + path);
  }
}

template <class T>
inline Tensor<T> load_image(const std::string& path) {
  ImageFormatSpec spec = ImageFormatSpec::from_path(path);
  if (spec.format == ImageFormat::png) return from_rgb8_image<T>(load_png_rgb8(path));
  auto f = detail::open_file(path, "rb");
  std::fseek(f.get(), 0, SEEK_END);
  long n = std::ftell(f.get());
  std::fseek(f.get(), 0, SEEK_SET);
  std::vector<uint8_t> blob(static_cast<size_t>(n));
  if (std::fread(blob.data(), 1, blob.size(), f.get()) != blob.size())
    throw std::runtime_error("short read: " + path);
  int h = 0, w = 0;
  std::vector<uint8_t> pixels = detail::jpeg_decode_rgb(blob, &w, &h);
  return from_rgb8<T>(pixels, h, w);
}

}  // namespace cisnet
