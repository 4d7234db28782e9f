#pragma once

#include <algorithm>
#include <iostream>
#include <map>
#include <optional>

#include "cisnet/generator.hpp"
#include "cisnet/image_io.hpp"
#include "cisnet/message_mapping.hpp"

namespace cisnet {

// Uniform 32x32x3 training corpus; labels are expression indices when present.
template <class T>
struct Dataset {
  std::vector<Tensor<T>> images;  // each [3,32,32] in [-1,1]
  std::vector<int> labels;        // empty, or one label in 0..6 per image
  std::string provenance;

  int size() const { return static_cast<int>(images.size()); }
  bool labeled() const { return !labels.empty(); }

  void validate() const {
    for (const auto& img : images)
      if (img.shape != std::vector<int>{3, kImageSize, kImageSize})
        throw std::invalid_argument("dataset image has shape " + img.shape_str());
    if (!labels.empty() && labels.size() != images.size())
      throw std::invalid_argument("dataset label count mismatch");
    for (int l : labels)
      if (l < 0 || l >= kNumExpressions) throw std::invalid_argument("dataset label out of range");
  }
};

struct CropBox {
  int x = 0, y = 0, w = 0, h = 0;
};

// Either explicit per-file boxes (keyed by filename) or a center-crop
// fraction applied uniformly; fraction 1.0 is a pure resize.
struct CropSpec {
  double center_fraction = 1.0;
  std::map<std::string, CropBox> boxes;

  std::optional<CropBox> box_for(const std::string& filename, int img_h, int img_w) const {
    auto it = boxes.find(filename);
    if (it != boxes.end()) return it->second;
    if (center_fraction >= 1.0) return std::nullopt;
    if (center_fraction <= 0.0) throw std::invalid_argument("center fraction must be in (0,1]");
    int ch = std::max(1, static_cast<int>(img_h * center_fraction));
    int cw = std::max(1, static_cast<int>(img_w * center_fraction));
    return CropBox{(img_w - cw) / 2, (img_h - ch) / 2, cw, ch};
  }
};

namespace detail {

template <class T>
inline Tensor<T> crop_image(const Tensor<T>& img, const CropBox& b) {
  int h = img.dim(1), w = img.dim(2);
  if (b.w < 1 || b.h < 1 || b.x < 0 || b.y < 0 || b.x + b.w > w || b.y + b.h > h)
    throw std::invalid_argument("crop box out of bounds");
  Tensor<T> out({3, b.h, b.w});
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < b.h; ++i)
      for (int j = 0; j < b.w; ++j)
        out[(static_cast<int64_t>(c) * b.h + i) * b.w + j] =
            img[(static_cast<int64_t>(c) * h + (b.y + i)) * w + (b.x + j)];
  return out;
}

// bilinear resample with half-pixel centers
template <class T>
inline Tensor<T> resize_bilinear(const Tensor<T>& img, int oh, int ow) {
  int h = img.dim(1), w = img.dim(2);
  if (h == oh && w == ow) return img;
  Tensor<T> out({3, oh, ow});
  double sy = static_cast<double>(h) / oh, sx = static_cast<double>(w) / ow;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j) {
        double fy = std::clamp((i + 0.5) * sy - 0.5, 0.0, h - 1.0);
        double fx = std::clamp((j + 0.5) * sx - 0.5, 0.0, w - 1.0);
        int y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
        int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
        double wy = fy - y0, wx = fx - x0;
        auto px = [&](int yy, int xx) {
          return static_cast<double>(img[(static_cast<int64_t>(c) * h + yy) * w + xx]);
        };
        out[(static_cast<int64_t>(c) * oh + i) * ow + j] = static_cast<T>(
            (1 - wy) * ((1 - wx) * px(y0, x0) + wx * px(y0, x1)) +
            wy * ((1 - wx) * px(y1, x0) + wx * px(y1, x1)));
      }
  return out;
}

}  // namespace detail

// Crop (optional) -> bilinear resize to 32 -> [-1,1]; lexicographic file
// order keeps loading deterministic.
template <class T>
inline Dataset<T> load_dataset(const std::string& dir, const CropSpec& crop = {},
                               bool skip_unreadable = false, int target_size = kImageSize) {
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error("not a directory: " + dir);
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("no images in " + dir);
  Dataset<T> ds;
  ds.provenance = dir;
  for (const auto& f : files) {
    Tensor<T> img;
    try {
      img = load_image<T>(f.string());
    } catch (const std::exception& e) {
      if (skip_unreadable) {
        std::cerr << "warning: skipping unreadable " << f << ": " << e.what() << "\n";
        continue;
      }
      throw;
    }
    if (auto b = crop.box_for(f.filename().string(), img.dim(1), img.dim(2)))
      img = detail::crop_image(img, *b);
    ds.images.push_back(detail::resize_bilinear(img, target_size, target_size));
  }
  if (ds.images.empty()) throw std::runtime_error("all images unreadable in " + dir);
  ds.validate();
  return ds;
}

namespace detail {

// Procedural face-like sprite: background, face ellipse, class-dependent
// eyes and mouth. All geometry jittered per sample so the class signal is
// the shape family, not fixed pixels.
template <class T>
inline Tensor<T> draw_sprite(int cls, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const int s = kImageSize;
  Tensor<T> img({3, s, s});
  double bg[3] = {0.2 + 0.6 * uni(rng), 0.2 + 0.6 * uni(rng), 0.2 + 0.6 * uni(rng)};
  double face[3] = {0.55 + 0.4 * uni(rng), 0.45 + 0.35 * uni(rng), 0.3 + 0.3 * uni(rng)};
  double cx = s / 2.0 + 2.0 * (uni(rng) - 0.5);
  double cy = s / 2.0 + 2.0 * (uni(rng) - 0.5);
  double rx = 10.0 + 3.0 * uni(rng), ry = 11.0 + 3.0 * uni(rng);
  auto put = [&](int y, int x, const double* rgb) {
    if (y < 0 || y >= s || x < 0 || x >= s) return;
    for (int c = 0; c < 3; ++c)
      img[(static_cast<int64_t>(c) * s + y) * s + x] = static_cast<T>(2.0 * rgb[c] - 1.0);
  };
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      double dx = (x - cx) / rx, dy = (y - cy) / ry;
      put(y, x, dx * dx + dy * dy <= 1.0 ? face : bg);
    }
  // eyes: vertical size and pupil offset vary by class
  double dark[3] = {0.05, 0.05, 0.1};
  double eye_ry = 1.0 + 0.45 * cls + 0.3 * uni(rng);
  int ey = static_cast<int>(cy - 3 - (cls % 3));
  for (int side = -1; side <= 1; side += 2) {
    double ex = cx + side * (3.5 + 0.5 * uni(rng));
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) {
        double dx = (x - ex) / 1.6, dy = (y - ey) / eye_ry;
        if (dx * dx + dy * dy <= 1.0) put(y, x, dark);
      }
  }
  // mouth: curvature sweeps from frown to smile across classes; width wobbles
  double mouth_w = 4.0 + 0.5 * (cls % 4) + uni(rng);
  double curve = (cls - 3.0) * 0.5;
  int my = static_cast<int>(cy + 5 + (cls % 2));
  for (int dx = -static_cast<int>(mouth_w); dx <= static_cast<int>(mouth_w); ++dx) {
    int y = my + static_cast<int>(curve * (dx * dx) / (mouth_w * mouth_w) * 2.0);
    put(y, static_cast<int>(cx) + dx, dark);
    put(y + 1, static_cast<int>(cx) + dx, dark);
  }
  return img;
}

}  // namespace detail

template <class T>
inline Dataset<T> make_synthetic_sprites(int n, uint64_t seed, int n_classes = kNumExpressions) {
  if (n < 1) throw std::invalid_argument("sprite count must be >= 1");
  if (n_classes < 1 || n_classes > kNumExpressions)
    throw std::invalid_argument("sprite classes must be 1..7");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, n_classes - 1);
  Dataset<T> ds;
  ds.provenance = "sprites(seed=" + std::to_string(seed) + ")";
  ds.images.reserve(static_cast<size_t>(n));
  ds.labels.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    int cls = pick(rng);
    ds.labels.push_back(cls);
    ds.images.push_back(detail::draw_sprite<T>(cls, rng));
  }
  ds.validate();
  return ds;
}

}  // namespace cisnet
