#pragma once

#include <cstdio>

#include <jpeglib.h>

#include "cisnet/autodiff.hpp"
#include "cisnet/tensor.hpp"

namespace cisnet {

inline std::string codec_identity() { return "libjpeg " + std::to_string(JPEG_LIB_VERSION); }

// [-1,1] float <-> 8-bit, round half away from zero
template <class T>
inline uint8_t quantize8(T v) {
  T c = std::clamp(v, T(-1), T(1));
  double q = std::round((static_cast<double>(c) + 1.0) * 127.5);
  return static_cast<uint8_t>(std::clamp(q, 0.0, 255.0));
}

template <class T>
inline T dequantize8(uint8_t u) {
  return static_cast<T>(u / 127.5 - 1.0);
}

namespace detail {

inline std::vector<uint8_t> jpeg_encode_rgb(const std::vector<uint8_t>& rgb, int w, int h,
                                            int quality) {
  jpeg_compress_struct cinfo;
  jpeg_error_mgr jerr;
  cinfo.err = jpeg_std_error(&jerr);
  jpeg_create_compress(&cinfo);
  unsigned char* buf = nullptr;
  unsigned long buf_size = 0;
  jpeg_mem_dest(&cinfo, &buf, &buf_size);
  cinfo.image_width = static_cast<JDIMENSION>(w);
  cinfo.image_height = static_cast<JDIMENSION>(h);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    const uint8_t* row = rgb.data() + static_cast<size_t>(cinfo.next_scanline) * w * 3;
    JSAMPROW rows[1] = {const_cast<JSAMPROW>(row)};
    jpeg_write_scanlines(&cinfo, rows, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  std::vector<uint8_t> out(buf, buf + buf_size);
  free(buf);
  return out;
}

inline std::vector<uint8_t> jpeg_decode_rgb(const std::vector<uint8_t>& data, int* w, int* h) {
  jpeg_decompress_struct cinfo;
  jpeg_error_mgr jerr;
  cinfo.err = jpeg_std_error(&jerr);
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, data.data(), static_cast<unsigned long>(data.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  *w = static_cast<int>(cinfo.output_width);
  *h = static_cast<int>(cinfo.output_height);
  std::vector<uint8_t> rgb(static_cast<size_t>(*w) * *h * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    uint8_t* row = rgb.data() + static_cast<size_t>(cinfo.output_scanline) * *w * 3;
    JSAMPROW rows[1] = {row};
    jpeg_read_scanlines(&cinfo, rows, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return rgb;
}

// symmetric reflection for out-of-range indices
inline int reflect(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}

}  // namespace detail

// Planar [3,H,W] in [-1,1] <-> interleaved 8-bit RGB
template <class T>
inline std::vector<uint8_t> to_rgb8(const Tensor<T>& img) {
  if (img.ndim() != 3 || img.dim(0) != 3) throw std::invalid_argument("to_rgb8: need [3,H,W]");
  int h = img.dim(1), w = img.dim(2);
  std::vector<uint8_t> rgb(static_cast<size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        rgb[(static_cast<size_t>(y) * w + x) * 3 + c] =
            quantize8(img[(static_cast<int64_t>(c) * h + y) * w + x]);
  return rgb;
}

template <class T>
inline Tensor<T> from_rgb8(const std::vector<uint8_t>& rgb, int h, int w) {
  Tensor<T> img({3, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img[(static_cast<int64_t>(c) * h + y) * w + x] =
            dequantize8<T>(rgb[(static_cast<size_t>(y) * w + x) * 3 + c]);
  return img;
}

// Real JPEG round trip at quality qf on a [3,H,W] image.
template <class T>
Tensor<T> jpeg_codec(const Tensor<T>& img, int qf) {
  if (qf < 1 || qf > 100) throw std::invalid_argument("jpeg_codec: quality factor must be 1..100");
  if (img.ndim() == 4) {
    Tensor<T> out(img.shape);
    int n = img.dim(0);
    int64_t stride = img.size() / n;
    for (int i = 0; i < n; ++i) {
      Tensor<T> one({img.dim(1), img.dim(2), img.dim(3)});
      std::copy_n(img.data.begin() + i * stride, stride, one.data.begin());
      Tensor<T> r = jpeg_codec(one, qf);
      std::copy_n(r.data.begin(), stride, out.data.begin() + i * stride);
    }
    return out;
  }
  if (img.ndim() != 3 || img.dim(0) != 3) throw std::invalid_argument("jpeg_codec: need [3,H,W]");
  int h = img.dim(1), w = img.dim(2);
  auto bytes = detail::jpeg_encode_rgb(to_rgb8(img), w, h, qf);
  int dw = 0, dh = 0;
  auto rgb = detail::jpeg_decode_rgb(bytes, &dw, &dh);
  if (dw != w || dh != h) throw std::runtime_error("jpeg_codec: decoded size mismatch");
  return from_rgb8<T>(rgb, h, w);
}

// Pseudo-differentiable JPEG: the forward value equals the real codec output;
// the codec residual diff = stopgrad(img) - jpeg(stopgrad(img)) is treated as
// a constant, so the gradient w.r.t. img is exactly the identity.
template <class T>
Var<T> pseudo_jpeg(const Var<T>& img, int qf) {
  Tensor<T> i_ori = img.val();  // gradient truncated
  Tensor<T> i_jpeg = jpeg_codec(i_ori, qf);
  // img - diff with diff = I_ori - I_JPEG, associated as I_JPEG + (img - I_ori)
  // so the forward value is bit-identical to the codec output
  return add(make_const(std::move(i_jpeg)), sub(img, make_const(std::move(i_ori))));
}

// ---------------------------------------------------------------------------
// Channel attack set
// ---------------------------------------------------------------------------

enum class ChannelKind {
  identity,
  jpeg,
  rotation,
  gaussian_noise,
  salt_pepper,
  speckle,
  median_filter,
  mean_filter,
  gaussian_filter,
};

struct ChannelSpec {
  ChannelKind kind = ChannelKind::identity;
  double param = 0.0;  // jpeg: quality factor; rotation: max degrees;
                       // noises: strength; filters: kernel size (3 only)

  void validate() const {
    switch (kind) {
      case ChannelKind::identity:
        break;
      case ChannelKind::jpeg:
        if (param < 1 || param > 100) throw std::invalid_argument("jpeg quality must be 1..100");
        break;
      case ChannelKind::rotation:
        if (param < 0 || param > 180) throw std::invalid_argument("rotation degrees out of range");
        break;
      case ChannelKind::gaussian_noise:
      case ChannelKind::speckle:
        if (param < 0) throw std::invalid_argument("noise strength must be >= 0");
        break;
      case ChannelKind::salt_pepper:
        if (param < 0 || param > 1) throw std::invalid_argument("density must be in [0,1]");
        break;
      case ChannelKind::median_filter:
      case ChannelKind::mean_filter:
      case ChannelKind::gaussian_filter:
        if (param != 3) throw std::invalid_argument("filter kernels are 3x3 only");
        break;
    }
  }

  std::string to_string() const {
    switch (kind) {
      case ChannelKind::identity: return "identity";
      case ChannelKind::jpeg: return "jpeg:" + std::to_string(static_cast<int>(param));
      case ChannelKind::rotation: return "rotation:" + std::to_string(param);
      case ChannelKind::gaussian_noise: return "gauss:" + std::to_string(param);
      case ChannelKind::salt_pepper: return "saltpepper:" + std::to_string(param);
      case ChannelKind::speckle: return "speckle:" + std::to_string(param);
      case ChannelKind::median_filter: return "median:3";
      case ChannelKind::mean_filter: return "mean:3";
      case ChannelKind::gaussian_filter: return "gaussfilter:3";
    }
    return "?";
  }

  static ChannelSpec parse(const std::string& s) {
    auto colon = s.find(':');
    std::string name = s.substr(0, colon);
    double p = colon == std::string::npos ? 0.0 : std::stod(s.substr(colon + 1));
    ChannelSpec spec;
    if (name == "identity") spec = {ChannelKind::identity, 0};
    else if (name == "jpeg") spec = {ChannelKind::jpeg, p};
    else if (name == "rotation") spec = {ChannelKind::rotation, colon == std::string::npos ? 10 : p};
    else if (name == "gauss" || name == "gaussian_noise")
      spec = {ChannelKind::gaussian_noise, colon == std::string::npos ? 0.05 : p};
    else if (name == "saltpepper" || name == "salt_pepper")
      spec = {ChannelKind::salt_pepper, colon == std::string::npos ? 0.05 : p};
    else if (name == "speckle") spec = {ChannelKind::speckle, colon == std::string::npos ? 0.1 : p};
    else if (name == "median" || name == "median_filter")
      spec = {ChannelKind::median_filter, colon == std::string::npos ? 3 : p};
    else if (name == "mean" || name == "mean_filter")
      spec = {ChannelKind::mean_filter, colon == std::string::npos ? 3 : p};
    else if (name == "gaussfilter" || name == "gaussian_filter")
      spec = {ChannelKind::gaussian_filter, colon == std::string::npos ? 3 : p};
    else throw std::invalid_argument("unknown channel kind: " + name);
    spec.validate();
    return spec;
  }
};

template <class T>
struct ChannelResult {
  Tensor<T> image;
  Tensor<T> residual;  // original - attacked; filled for jpeg only
};

namespace detail {

template <class T>
Tensor<T> rotate_bilinear(const Tensor<T>& img, double degrees) {
  int h = img.dim(1), w = img.dim(2);
  Tensor<T> out(img.shape);
  double rad = degrees * 3.14159265358979323846 / 180.0;
  double cs = std::cos(rad), sn = std::sin(rad);
  double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        // inverse map: rotate destination back into the source frame
        double sx = cs * (x - cx) + sn * (y - cy) + cx;
        double sy = -sn * (x - cx) + cs * (y - cy) + cy;
        int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
        double fx = sx - x0, fy = sy - y0;
        auto px = [&](int yy, int xx) {
          return static_cast<double>(
              img[(static_cast<int64_t>(c) * h + reflect(yy, h)) * w + reflect(xx, w)]);
        };
        double v = (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x0 + 1)) +
                   fy * ((1 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1));
        out[(static_cast<int64_t>(c) * h + y) * w + x] = static_cast<T>(v);
      }
  return out;
}

template <class T, class F>
Tensor<T> filter3(const Tensor<T>& img, F combine) {
  int h = img.dim(1), w = img.dim(2);
  Tensor<T> out(img.shape);
  T window[9];
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        int idx = 0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx)
            window[idx++] =
                img[(static_cast<int64_t>(c) * h + reflect(y + dy, h)) * w + reflect(x + dx, w)];
        out[(static_cast<int64_t>(c) * h + y) * w + x] = combine(window);
      }
  return out;
}

}  // namespace detail

// Apply one channel attack to a [3,H,W] image. Stochastic attacks draw from
// rng; deterministic ones ignore it.
template <class T>
ChannelResult<T> apply_channel(const Tensor<T>& img, const ChannelSpec& spec,
                               std::mt19937_64& rng) {
  spec.validate();
  if (img.ndim() != 3 || img.dim(0) != 3)
    throw std::invalid_argument("apply_channel: need [3,H,W]");
  int h = img.dim(1), w = img.dim(2);
  ChannelResult<T> result;
  switch (spec.kind) {
    case ChannelKind::identity:
      result.image = img;
      break;
    case ChannelKind::jpeg: {
      result.image = jpeg_codec(img, static_cast<int>(spec.param));
      result.residual = Tensor<T>(img.shape);
      for (int64_t i = 0; i < img.size(); ++i)
        result.residual[i] = img[i] - result.image[i];
      break;
    }
    case ChannelKind::rotation: {
      std::uniform_real_distribution<double> deg(-spec.param, spec.param);
      result.image = detail::rotate_bilinear(img, deg(rng));
      break;
    }
    case ChannelKind::gaussian_noise: {
      std::normal_distribution<double> noise(0.0, spec.param);
      result.image = img;
      for (auto& v : result.image.data)
        v = std::clamp(static_cast<T>(v + noise(rng)), T(-1), T(1));
      break;
    }
    case ChannelKind::salt_pepper: {
      std::uniform_real_distribution<double> uni(0.0, 1.0);
      result.image = img;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          if (uni(rng) < spec.param) {
            T v = uni(rng) < 0.5 ? T(-1) : T(1);
            for (int c = 0; c < 3; ++c)
              result.image[(static_cast<int64_t>(c) * h + y) * w + x] = v;
          }
      break;
    }
    case ChannelKind::speckle: {
      std::normal_distribution<double> noise(0.0, spec.param);
      result.image = img;
      for (auto& v : result.image.data)
        v = std::clamp(static_cast<T>(v * (1.0 + noise(rng))), T(-1), T(1));
      break;
    }
    case ChannelKind::median_filter:
      result.image = detail::filter3(img, [](T* win) {
        std::nth_element(win, win + 4, win + 9);
        return win[4];
      });
      break;
    case ChannelKind::mean_filter:
      result.image = detail::filter3(img, [](const T* win) {
        T s = T(0);
        for (int i = 0; i < 9; ++i) s += win[i];
        return static_cast<T>(s / T(9));
      });
      break;
    case ChannelKind::gaussian_filter: {
      static const T kKernel[9] = {T(1) / 16, T(2) / 16, T(1) / 16, T(2) / 16, T(4) / 16,
                                   T(2) / 16, T(1) / 16, T(2) / 16, T(1) / 16};
      result.image = detail::filter3(img, [](const T* win) {
        T s = T(0);
        for (int i = 0; i < 9; ++i) s += win[i] * kKernel[i];
        return s;
      });
      break;
    }
  }
  return result;
}

// Training channel set: identity plus JPEG at quality factors 90..50.
inline const int kTrainQualityFactors[5] = {90, 80, 70, 60, 50};

inline ChannelSpec sample_train_channel(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, 5);
  int i = pick(rng);
  if (i == 0) return {ChannelKind::identity, 0};
  return {ChannelKind::jpeg, static_cast<double>(kTrainQualityFactors[i - 1])};
}

// Apply a batched channel to a Var in the training graph. identity and jpeg
// (constant-residual) are the differentiable training channels.
template <class T>
Var<T> apply_train_channel(const Var<T>& img, const ChannelSpec& spec) {
  if (spec.kind == ChannelKind::identity) return img;
  if (spec.kind == ChannelKind::jpeg) return pseudo_jpeg(img, static_cast<int>(spec.param));
  throw std::invalid_argument("apply_train_channel: unsupported kind " + spec.to_string());
}

}  // namespace cisnet
