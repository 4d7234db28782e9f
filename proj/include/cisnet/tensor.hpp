#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cisnet {

// Dense row-major tensor. Shape convention for images/activations is
// N x C x H x W; vectors are N x D.
template <class T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(count(shape)), T(0));
  }
  Tensor(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != static_cast<size_t>(count(shape)))
      throw std::invalid_argument("tensor: data size does not match shape");
  }

  static int64_t count(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) {
      if (d < 0) throw std::invalid_argument("tensor: negative dimension");
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int> s, T v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static Tensor ones(std::vector<int> s) { return full(std::move(s), T(1)); }

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  int dim(int i) const { return shape.at(static_cast<size_t>(i)); }
  int ndim() const { return static_cast<int>(shape.size()); }

  T& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  // 4-d accessor (N,C,H,W)
  T& at(int n, int c, int h, int w) {
    return data[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }
  const T& at(int n, int c, int h, int w) const {
    return data[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }
  // 2-d accessor (N,D)
  T& at(int n, int d) { return data[static_cast<size_t>(n) * shape[1] + d]; }
  const T& at(int n, int d) const { return data[static_cast<size_t>(n) * shape[1] + d]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (const T& v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
  }
};

template <class T>
inline void require_shape(const Tensor<T>& t, const std::vector<int>& want, const char* what) {
  if (t.shape != want) {
    Tensor<T> w;
    w.shape = want;
    throw std::invalid_argument(std::string(what) + ": expected shape " + w.shape_str() +
                                ", got " + t.shape_str());
  }
}

template <class T>
inline Tensor<T> randn(std::vector<int> shape, std::mt19937_64& rng, T stddev = T(1)) {
  Tensor<T> t(std::move(shape));
  std::normal_distribution<double> d(0.0, 1.0);
  for (auto& v : t.data) v = static_cast<T>(d(rng) * static_cast<double>(stddev));
  return t;
}

template <class T>
inline Tensor<T> rand_uniform(std::vector<int> shape, std::mt19937_64& rng, T lo, T hi) {
  Tensor<T> t(std::move(shape));
  std::uniform_real_distribution<double> d(static_cast<double>(lo), static_cast<double>(hi));
  for (auto& v : t.data) v = static_cast<T>(d(rng));
  return t;
}

}  // namespace cisnet
