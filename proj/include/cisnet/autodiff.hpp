#pragma once

#include <functional>
#include <memory>
#include <unordered_map>
#include <unordered_set>

#include "cisnet/blas.hpp"
#include "cisnet/tensor.hpp"

namespace cisnet {

// Define-by-run reverse-mode autodiff. Values are computed eagerly; each node
// stores a backward closure that maps the output cotangent to per-input
// cotangents. Backward closures are written in terms of the same primitive
// ops, so gradients are themselves differentiable (grad with create_graph
// gives higher-order derivatives, which the gradient penalty needs).

template <class T>
struct Node;

template <class T>
struct Var {
  std::shared_ptr<Node<T>> node;

  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> n) : node(std::move(n)) {}

  bool defined() const { return static_cast<bool>(node); }
  const Tensor<T>& val() const { return node->value; }
  const std::vector<int>& shape() const { return node->value.shape; }
};

template <class T>
struct Node {
  Tensor<T> value;
  std::vector<Var<T>> inputs;
  // cotangent of output -> cotangent per input (undefined Var = no gradient)
  std::function<std::vector<Var<T>>(const Var<T>&)> backward;
  bool leaf = false;
};

template <class T>
inline Var<T> make_leaf(Tensor<T> v) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(v);
  n->leaf = true;
  return Var<T>(n);
}

template <class T>
inline Var<T> make_const(Tensor<T> v) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(v);
  return Var<T>(n);
}

template <class T>
inline Var<T> make_op(Tensor<T> v, std::vector<Var<T>> inputs,
                      std::function<std::vector<Var<T>>(const Var<T>&)> bw) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(v);
  n->inputs = std::move(inputs);
  n->backward = std::move(bw);
  return Var<T>(n);
}

template <class T>
inline Var<T> detach(const Var<T>& a) {
  return make_const(a.val());
}

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

template <class T>
inline void require_same(const Var<T>& a, const Var<T>& b, const char* what) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.val().shape_str() +
                                " vs " + b.val().shape_str());
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same(a, b, "add");
  Tensor<T> out = a.val();
  for (int64_t i = 0; i < out.size(); ++i) out[i] += b.val()[i];
  return make_op<T>(std::move(out), {a, b},
                    [](const Var<T>& g) { return std::vector<Var<T>>{g, g}; });
}

template <class T>
Var<T> neg(const Var<T>& a) {
  Tensor<T> out = a.val();
  for (auto& v : out.data) v = -v;
  return make_op<T>(std::move(out), {a},
                    [](const Var<T>& g) { return std::vector<Var<T>>{neg(g)}; });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same(a, b, "sub");
  Tensor<T> out = a.val();
  for (int64_t i = 0; i < out.size(); ++i) out[i] -= b.val()[i];
  return make_op<T>(std::move(out), {a, b},
                    [](const Var<T>& g) { return std::vector<Var<T>>{g, neg(g)}; });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same(a, b, "mul");
  Tensor<T> out = a.val();
  for (int64_t i = 0; i < out.size(); ++i) out[i] *= b.val()[i];
  return make_op<T>(std::move(out), {a, b}, [a, b](const Var<T>& g) {
    return std::vector<Var<T>>{mul(g, b), mul(g, a)};
  });
}

template <class T>
Var<T> divide(const Var<T>& a, const Var<T>& b) {
  require_same(a, b, "divide");
  Tensor<T> out = a.val();
  for (int64_t i = 0; i < out.size(); ++i) out[i] /= b.val()[i];
  return make_op<T>(std::move(out), {a, b}, [a, b](const Var<T>& g) {
    Var<T> ga = divide(g, b);
    Var<T> gb = neg(divide(mul(g, a), mul(b, b)));
    return std::vector<Var<T>>{ga, gb};
  });
}

template <class T>
Var<T> scale(const Var<T>& a, T s) {
  Tensor<T> out = a.val();
  for (auto& v : out.data) v *= s;
  return make_op<T>(std::move(out), {a},
                    [s](const Var<T>& g) { return std::vector<Var<T>>{scale(g, s)}; });
}

template <class T>
Var<T> add_scalar(const Var<T>& a, T s) {
  Tensor<T> out = a.val();
  for (auto& v : out.data) v += s;
  return make_op<T>(std::move(out), {a},
                    [](const Var<T>& g) { return std::vector<Var<T>>{g}; });
}

template <class T>
Var<T> square(const Var<T>& a) {
  Tensor<T> out = a.val();
  for (auto& v : out.data) v *= v;
  return make_op<T>(std::move(out), {a}, [a](const Var<T>& g) {
    return std::vector<Var<T>>{mul(g, scale(a, T(2)))};
  });
}

template <class T>
Var<T> sqrt_v(const Var<T>& a) {
  Tensor<T> out = a.val();
  for (auto& v : out.data) v = std::sqrt(v);
  return make_op<T>(std::move(out), {a}, [a](const Var<T>& g) {
    return std::vector<Var<T>>{divide(scale(g, T(0.5)), sqrt_v(a))};
  });
}

template <class T>
Var<T> exp_v(const Var<T>& a) {
  Tensor<T> out = a.val();
  for (auto& v : out.data) v = std::exp(v);
  return make_op<T>(std::move(out), {a}, [a](const Var<T>& g) {
    return std::vector<Var<T>>{mul(g, exp_v(a))};
  });
}

template <class T>
Var<T> log_v(const Var<T>& a) {
  Tensor<T> out = a.val();
  for (auto& v : out.data) v = std::log(v);
  return make_op<T>(std::move(out), {a},
                    [a](const Var<T>& g) { return std::vector<Var<T>>{divide(g, a)}; });
}

template <class T>
Var<T> tanh_v(const Var<T>& a) {
  Tensor<T> out = a.val();
  for (auto& v : out.data) v = std::tanh(v);
  return make_op<T>(std::move(out), {a}, [a](const Var<T>& g) {
    Var<T> y = tanh_v(a);
    return std::vector<Var<T>>{mul(g, add_scalar(neg(mul(y, y)), T(1)))};
  });
}

// The activation mask is held fixed in backward; exact almost everywhere
// since the function is piecewise linear.
template <class T>
Var<T> leaky_relu(const Var<T>& a, T slope) {
  Tensor<T> out = a.val();
  Tensor<T> mask = a.val();
  for (int64_t i = 0; i < out.size(); ++i) {
    if (out[i] < T(0)) {
      out[i] *= slope;
      mask[i] = slope;
    } else {
      mask[i] = T(1);
    }
  }
  return make_op<T>(std::move(out), {a}, [mask](const Var<T>& g) {
    return std::vector<Var<T>>{mul(g, make_const(mask))};
  });
}

// ---------------------------------------------------------------------------
// Reductions and broadcasts (mutually adjoint pairs)
// ---------------------------------------------------------------------------

template <class T>
Var<T> bcast_scalar(const Var<T>& a, std::vector<int> shape);

template <class T>
Var<T> sum_all(const Var<T>& a) {
  T s = T(0);
  for (const auto& v : a.val().data) s += v;
  Tensor<T> out({1});
  out[0] = s;
  std::vector<int> shape = a.shape();
  return make_op<T>(std::move(out), {a}, [shape](const Var<T>& g) {
    return std::vector<Var<T>>{bcast_scalar(g, shape)};
  });
}

template <class T>
Var<T> bcast_scalar(const Var<T>& a, std::vector<int> shape) {
  if (a.val().size() != 1) throw std::invalid_argument("bcast_scalar: input must be scalar");
  Tensor<T> out = Tensor<T>::full(shape, a.val()[0]);
  return make_op<T>(std::move(out), {a},
                    [](const Var<T>& g) { return std::vector<Var<T>>{sum_all(g)}; });
}

template <class T>
Var<T> mean_all(const Var<T>& a) {
  return scale(sum_all(a), T(1) / static_cast<T>(a.val().size()));
}

template <class T>
Var<T> bcast_hw(const Var<T>& a, int h, int w);

// [N,C,H,W] -> [N,C,1,1]
template <class T>
Var<T> sum_hw(const Var<T>& a) {
  const auto& x = a.val();
  if (x.ndim() != 4) throw std::invalid_argument("sum_hw: need 4-d input");
  int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<T> out({n, c, 1, 1});
  for (int i = 0; i < n * c; ++i) {
    T s = T(0);
    for (int j = 0; j < h * w; ++j) s += x[static_cast<int64_t>(i) * h * w + j];
    out[i] = s;
  }
  return make_op<T>(std::move(out), {a}, [h, w](const Var<T>& g) {
    return std::vector<Var<T>>{bcast_hw(g, h, w)};
  });
}

// [N,C,1,1] -> [N,C,H,W]
template <class T>
Var<T> bcast_hw(const Var<T>& a, int h, int w) {
  const auto& x = a.val();
  if (x.ndim() != 4 || x.dim(2) != 1 || x.dim(3) != 1)
    throw std::invalid_argument("bcast_hw: need [N,C,1,1] input");
  int n = x.dim(0), c = x.dim(1);
  Tensor<T> out({n, c, h, w});
  for (int i = 0; i < n * c; ++i)
    for (int j = 0; j < h * w; ++j) out[static_cast<int64_t>(i) * h * w + j] = x[i];
  return make_op<T>(std::move(out), {a},
                    [](const Var<T>& g) { return std::vector<Var<T>>{sum_hw(g)}; });
}

template <class T>
Var<T> bcast_channel(const Var<T>& a, int n, int h, int w);

// [N,C,H,W] -> [C]
template <class T>
Var<T> sum_nhw(const Var<T>& a) {
  const auto& x = a.val();
  if (x.ndim() != 4) throw std::invalid_argument("sum_nhw: need 4-d input");
  int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<T> out({c});
  for (int in = 0; in < n; ++in)
    for (int ic = 0; ic < c; ++ic)
      for (int j = 0; j < h * w; ++j) out[ic] += x[((static_cast<int64_t>(in) * c + ic) * h * w) + j];
  return make_op<T>(std::move(out), {a}, [n, h, w](const Var<T>& g) {
    return std::vector<Var<T>>{bcast_channel(g, n, h, w)};
  });
}

// [C] -> [N,C,H,W]
template <class T>
Var<T> bcast_channel(const Var<T>& a, int n, int h, int w) {
  const auto& x = a.val();
  if (x.ndim() != 1) throw std::invalid_argument("bcast_channel: need 1-d input");
  int c = x.dim(0);
  Tensor<T> out({n, c, h, w});
  for (int in = 0; in < n; ++in)
    for (int ic = 0; ic < c; ++ic)
      for (int j = 0; j < h * w; ++j) out[((static_cast<int64_t>(in) * c + ic) * h * w) + j] = x[ic];
  return make_op<T>(std::move(out), {a},
                    [](const Var<T>& g) { return std::vector<Var<T>>{sum_nhw(g)}; });
}

template <class T>
Var<T> bcast_row(const Var<T>& a, int k);

// [N,K] -> [N,1]
template <class T>
Var<T> row_sum(const Var<T>& a) {
  const auto& x = a.val();
  if (x.ndim() != 2) throw std::invalid_argument("row_sum: need 2-d input");
  int n = x.dim(0), k = x.dim(1);
  Tensor<T> out({n, 1});
  for (int i = 0; i < n; ++i) {
    T s = T(0);
    for (int j = 0; j < k; ++j) s += x.at(i, j);
    out[i] = s;
  }
  return make_op<T>(std::move(out), {a},
                    [k](const Var<T>& g) { return std::vector<Var<T>>{bcast_row(g, k)}; });
}

// [N,1] -> [N,K]
template <class T>
Var<T> bcast_row(const Var<T>& a, int k) {
  const auto& x = a.val();
  if (x.ndim() != 2 || x.dim(1) != 1) throw std::invalid_argument("bcast_row: need [N,1] input");
  int n = x.dim(0);
  Tensor<T> out({n, k});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) out.at(i, j) = x[i];
  return make_op<T>(std::move(out), {a},
                    [](const Var<T>& g) { return std::vector<Var<T>>{row_sum(g)}; });
}

template <class T>
Var<T> bcast_sample(const Var<T>& a, std::vector<int> shape);

// [N,...] -> [N,1]: sum over everything but the batch dimension
template <class T>
Var<T> sum_per_sample(const Var<T>& a) {
  const auto& x = a.val();
  if (x.ndim() < 2) throw std::invalid_argument("sum_per_sample: need batched input");
  int n = x.dim(0);
  int64_t stride = x.size() / n;
  Tensor<T> out({n, 1});
  for (int i = 0; i < n; ++i) {
    T s = T(0);
    for (int64_t j = 0; j < stride; ++j) s += x[i * stride + j];
    out[i] = s;
  }
  std::vector<int> shape = x.shape;
  return make_op<T>(std::move(out), {a}, [shape](const Var<T>& g) {
    return std::vector<Var<T>>{bcast_sample(g, shape)};
  });
}

// [N,1] -> [N,...]
template <class T>
Var<T> bcast_sample(const Var<T>& a, std::vector<int> shape) {
  const auto& x = a.val();
  if (x.ndim() != 2 || x.dim(1) != 1) throw std::invalid_argument("bcast_sample: need [N,1]");
  int n = x.dim(0);
  if (shape.empty() || shape[0] != n) throw std::invalid_argument("bcast_sample: batch mismatch");
  Tensor<T> out(shape);
  int64_t stride = out.size() / n;
  for (int i = 0; i < n; ++i)
    for (int64_t j = 0; j < stride; ++j) out[i * stride + j] = x[i];
  return make_op<T>(std::move(out), {a},
                    [](const Var<T>& g) { return std::vector<Var<T>>{sum_per_sample(g)}; });
}

// ---------------------------------------------------------------------------
// Shaping
// ---------------------------------------------------------------------------

template <class T>
Var<T> reshape(const Var<T>& a, std::vector<int> shape) {
  if (Tensor<T>::count(shape) != a.val().size())
    throw std::invalid_argument("reshape: element count mismatch");
  Tensor<T> out(shape, a.val().data);
  std::vector<int> orig = a.shape();
  return make_op<T>(std::move(out), {a}, [orig](const Var<T>& g) {
    return std::vector<Var<T>>{reshape(g, orig)};
  });
}

template <class T>
Var<T> slice_cols(const Var<T>& a, int start, int len);

// zero-extend [N,len] into columns [start, start+len) of [N,total]
template <class T>
Var<T> embed_cols(const Var<T>& a, int start, int total) {
  const auto& x = a.val();
  if (x.ndim() != 2) throw std::invalid_argument("embed_cols: need 2-d input");
  int n = x.dim(0), len = x.dim(1);
  if (start < 0 || start + len > total) throw std::invalid_argument("embed_cols: range");
  Tensor<T> out({n, total});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < len; ++j) out.at(i, start + j) = x.at(i, j);
  return make_op<T>(std::move(out), {a}, [start, len](const Var<T>& g) {
    return std::vector<Var<T>>{slice_cols(g, start, len)};
  });
}

template <class T>
Var<T> slice_cols(const Var<T>& a, int start, int len) {
  const auto& x = a.val();
  if (x.ndim() != 2) throw std::invalid_argument("slice_cols: need 2-d input");
  int n = x.dim(0), total = x.dim(1);
  if (start < 0 || start + len > total) throw std::invalid_argument("slice_cols: range");
  Tensor<T> out({n, len});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < len; ++j) out.at(i, j) = x.at(i, start + j);
  return make_op<T>(std::move(out), {a}, [start, total](const Var<T>& g) {
    return std::vector<Var<T>>{embed_cols(g, start, total)};
  });
}

template <class T>
Var<T> concat_cols(const Var<T>& a, const Var<T>& b) {
  int da = a.val().dim(1), db = b.val().dim(1);
  return add(embed_cols(a, 0, da + db), embed_cols(b, da, da + db));
}

// [N,K] + labels[N] -> [N,1]
template <class T>
Var<T> scatter_rows(const Var<T>& a, std::vector<int> labels, int k);

template <class T>
Var<T> gather_rows(const Var<T>& a, std::vector<int> labels) {
  const auto& x = a.val();
  if (x.ndim() != 2) throw std::invalid_argument("gather_rows: need 2-d input");
  int n = x.dim(0), k = x.dim(1);
  if (static_cast<int>(labels.size()) != n) throw std::invalid_argument("gather_rows: label count");
  Tensor<T> out({n, 1});
  for (int i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= k) throw std::invalid_argument("gather_rows: label range");
    out[i] = x.at(i, labels[i]);
  }
  return make_op<T>(std::move(out), {a}, [labels, k](const Var<T>& g) {
    return std::vector<Var<T>>{scatter_rows(g, labels, k)};
  });
}

template <class T>
Var<T> scatter_rows(const Var<T>& a, std::vector<int> labels, int k) {
  const auto& x = a.val();
  if (x.ndim() != 2 || x.dim(1) != 1) throw std::invalid_argument("scatter_rows: need [N,1]");
  int n = x.dim(0);
  Tensor<T> out({n, k});
  for (int i = 0; i < n; ++i) out.at(i, labels[i]) = x[i];
  return make_op<T>(std::move(out), {a}, [labels](const Var<T>& g) {
    return std::vector<Var<T>>{gather_rows(g, labels)};
  });
}

// ---------------------------------------------------------------------------
// Matrix multiply
// ---------------------------------------------------------------------------

template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool ta = false, bool tb = false) {
  const auto& x = a.val();
  const auto& y = b.val();
  if (x.ndim() != 2 || y.ndim() != 2) throw std::invalid_argument("matmul: need 2-d inputs");
  int m = ta ? x.dim(1) : x.dim(0);
  int k = ta ? x.dim(0) : x.dim(1);
  int k2 = tb ? y.dim(1) : y.dim(0);
  int n = tb ? y.dim(0) : y.dim(1);
  if (k != k2)
    throw std::invalid_argument("matmul: inner dimension mismatch " + x.shape_str() + " vs " +
                                y.shape_str());
  Tensor<T> out({m, n});
  gemm(ta, tb, m, n, k, T(1), x.data.data(), x.dim(1), y.data.data(), y.dim(1), T(0),
       out.data.data(), n);
  return make_op<T>(std::move(out), {a, b}, [a, b, ta, tb](const Var<T>& g) {
    Var<T> ga = ta ? matmul(b, g, tb, true) : matmul(g, b, false, !tb);
    Var<T> gb = tb ? matmul(g, a, true, ta) : matmul(a, g, !ta, false);
    return std::vector<Var<T>>{ga, gb};
  });
}

// ---------------------------------------------------------------------------
// Convolution family. Geometry is shared: y = conv(x, w, stride, pad) with
// x [N,Ci,H,W], w [Co,Ci,K,K], y [N,Co,OH,OW]. conv_transpose and conv_wgrad
// are its adjoints in x and w; the three reference each other in backward,
// which closes the system under differentiation.
// ---------------------------------------------------------------------------

namespace detail {

inline int conv_out(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

template <class T>
void im2col(const T* img, int ci, int h, int w, int k, int stride, int pad, T* col) {
  int oh = conv_out(h, k, stride, pad), ow = conv_out(w, k, stride, pad);
  for (int c = 0; c < ci; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        T* dst = col + ((static_cast<int64_t>(c) * k + ky) * k + kx) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          int iy = oy * stride + ky - pad;
          for (int ox = 0; ox < ow; ++ox) {
            int ix = ox * stride + kx - pad;
            *dst++ = (iy >= 0 && iy < h && ix >= 0 && ix < w)
                         ? img[(static_cast<int64_t>(c) * h + iy) * w + ix]
                         : T(0);
          }
        }
      }
}

template <class T>
void col2im(const T* col, int ci, int h, int w, int k, int stride, int pad, T* img) {
  int oh = conv_out(h, k, stride, pad), ow = conv_out(w, k, stride, pad);
  for (int c = 0; c < ci; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const T* src = col + ((static_cast<int64_t>(c) * k + ky) * k + kx) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          int iy = oy * stride + ky - pad;
          for (int ox = 0; ox < ow; ++ox) {
            int ix = ox * stride + kx - pad;
            if (iy >= 0 && iy < h && ix >= 0 && ix < w)
              img[(static_cast<int64_t>(c) * h + iy) * w + ix] += src[oy * ow + ox];
          }
        }
      }
}

}  // namespace detail

template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, int stride, int pad);
template <class T>
Var<T> conv2d_transpose(const Var<T>& g, const Var<T>& w, int stride, int pad, int out_h,
                        int out_w);
template <class T>
Var<T> conv2d_wgrad(const Var<T>& x, const Var<T>& g, int stride, int pad, int k);

template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, int stride, int pad) {
  const auto& xv = x.val();
  const auto& wv = w.val();
  if (xv.ndim() != 4 || wv.ndim() != 4) throw std::invalid_argument("conv2d: need 4-d inputs");
  int n = xv.dim(0), ci = xv.dim(1), h = xv.dim(2), ww = xv.dim(3);
  int co = wv.dim(0), k = wv.dim(2);
  if (wv.dim(1) != ci) throw std::invalid_argument("conv2d: channel mismatch");
  int oh = detail::conv_out(h, k, stride, pad), ow = detail::conv_out(ww, k, stride, pad);
  Tensor<T> out({n, co, oh, ow});
  std::vector<T> col(static_cast<size_t>(ci) * k * k * oh * ow);
  for (int i = 0; i < n; ++i) {
    detail::im2col(xv.data.data() + static_cast<int64_t>(i) * ci * h * ww, ci, h, ww, k, stride,
                   pad, col.data());
    gemm(false, false, co, oh * ow, ci * k * k, T(1), wv.data.data(), ci * k * k, col.data(),
         oh * ow, T(0), out.data.data() + static_cast<int64_t>(i) * co * oh * ow, oh * ow);
  }
  return make_op<T>(std::move(out), {x, w}, [x, w, stride, pad, h, ww, k](const Var<T>& g) {
    Var<T> gx = conv2d_transpose(g, w, stride, pad, h, ww);
    Var<T> gw = conv2d_wgrad(x, g, stride, pad, k);
    return std::vector<Var<T>>{gx, gw};
  });
}

template <class T>
Var<T> conv2d_transpose(const Var<T>& g, const Var<T>& w, int stride, int pad, int out_h,
                        int out_w) {
  const auto& gv = g.val();
  const auto& wv = w.val();
  if (gv.ndim() != 4 || wv.ndim() != 4)
    throw std::invalid_argument("conv2d_transpose: need 4-d inputs");
  int n = gv.dim(0), co = gv.dim(1), oh = gv.dim(2), ow = gv.dim(3);
  int ci = wv.dim(1), k = wv.dim(2);
  if (wv.dim(0) != co) throw std::invalid_argument("conv2d_transpose: channel mismatch");
  if (detail::conv_out(out_h, k, stride, pad) != oh ||
      detail::conv_out(out_w, k, stride, pad) != ow)
    throw std::invalid_argument("conv2d_transpose: geometry mismatch");
  Tensor<T> out({n, ci, out_h, out_w});
  std::vector<T> col(static_cast<size_t>(ci) * k * k * oh * ow);
  for (int i = 0; i < n; ++i) {
    gemm(true, false, ci * k * k, oh * ow, co, T(1), wv.data.data(), ci * k * k,
         gv.data.data() + static_cast<int64_t>(i) * co * oh * ow, oh * ow, T(0), col.data(),
         oh * ow);
    detail::col2im(col.data(), ci, out_h, out_w, k, stride, pad,
                   out.data.data() + static_cast<int64_t>(i) * ci * out_h * out_w);
  }
  return make_op<T>(std::move(out), {g, w}, [g, w, stride, pad, k](const Var<T>& gc) {
    Var<T> gg = conv2d(gc, w, stride, pad);
    Var<T> gw = conv2d_wgrad(gc, g, stride, pad, k);
    return std::vector<Var<T>>{gg, gw};
  });
}

template <class T>
Var<T> conv2d_wgrad(const Var<T>& x, const Var<T>& g, int stride, int pad, int k) {
  const auto& xv = x.val();
  const auto& gv = g.val();
  int n = xv.dim(0), ci = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  int co = gv.dim(1), oh = gv.dim(2), ow = gv.dim(3);
  if (gv.dim(0) != n) throw std::invalid_argument("conv2d_wgrad: batch mismatch");
  Tensor<T> out({co, ci, k, k});
  std::vector<T> col(static_cast<size_t>(ci) * k * k * oh * ow);
  for (int i = 0; i < n; ++i) {
    detail::im2col(xv.data.data() + static_cast<int64_t>(i) * ci * h * w, ci, h, w, k, stride, pad,
                   col.data());
    gemm(false, true, co, ci * k * k, oh * ow, T(1),
         gv.data.data() + static_cast<int64_t>(i) * co * oh * ow, oh * ow, col.data(), oh * ow,
         T(1), out.data.data(), ci * k * k);
  }
  int out_h = h, out_w = w;
  return make_op<T>(std::move(out), {x, g}, [x, g, stride, pad, out_h, out_w](const Var<T>& gc) {
    Var<T> gx = conv2d_transpose(g, gc, stride, pad, out_h, out_w);
    Var<T> gg = conv2d(x, gc, stride, pad);
    return std::vector<Var<T>>{gx, gg};
  });
}

template <class T>
Var<T> bcast_batch(const Var<T>& a, int n);

// [N,...] -> [1,...]
template <class T>
Var<T> sum_batch(const Var<T>& a) {
  const auto& x = a.val();
  if (x.ndim() < 1 || x.dim(0) < 1) throw std::invalid_argument("sum_batch: need batched input");
  int n = x.dim(0);
  std::vector<int> shape = x.shape;
  shape[0] = 1;
  Tensor<T> out(shape);
  int64_t stride = out.size();
  for (int i = 0; i < n; ++i)
    for (int64_t j = 0; j < stride; ++j) out[j] += x[i * stride + j];
  return make_op<T>(std::move(out), {a},
                    [n](const Var<T>& g) { return std::vector<Var<T>>{bcast_batch(g, n)}; });
}

// [1,...] -> [N,...]
template <class T>
Var<T> bcast_batch(const Var<T>& a, int n) {
  const auto& x = a.val();
  if (x.ndim() < 1 || x.dim(0) != 1) throw std::invalid_argument("bcast_batch: need leading dim 1");
  std::vector<int> shape = x.shape;
  shape[0] = n;
  Tensor<T> out(shape);
  int64_t stride = x.size();
  for (int i = 0; i < n; ++i)
    for (int64_t j = 0; j < stride; ++j) out[i * stride + j] = x[j];
  return make_op<T>(std::move(out), {a},
                    [](const Var<T>& g) { return std::vector<Var<T>>{sum_batch(g)}; });
}

template <class T>
Var<T> pool_sum2x(const Var<T>& a);

// Nearest-neighbour 2x upsample; adjoint is 2x2 block summation.
template <class T>
Var<T> upsample2x(const Var<T>& a) {
  const auto& x = a.val();
  if (x.ndim() != 4) throw std::invalid_argument("upsample2x: need 4-d input");
  int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<T> out({n, c, 2 * h, 2 * w});
  for (int i = 0; i < n * c; ++i)
    for (int y = 0; y < 2 * h; ++y)
      for (int z = 0; z < 2 * w; ++z)
        out[(static_cast<int64_t>(i) * 2 * h + y) * 2 * w + z] =
            x[(static_cast<int64_t>(i) * h + y / 2) * w + z / 2];
  return make_op<T>(std::move(out), {a},
                    [](const Var<T>& g) { return std::vector<Var<T>>{pool_sum2x(g)}; });
}

template <class T>
Var<T> pool_sum2x(const Var<T>& a) {
  const auto& x = a.val();
  if (x.ndim() != 4 || x.dim(2) % 2 || x.dim(3) % 2)
    throw std::invalid_argument("pool_sum2x: need even 4-d input");
  int n = x.dim(0), c = x.dim(1), h = x.dim(2) / 2, w = x.dim(3) / 2;
  Tensor<T> out({n, c, h, w});
  for (int i = 0; i < n * c; ++i)
    for (int y = 0; y < 2 * h; ++y)
      for (int z = 0; z < 2 * w; ++z)
        out[(static_cast<int64_t>(i) * h + y / 2) * w + z / 2] +=
            x[(static_cast<int64_t>(i) * 2 * h + y) * 2 * w + z];
  return make_op<T>(std::move(out), {a},
                    [](const Var<T>& g) { return std::vector<Var<T>>{upsample2x(g)}; });
}

// ---------------------------------------------------------------------------
// grad: reverse sweep from `out`, restricted to nodes that can reach `wrt`.
// With create_graph the returned Vars carry their own graphs.
// ---------------------------------------------------------------------------

template <class T>
std::vector<Var<T>> grad(const Var<T>& out, const std::vector<Var<T>>& wrt,
                         bool create_graph = false) {
  using NodeP = Node<T>*;
  // topological order via iterative post-order DFS
  std::vector<NodeP> topo;
  std::unordered_map<NodeP, std::shared_ptr<Node<T>>> keep;
  {
    std::unordered_set<NodeP> visited;
    std::vector<std::pair<NodeP, size_t>> stack{{out.node.get(), 0}};
    keep[out.node.get()] = out.node;
    while (!stack.empty()) {
      auto& [n, idx] = stack.back();
      if (idx < n->inputs.size()) {
        NodeP child = n->inputs[idx].node.get();
        keep[child] = n->inputs[idx].node;
        ++idx;
        if (!visited.count(child)) {
          visited.insert(child);
          stack.push_back({child, 0});
        }
      } else {
        if (!visited.count(n)) visited.insert(n);
        topo.push_back(n);
        stack.pop_back();
      }
    }
  }
  // `relevant`: nodes through which gradient must flow to reach any wrt node
  std::unordered_set<NodeP> relevant;
  for (const auto& v : wrt) relevant.insert(v.node.get());
  for (NodeP n : topo) {  // topo is children-before-parents
    if (relevant.count(n)) continue;
    for (const auto& in : n->inputs)
      if (relevant.count(in.node.get())) {
        relevant.insert(n);
        break;
      }
  }

  std::unordered_map<NodeP, Var<T>> cot;
  cot[out.node.get()] = make_const(Tensor<T>::ones(out.shape()));
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    NodeP n = *it;
    if (!n->backward || !relevant.count(n)) continue;
    auto ci = cot.find(n);
    if (ci == cot.end()) continue;
    std::vector<Var<T>> gs = n->backward(ci->second);
    for (size_t i = 0; i < n->inputs.size(); ++i) {
      NodeP in = n->inputs[i].node.get();
      if (!relevant.count(in) || !gs[i].defined()) continue;
      auto slot = cot.find(in);
      if (slot == cot.end())
        cot[in] = gs[i];
      else
        slot->second = add(slot->second, gs[i]);
    }
  }

  std::vector<Var<T>> result;
  result.reserve(wrt.size());
  for (const auto& v : wrt) {
    auto it = cot.find(v.node.get());
    if (it == cot.end())
      result.push_back(make_const(Tensor<T>::zeros(v.shape())));
    else
      result.push_back(create_graph ? it->second : detach(it->second));
  }
  return result;
}

}  // namespace cisnet
