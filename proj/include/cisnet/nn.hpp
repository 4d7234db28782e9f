#pragma once

#include <memory>
#include <string>
#include <vector>

#include "cisnet/autodiff.hpp"

namespace cisnet {

// A named trainable tensor with Adam state. The cached leaf Var is refreshed
// by ParamStore after every optimizer step or checkpoint load; forward passes
// read the cached leaf so gradients can be collected per parameter.
template <class T>
struct ParamTensor {
  std::string name;
  Tensor<T> value;
  Tensor<T> adam_m, adam_v;
  Var<T> leaf;

  void refresh() { leaf = make_leaf(value); }
};

template <class T>
using PParam = std::shared_ptr<ParamTensor<T>>;

template <class T>
struct ParamStore {
  std::vector<PParam<T>> params;
  int64_t adam_step = 0;

  PParam<T> add(std::string name, Tensor<T> init) {
    auto p = std::make_shared<ParamTensor<T>>();
    p->name = std::move(name);
    p->value = std::move(init);
    p->adam_m = Tensor<T>::zeros(p->value.shape);
    p->adam_v = Tensor<T>::zeros(p->value.shape);
    p->refresh();
    params.push_back(p);
    return p;
  }

  PParam<T> find(const std::string& name) const {
    for (const auto& p : params)
      if (p->name == name) return p;
    return nullptr;
  }

  std::vector<Var<T>> leaves() const {
    std::vector<Var<T>> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(p->leaf);
    return out;
  }

  void refresh_leaves() {
    for (auto& p : params) p->refresh();
  }

  int64_t total_scalars() const {
    int64_t n = 0;
    for (const auto& p : params) n += p->value.size();
    return n;
  }

  void adam_update(const std::vector<Var<T>>& grads, T lr, T beta1 = T(0.9), T beta2 = T(0.999),
                   T eps = T(1e-8)) {
    ++adam_step;
    T bc1 = T(1) - std::pow(beta1, static_cast<T>(adam_step));
    T bc2 = T(1) - std::pow(beta2, static_cast<T>(adam_step));
    for (size_t i = 0; i < params.size(); ++i) {
      auto& p = *params[i];
      const Tensor<T>& g = grads[i].val();
      for (int64_t j = 0; j < p.value.size(); ++j) {
        p.adam_m[j] = beta1 * p.adam_m[j] + (T(1) - beta1) * g[j];
        p.adam_v[j] = beta2 * p.adam_v[j] + (T(1) - beta2) * g[j] * g[j];
        T mh = p.adam_m[j] / bc1;
        T vh = p.adam_v[j] / bc2;
        p.value[j] -= lr * mh / (std::sqrt(vh) + eps);
      }
    }
    refresh_leaves();
  }
};

// Kaiming-style fan-in scaled normal init.
template <class T>
inline Tensor<T> init_weight(std::vector<int> shape, int fan_in, std::mt19937_64& rng) {
  return randn<T>(std::move(shape), rng, static_cast<T>(std::sqrt(2.0 / fan_in)));
}

template <class T>
struct Linear {
  PParam<T> w, b;  // w [out,in], b [out]
  int in = 0, out = 0;

  Linear() = default;
  Linear(ParamStore<T>& store, const std::string& name, int in_, int out_, std::mt19937_64& rng)
      : in(in_), out(out_) {
    w = store.add(name + ".w", init_weight<T>({out, in}, in, rng));
    b = store.add(name + ".b", Tensor<T>::zeros({out}));
  }

  Var<T> forward(const Var<T>& x) const {
    if (x.val().ndim() != 2 || x.val().dim(1) != in)
      throw std::invalid_argument("linear " + w->name + ": expected [N," + std::to_string(in) +
                                  "], got " + x.val().shape_str());
    Var<T> y = matmul(x, w->leaf, false, true);
    return add(y, tile_rows(b->leaf, x.val().dim(0)));
  }

  // [K] -> [N,K]
  static Var<T> tile_rows(const Var<T>& v, int n) {
    int k = v.val().dim(0);
    return bcast_like(reshape(v, {1, k}), n);
  }

  // [1,K] -> [N,K]
  static Var<T> bcast_like(const Var<T>& v, int n) {
    const auto& x = v.val();
    int k = x.dim(1);
    Tensor<T> out_t({n, k});
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < k; ++j) out_t.at(i, j) = x.at(0, j);
    return make_op<T>(std::move(out_t), {v}, [](const Var<T>& g) {
      // sum over rows back to [1,K]
      const auto& gv = g.val();
      int rn = gv.dim(0), rk = gv.dim(1);
      Var<T> ones = make_const(Tensor<T>::ones({1, rn}));
      (void)rk;
      return std::vector<Var<T>>{matmul(ones, g)};
    });
  }
};

template <class T>
struct Conv2d {
  PParam<T> w, b;  // w [out,in,k,k], b [out]
  int stride = 1, pad = 1, k = 3, in = 0, out = 0;

  Conv2d() = default;
  Conv2d(ParamStore<T>& store, const std::string& name, int in_, int out_, int k_, int stride_,
         int pad_, std::mt19937_64& rng)
      : stride(stride_), pad(pad_), k(k_), in(in_), out(out_) {
    w = store.add(name + ".w", init_weight<T>({out, in, k, k}, in * k * k, rng));
    b = store.add(name + ".b", Tensor<T>::zeros({out}));
  }

  Var<T> forward(const Var<T>& x) const {
    Var<T> y = conv2d(x, w->leaf, stride, pad);
    const auto& s = y.val();
    return add(y, bcast_channel(b->leaf, s.dim(0), s.dim(2), s.dim(3)));
  }
};

// Transposed convolution layer (k=4, stride=2, pad=1 doubles resolution).
template <class T>
struct ConvTranspose2d {
  PParam<T> w, b;  // w [in,out,k,k] stored as conv weight [in=co_of_conv? ] -- see forward
  int stride = 2, pad = 1, k = 4, in = 0, out = 0;

  ConvTranspose2d() = default;
  ConvTranspose2d(ParamStore<T>& store, const std::string& name, int in_, int out_, int k_,
                  int stride_, int pad_, std::mt19937_64& rng)
      : stride(stride_), pad(pad_), k(k_), in(in_), out(out_) {
    // conv2d_transpose consumes a conv-layout weight [Ci_of_output? ...]:
    // conv maps out->in here, so the stored weight is [in, out, k, k].
    w = store.add(name + ".w", init_weight<T>({in, out, k, k}, in * k * k / (stride * stride), rng));
    b = store.add(name + ".b", Tensor<T>::zeros({out}));
  }

  Var<T> forward(const Var<T>& x) const {
    const auto& s = x.val();
    int oh = (s.dim(2) - 1) * stride - 2 * pad + k;
    int ow = (s.dim(3) - 1) * stride - 2 * pad + k;
    Var<T> y = conv2d_transpose(x, w->leaf, stride, pad, oh, ow);
    return add(y, bcast_channel(b->leaf, s.dim(0), oh, ow));
  }
};

// mean over batch of per-sample L2 norms; eps keeps sqrt differentiable at 0
template <class T>
inline Var<T> batch_l2_mean(const Var<T>& diff, T eps = T(1e-12)) {
  return mean_all(sqrt_v(add_scalar(sum_per_sample(square(diff)), eps)));
}

// Softmax cross-entropy with integer labels; logits [N,K].
template <class T>
inline Var<T> softmax_nll(const Var<T>& logits, const std::vector<int>& labels) {
  const auto& x = logits.val();
  int n = x.dim(0), kk = x.dim(1);
  if (static_cast<int>(labels.size()) != n)
    throw std::invalid_argument("softmax_nll: label count mismatch");
  // row max detached for stability; subtracting a constant leaves grads intact
  Tensor<T> mx({n, 1});
  for (int i = 0; i < n; ++i) {
    T m = x.at(i, 0);
    for (int j = 1; j < kk; ++j) m = std::max(m, x.at(i, j));
    mx[i] = m;
  }
  Var<T> shifted = sub(logits, bcast_row(make_const(mx), kk));
  Var<T> lse = add(log_v(row_sum(exp_v(shifted))), make_const(mx));
  Var<T> sel = gather_rows(logits, labels);
  return mean_all(sub(lse, sel));
}

}  // namespace cisnet
