#pragma once

#include "cisnet/generator.hpp"
#include "cisnet/nn.hpp"

namespace cisnet {

struct AdvConfig {
  std::vector<int> channels{64, 128, 256, 512};
  bool attribute_head = false;
  int n_attributes = kNumExpressions;
};

// Shared-trunk critic: 4 conv layers (stride 2 from the second on), a linear
// realness head and an optional linear attribute head.
template <class T>
struct Adversary {
  AdvConfig cfg;
  std::vector<Conv2d<T>> trunk;
  Linear<T> src_head;
  Linear<T> att_head;
  int flat_dim = 0;

  Adversary() = default;
  Adversary(ParamStore<T>& store, const AdvConfig& c, std::mt19937_64& rng) : cfg(c) {
    if (cfg.channels.size() != 4) throw std::invalid_argument("adversary: need 4 channel counts");
    int in = 3;
    int res = kImageSize;
    for (int i = 0; i < 4; ++i) {
      int stride = i == 0 ? 1 : 2;
      trunk.emplace_back(store, "adv.c" + std::to_string(i), in, cfg.channels[i], 3, stride, 1,
                         rng);
      in = cfg.channels[i];
      if (stride == 2) res /= 2;
    }
    flat_dim = in * res * res;
    src_head = Linear<T>(store, "adv.src", flat_dim, 1, rng);
    if (cfg.attribute_head)
      att_head = Linear<T>(store, "adv.att", flat_dim, cfg.n_attributes, rng);
  }

  struct Out {
    Var<T> d_src;       // [N,1]
    Var<T> att_logits;  // [N,7]; undefined when the attribute head is off
  };

  Out forward(const Var<T>& img) const {
    const auto& s = img.val();
    if (s.ndim() != 4 || s.dim(1) != 3 || s.dim(2) != kImageSize || s.dim(3) != kImageSize)
      throw std::invalid_argument("adversary: expected [N,3,32,32] input, got " + s.shape_str());
    Var<T> x = img;
    for (const auto& conv : trunk) x = leaky_relu(conv.forward(x), T(0.2));
    Var<T> flat = reshape(x, {s.dim(0), flat_dim});
    Out out;
    out.d_src = src_head.forward(flat);
    if (cfg.attribute_head) out.att_logits = att_head.forward(flat);
    return out;
  }
};

// L_advd = -E[D(real)] + E[D(fake)]
template <class T>
Var<T> wgan_d_loss(const Var<T>& real_scores, const Var<T>& fake_scores) {
  if (real_scores.val().size() == 0 || fake_scores.val().size() == 0)
    throw std::invalid_argument("wgan_d_loss: empty score list");
  return add(neg(mean_all(real_scores)), mean_all(fake_scores));
}

// L_advg = -E[D(fake)]
template <class T>
Var<T> wgan_g_loss(const Var<T>& fake_scores) {
  if (fake_scores.val().size() == 0) throw std::invalid_argument("wgan_g_loss: empty score list");
  return neg(mean_all(fake_scores));
}

// convenience overloads for plain score lists
template <class T>
T wgan_d_loss(const std::vector<T>& real, const std::vector<T>& fake) {
  return wgan_d_loss(make_const(Tensor<T>({static_cast<int>(real.size()), 1}, real)),
                     make_const(Tensor<T>({static_cast<int>(fake.size()), 1}, fake)))
      .val()[0];
}
template <class T>
T wgan_g_loss(const std::vector<T>& fake) {
  return wgan_g_loss(make_const(Tensor<T>({static_cast<int>(fake.size()), 1}, fake))).val()[0];
}

// lambda * E[(||grad_xhat D(xhat)||_2 - 1)^2], xhat = alpha*real + (1-alpha)*fake
// with one alpha per batch element. The returned Var keeps the graph into the
// critic parameters (double backprop).
template <class T>
Var<T> gradient_penalty(const Adversary<T>& adv, const Tensor<T>& real, const Tensor<T>& fake,
                        T lambda_gp, std::mt19937_64& rng) {
  if (real.shape != fake.shape)
    throw std::invalid_argument("gradient_penalty: batch shape mismatch " + real.shape_str() +
                                " vs " + fake.shape_str());
  int n = real.dim(0);
  Tensor<T> mix = real;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  int64_t stride = real.size() / n;
  for (int i = 0; i < n; ++i) {
    T a = static_cast<T>(uni(rng));
    for (int64_t j = 0; j < stride; ++j)
      mix[i * stride + j] = a * real[i * stride + j] + (T(1) - a) * fake[i * stride + j];
  }
  Var<T> xhat = make_leaf(std::move(mix));
  Var<T> scores = adv.forward(xhat).d_src;
  Var<T> gx = grad(sum_all(scores), {xhat}, /*create_graph=*/true)[0];
  Var<T> nrm = sqrt_v(add_scalar(sum_per_sample(square(gx)), T(1e-12)));
  return scale(mean_all(square(add_scalar(nrm, T(-1)))), lambda_gp);
}

// Eq-mean NLL of the true labels under softmax of the attribute logits.
template <class T>
Var<T> att_d_loss(const Var<T>& att_logits_real, const std::vector<int>& labels) {
  return softmax_nll(att_logits_real, labels);
}

template <class T>
Var<T> att_g_loss(const Var<T>& att_logits_fake, const std::vector<int>& target_labels) {
  return softmax_nll(att_logits_fake, target_labels);
}

}  // namespace cisnet
