#pragma once

#include "cisnet/generator.hpp"
#include "cisnet/message_mapping.hpp"
#include "cisnet/nn.hpp"

namespace cisnet {

struct ExtConfig {
  int n_bits = 16;
  std::vector<int> channels{64, 128, 256, 512};
  int fc_width = 512;
};

// Maps an attacked image back to bit estimates in the {-1,+1} domain.
// Conv stack (stride 2 throughout) followed by two fully connected layers
// with a linear output.
template <class T>
struct Extractor {
  ExtConfig cfg;
  std::vector<Conv2d<T>> convs;
  Linear<T> fc1, fc2;
  int flat_dim = 0;

  Extractor() = default;
  Extractor(ParamStore<T>& store, const ExtConfig& c, std::mt19937_64& rng) : cfg(c) {
    if (cfg.channels.size() != 4) throw std::invalid_argument("extractor: need 4 channel counts");
    int in = 3;
    int res = kImageSize;
    for (int i = 0; i < 4; ++i) {
      convs.emplace_back(store, "ext.c" + std::to_string(i), in, cfg.channels[i], 3, 2, 1, rng);
      in = cfg.channels[i];
      res /= 2;
    }
    flat_dim = in * res * res;
    fc1 = Linear<T>(store, "ext.fc1", flat_dim, cfg.fc_width, rng);
    fc2 = Linear<T>(store, "ext.fc2", cfg.fc_width, cfg.n_bits, rng);
  }

  // img [N,3,32,32] -> estimates [N, n_bits]
  Var<T> forward(const Var<T>& img) const {
    const auto& s = img.val();
    if (s.ndim() != 4 || s.dim(1) != 3 || s.dim(2) != kImageSize || s.dim(3) != kImageSize)
      throw std::invalid_argument("extractor: expected [N,3,32,32] input, got " + s.shape_str());
    Var<T> x = img;
    for (const auto& conv : convs) x = leaky_relu(conv.forward(x), T(0.2));
    Var<T> flat = reshape(x, {s.dim(0), flat_dim});
    return fc2.forward(leaky_relu(fc1.forward(flat), T(0.2)));
  }
};

// L_e: per-sample Euclidean norm of (target - estimate), averaged over the
// batch (root-sum-square, not MSE).
template <class T>
Var<T> extractor_loss(const Var<T>& target, const Var<T>& estimate) {
  require_same(target, estimate, "extractor_loss");
  return batch_l2_mean(sub(target, estimate));
}

// estimate > 0 -> 1, otherwise 0; an exact zero decides as 1
template <class T>
inline SecretMessage decide_bits(const Tensor<T>& estimate_row) {
  std::vector<uint8_t> bits;
  bits.reserve(estimate_row.data.size());
  for (const T& v : estimate_row.data) bits.push_back(v >= T(0) ? 1 : 0);
  return SecretMessage(std::move(bits));
}

inline double bit_accuracy(const SecretMessage& truth, const SecretMessage& decoded) {
  if (truth.bits.size() != decoded.bits.size())
    throw std::invalid_argument("bit_accuracy: length mismatch");
  int match = 0;
  for (size_t i = 0; i < truth.bits.size(); ++i)
    if (truth.bits[i] == decoded.bits[i]) ++match;
  return static_cast<double>(match) / static_cast<double>(truth.bits.size());
}

}  // namespace cisnet
