#pragma once

#include <cstdint>

#include "cisnet/nn.hpp"

namespace cisnet {

constexpr int kNumExpressions = 7;

inline const char* kExpressionNames[kNumExpressions] = {
    "surprise", "sadness", "neutral", "joy", "anger", "fear", "disgust"};

// Fixed-length payload; each element is 0 or 1.
struct SecretMessage {
  std::vector<uint8_t> bits;

  SecretMessage() = default;
  explicit SecretMessage(std::vector<uint8_t> b) : bits(std::move(b)) { validate(); }

  int n_bits() const { return static_cast<int>(bits.size()); }

  void validate() const {
    if (bits.empty() || bits.size() > 64)
      throw std::invalid_argument("secret message must have 1..64 bits");
    for (uint8_t b : bits)
      if (b > 1) throw std::invalid_argument("secret message bits must be 0 or 1");
  }

  static SecretMessage random(int n, std::mt19937_64& rng) {
    std::vector<uint8_t> b(n);
    for (auto& v : b) v = static_cast<uint8_t>(rng() & 1);
    return SecretMessage(std::move(b));
  }

  static SecretMessage parse(const std::string& s) {
    std::vector<uint8_t> b;
    b.reserve(s.size());
    for (char c : s) {
      if (c != '0' && c != '1') throw std::invalid_argument("bit string must contain only 0/1");
      b.push_back(static_cast<uint8_t>(c - '0'));
    }
    return SecretMessage(std::move(b));
  }

  std::string to_string() const {
    std::string s;
    for (uint8_t b : bits) s.push_back(static_cast<char>('0' + b));
    return s;
  }

  bool operator==(const SecretMessage& o) const { return bits == o.bits; }
};

struct ExpressionLabel {
  int index = 0;  // 0..6, see kExpressionNames

  explicit ExpressionLabel(int i) : index(i) {
    if (i < 0 || i >= kNumExpressions) throw std::invalid_argument("expression index out of range");
  }
  std::vector<double> onehot() const {
    std::vector<double> v(kNumExpressions, 0.0);
    v[static_cast<size_t>(index)] = 1.0;
    return v;
  }
  static ExpressionLabel parse(const std::string& name) {
    for (int i = 0; i < kNumExpressions; ++i)
      if (name == kExpressionNames[i]) return ExpressionLabel(i);
    throw std::invalid_argument("unknown expression: " + name);
  }
};

// {0,1} -> {-1,+1}, the input domain of the bit mapping network.
template <class T>
inline Tensor<T> encode_bits(const SecretMessage& msg) {
  msg.validate();
  Tensor<T> t({1, msg.n_bits()});
  for (int i = 0; i < msg.n_bits(); ++i) t[i] = msg.bits[static_cast<size_t>(i)] ? T(1) : T(-1);
  return t;
}

// batch variant: one row per message
template <class T>
inline Tensor<T> encode_bits_batch(const std::vector<SecretMessage>& msgs) {
  if (msgs.empty()) throw std::invalid_argument("encode_bits_batch: empty batch");
  int n = static_cast<int>(msgs.size());
  int k = msgs[0].n_bits();
  Tensor<T> t({n, k});
  for (int i = 0; i < n; ++i) {
    if (msgs[static_cast<size_t>(i)].n_bits() != k)
      throw std::invalid_argument("encode_bits_batch: ragged bit lengths");
    for (int j = 0; j < k; ++j)
      t.at(i, j) = msgs[static_cast<size_t>(i)].bits[static_cast<size_t>(j)] ? T(1) : T(-1);
  }
  return t;
}

template <class T>
inline Tensor<T> onehot_batch(const std::vector<int>& labels) {
  int n = static_cast<int>(labels.size());
  Tensor<T> t({n, kNumExpressions});
  for (int i = 0; i < n; ++i) {
    if (labels[static_cast<size_t>(i)] < 0 || labels[static_cast<size_t>(i)] >= kNumExpressions)
      throw std::invalid_argument("label out of range");
    t.at(i, labels[static_cast<size_t>(i)]) = T(1);
  }
  return t;
}

struct MappingConfig {
  int n_bits = 16;
  int latent_dim = 512;
  int width = 512;
  int depth = 4;       // fully connected layers in bit/expression mapping networks
  int fuse_depth = 2;  // layers in the fusion network F
  bool expression = false;
};

// Bit mapping network, optional expression mapping network, and fusion
// network F. Hidden layers use leaky-rectifier activations; the output layer
// is linear.
template <class T>
struct MappingNetwork {
  MappingConfig cfg;
  std::vector<Linear<T>> bit_layers;
  std::vector<Linear<T>> expr_layers;
  std::vector<Linear<T>> fuse_layers;

  MappingNetwork() = default;
  MappingNetwork(ParamStore<T>& store, const MappingConfig& c, std::mt19937_64& rng) : cfg(c) {
    build_stack(store, "map.bit", cfg.n_bits, cfg.depth, bit_layers, rng);
    if (cfg.expression) {
      build_stack(store, "map.expr", kNumExpressions, cfg.depth, expr_layers, rng);
      build_stack(store, "map.fuse", 2 * cfg.latent_dim, cfg.fuse_depth, fuse_layers, rng);
    }
  }

  void build_stack(ParamStore<T>& store, const std::string& name, int in, int depth,
                   std::vector<Linear<T>>& layers, std::mt19937_64& rng) {
    for (int i = 0; i < depth; ++i) {
      int lin = i == 0 ? in : cfg.width;
      int lout = i == depth - 1 ? cfg.latent_dim : cfg.width;
      layers.emplace_back(store, name + "." + std::to_string(i), lin, lout, rng);
    }
  }

  static Var<T> run_stack(const std::vector<Linear<T>>& layers, Var<T> x) {
    for (size_t i = 0; i < layers.size(); ++i) {
      x = layers[i].forward(x);
      if (i + 1 < layers.size()) x = leaky_relu(x, T(0.2));
    }
    return x;
  }

  // signal [N, n_bits] in {-1,+1} -> z_b [N, latent]
  Var<T> map_message(const Var<T>& signal) const {
    if (signal.val().ndim() != 2 || signal.val().dim(1) != cfg.n_bits)
      throw std::invalid_argument("map_message: expected [N," + std::to_string(cfg.n_bits) +
                                  "], got " + signal.val().shape_str());
    return run_stack(bit_layers, signal);
  }

  // onehot [N, 7] -> z_l [N, latent]
  Var<T> map_expression(const Var<T>& onehot) const {
    if (!cfg.expression) throw std::logic_error("map_expression: expression mode disabled");
    if (onehot.val().ndim() != 2 || onehot.val().dim(1) != kNumExpressions)
      throw std::invalid_argument("map_expression: expected [N,7], got " +
                                  onehot.val().shape_str());
    return run_stack(expr_layers, onehot);
  }

  // z_f = F([z_b ; z_l])
  Var<T> fuse(const Var<T>& z_b, const Var<T>& z_l) const {
    if (!cfg.expression) throw std::logic_error("fuse: expression mode disabled");
    if (z_b.val().dim(1) != cfg.latent_dim || z_l.val().dim(1) != cfg.latent_dim)
      throw std::invalid_argument("fuse: latent dim mismatch");
    return run_stack(fuse_layers, concat_cols(z_b, z_l));
  }

  // final latent for a batch of messages (+ labels in expression mode)
  Var<T> forward(const Var<T>& signal, const Var<T>& onehot = {}) const {
    Var<T> z = map_message(signal);
    if (cfg.expression) {
      if (!onehot.defined()) throw std::invalid_argument("expression mode requires labels");
      z = fuse(z, map_expression(onehot));
    }
    return z;
  }
};

// t identical copies of z, each its own graph node so downstream per-layer
// transforms stay independent.
template <class T>
inline std::vector<Var<T>> broadcast_latent(const Var<T>& z, int t) {
  if (t < 1) throw std::invalid_argument("broadcast_latent: t must be >= 1");
  std::vector<Var<T>> out;
  out.reserve(static_cast<size_t>(t));
  for (int i = 0; i < t; ++i) out.push_back(scale(z, T(1)));
  return out;
}

}  // namespace cisnet
