#include <set>

#include "cisnet/extractor.hpp"
#include "cisnet/message_mapping.hpp"
#include "doctest.h"

using namespace cisnet;
using D = double;

static std::mt19937_64 rng(7);

TEST_CASE("encode_bits sign mapping") {
  Tensor<D> v = encode_bits<D>(SecretMessage({1, 0, 1}));
  CHECK(v.data == std::vector<D>{1.0, -1.0, 1.0});
  Tensor<D> z = encode_bits<D>(SecretMessage(std::vector<uint8_t>(16, 0)));
  for (auto x : z.data) CHECK(x == -1.0);
}

TEST_CASE("encode/decide round trip is exhaustive for 8 bits") {
  for (int m = 0; m < 256; ++m) {
    std::vector<uint8_t> bits(8);
    for (int i = 0; i < 8; ++i) bits[static_cast<size_t>(i)] = (m >> i) & 1;
    SecretMessage msg(bits);
    Tensor<D> enc = encode_bits<D>(msg);
    CHECK(decide_bits(enc) == msg);
  }
}

TEST_CASE("encode_bits is a bijection for 10-bit messages") {
  std::set<std::vector<D>> seen;
  for (int m = 0; m < 1024; ++m) {
    std::vector<uint8_t> bits(10);
    for (int i = 0; i < 10; ++i) bits[static_cast<size_t>(i)] = (m >> i) & 1;
    seen.insert(encode_bits<D>(SecretMessage(bits)).data);
  }
  CHECK(seen.size() == 1024);
}

TEST_CASE("message validation") {
  CHECK_THROWS(SecretMessage(std::vector<uint8_t>{}));
  CHECK_THROWS(SecretMessage(std::vector<uint8_t>(65, 0)));
  CHECK_THROWS(SecretMessage(std::vector<uint8_t>{0, 2}));
  CHECK_THROWS(SecretMessage::parse("01x"));
  CHECK(SecretMessage::parse("0110").to_string() == "0110");
}

TEST_CASE("map_message determinism and dimension checks") {
  MappingConfig cfg;
  cfg.n_bits = 8;
  cfg.latent_dim = 16;
  cfg.width = 16;
  ParamStore<D> store;
  MappingNetwork<D> net(store, cfg, rng);
  Tensor<D> sig = encode_bits<D>(SecretMessage::random(8, rng));
  Tensor<D> a = net.map_message(make_const(sig)).val();
  Tensor<D> b = net.map_message(make_const(sig)).val();
  CHECK(a.data == b.data);
  CHECK(a.shape == std::vector<int>{1, 16});
  Tensor<D> wrong({1, 5});
  CHECK_THROWS(net.map_message(make_const(wrong)));
}

TEST_CASE("zero parameters give the zero latent") {
  MappingConfig cfg;
  cfg.n_bits = 4;
  cfg.latent_dim = 8;
  cfg.width = 8;
  cfg.expression = true;
  ParamStore<D> store;
  MappingNetwork<D> net(store, cfg, rng);
  for (auto& p : store.params) {
    std::fill(p->value.data.begin(), p->value.data.end(), 0.0);
    p->refresh();
  }
  Tensor<D> sig = encode_bits<D>(SecretMessage({1, 0, 1, 1}));
  Tensor<D> zb = net.map_message(make_const(sig)).val();
  for (auto v : zb.data) CHECK(v == 0.0);
  Tensor<D> oh = onehot_batch<D>({2});
  Tensor<D> zl = net.map_expression(make_const(oh)).val();
  for (auto v : zl.data) CHECK(v == 0.0);
  Var<D> z = make_const(Tensor<D>::ones({1, 8}));
  Tensor<D> zf = net.fuse(z, z).val();
  for (auto v : zf.data) CHECK(v == 0.0);
}

TEST_CASE("single linear layer with identity-prefix weights") {
  MappingConfig cfg;
  cfg.n_bits = 2;
  cfg.latent_dim = 6;
  cfg.depth = 1;
  ParamStore<D> store;
  MappingNetwork<D> net(store, cfg, rng);
  auto w = store.find("map.bit.0.w");
  std::fill(w->value.data.begin(), w->value.data.end(), 0.0);
  w->value.at(0, 0) = 1.0;  // identity prefix
  w->value.at(1, 1) = 1.0;
  auto b = store.find("map.bit.0.b");
  std::fill(b->value.data.begin(), b->value.data.end(), 0.0);
  store.refresh_leaves();
  Tensor<D> sig({1, 2}, {1.0, -1.0});
  Tensor<D> z = net.map_message(make_const(sig)).val();
  CHECK(z.data == std::vector<D>{1.0, -1.0, 0.0, 0.0, 0.0, 0.0});
}

TEST_CASE("one-hot expression selects a weight row") {
  MappingConfig cfg;
  cfg.n_bits = 2;
  cfg.latent_dim = 4;
  cfg.depth = 1;
  cfg.expression = true;
  ParamStore<D> store;
  MappingNetwork<D> net(store, cfg, rng);
  auto w = store.find("map.expr.0.w");  // [4,7]
  auto b = store.find("map.expr.0.b");
  Tensor<D> z = net.map_expression(make_const(onehot_batch<D>({3}))).val();
  for (int j = 0; j < 4; ++j)
    CHECK(z[j] == doctest::Approx(w->value.at(j, 3) + b->value[j]).epsilon(1e-12));
}

TEST_CASE("fuse is asymmetric under swapped inputs") {
  MappingConfig cfg;
  cfg.n_bits = 4;
  cfg.latent_dim = 8;
  cfg.width = 8;
  cfg.expression = true;
  ParamStore<D> store;
  MappingNetwork<D> net(store, cfg, rng);
  Var<D> za = make_const(randn<D>({1, 8}, rng));
  Var<D> zb = make_const(randn<D>({1, 8}, rng));
  Tensor<D> ab = net.fuse(za, zb).val();
  Tensor<D> ba = net.fuse(zb, za).val();
  D diff = 0;
  for (int64_t i = 0; i < ab.size(); ++i) diff += std::abs(ab[i] - ba[i]);
  CHECK(diff > 1e-6);
}

TEST_CASE("broadcast_latent copies are equal and independent") {
  Var<D> z = make_const(randn<D>({1, 8}, rng));
  CHECK_THROWS(broadcast_latent(z, 0));
  auto one = broadcast_latent(z, 1);
  CHECK(one.size() == 1);
  auto eight = broadcast_latent(z, 8);
  CHECK(eight.size() == 8);
  for (const auto& c : eight) CHECK(c.val().data == z.val().data);
  // value semantics: mutating one copy's tensor leaves the others intact
  Tensor<D> mutated = eight[0].val();
  mutated[0] += 100.0;
  CHECK(eight[1].val()[0] == z.val()[0]);
}

TEST_CASE("distinct messages map to distinct latents") {
  MappingConfig cfg;
  cfg.n_bits = 16;
  cfg.latent_dim = 32;
  cfg.width = 32;
  ParamStore<D> store;
  MappingNetwork<D> net(store, cfg, rng);
  int collisions = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    SecretMessage a = SecretMessage::random(16, rng);
    SecretMessage b = SecretMessage::random(16, rng);
    if (a == b) continue;
    Tensor<D> za = net.map_message(make_const(encode_bits<D>(a))).val();
    Tensor<D> zb = net.map_message(make_const(encode_bits<D>(b))).val();
    D dist = 0;
    for (int64_t i = 0; i < za.size(); ++i) dist += (za[i] - zb[i]) * (za[i] - zb[i]);
    if (std::sqrt(dist) < 1e-9) ++collisions;
  }
  CHECK(collisions == 0);
}
