#pragma once

#include "cisnet/message_mapping.hpp"
#include "cisnet/nn.hpp"

namespace cisnet {

constexpr int kImageSize = 32;
constexpr int kBaseSize = 4;
constexpr int kNumStages = 4;     // resolutions 4, 8, 16, 32
constexpr int kUnitsPerStage = 2;
constexpr int kNumStyleLayers = kNumStages * kUnitsPerStage;  // t = 8

// AdaIN: per-channel spatial whitening followed by style scale and bias.
// x [N,C,H,W], y_s/y_b [N,C]. Statistics are population moments over the
// spatial extent; eps stabilizes the division for near-constant channels.
template <class T>
Var<T> adain(const Var<T>& x, const Var<T>& y_s, const Var<T>& y_b, T eps = T(1e-8)) {
  const auto& s = x.val();
  if (s.ndim() != 4) throw std::invalid_argument("adain: need 4-d feature map");
  int n = s.dim(0), c = s.dim(1), h = s.dim(2), w = s.dim(3);
  if (y_s.val().shape != std::vector<int>{n, c} || y_b.val().shape != std::vector<int>{n, c})
    throw std::invalid_argument("adain: style shape mismatch, want [" + std::to_string(n) + "," +
                                std::to_string(c) + "]");
  T inv_hw = T(1) / static_cast<T>(h * w);
  Var<T> mu = scale(sum_hw(x), inv_hw);
  Var<T> xc = sub(x, bcast_hw(mu, h, w));
  Var<T> var = scale(sum_hw(square(xc)), inv_hw);
  // tiny floor inside the sqrt keeps its gradient finite on constant channels
  Var<T> sigma = add_scalar(sqrt_v(add_scalar(var, T(1e-20))), eps);
  Var<T> normed = divide(xc, bcast_hw(sigma, h, w));
  Var<T> ys4 = bcast_hw(reshape(y_s, {n, c, 1, 1}), h, w);
  Var<T> yb4 = bcast_hw(reshape(y_b, {n, c, 1, 1}), h, w);
  return add(mul(ys4, normed), yb4);
}

// x + w[c] * noise, the same single-channel noise map broadcast over channels.
// noise [N,1,H,W], w [C].
template <class T>
Var<T> inject_noise(const Var<T>& x, const Var<T>& w, const Tensor<T>& noise) {
  const auto& s = x.val();
  if (s.ndim() != 4) throw std::invalid_argument("inject_noise: need 4-d feature map");
  int n = s.dim(0), c = s.dim(1), h = s.dim(2), w_ = s.dim(3);
  if (noise.shape != std::vector<int>{n, 1, h, w_})
    throw std::invalid_argument("inject_noise: noise map shape mismatch");
  if (w.val().shape != std::vector<int>{c})
    throw std::invalid_argument("inject_noise: weight count must equal channels");
  Tensor<T> tiled({n, c, h, w_});
  for (int in = 0; in < n; ++in)
    for (int ic = 0; ic < c; ++ic)
      for (int j = 0; j < h * w_; ++j)
        tiled[((static_cast<int64_t>(in) * c + ic) * h * w_) + j] =
            noise[static_cast<int64_t>(in) * h * w_ + j];
  return add(x, mul(bcast_channel(w, n, h, w_), make_const(std::move(tiled))));
}

struct GenConfig {
  int latent_dim = 512;
  std::vector<int> channels{512, 256, 128, 64};  // at resolutions 4, 8, 16, 32
  bool deconv_last = false;  // transposed conv instead of upscale at the last upsample
  bool noise_injection = true;
};

// Style-based synthesis network: learned constant start tensor, per-stage
// conv -> noise -> AdaIN units, nearest-neighbour upscales, RGB head.
template <class T>
struct Generator {
  GenConfig cfg;
  PParam<T> constant;  // [1, c0, 4, 4]

  struct Unit {
    Conv2d<T> conv;
    PParam<T> noise_w;  // [C], zero-initialized
    Linear<T> affine;   // latent -> (y_s, y_b)
  };
  std::vector<Unit> units;          // kNumStyleLayers of them
  ConvTranspose2d<T> deconv;        // used for the last upsample when deconv_last
  Conv2d<T> rgb;                    // 1x1 conv to 3 channels

  Generator() = default;
  Generator(ParamStore<T>& store, const GenConfig& c, std::mt19937_64& rng) : cfg(c) {
    if (cfg.channels.size() != kNumStages)
      throw std::invalid_argument("generator: need one channel count per stage");
    constant = store.add("gen.constant",
                         randn<T>({1, cfg.channels[0], kBaseSize, kBaseSize}, rng));
    for (int stage = 0; stage < kNumStages; ++stage) {
      int cin = stage == 0 ? cfg.channels[0] : cfg.channels[stage - 1];
      for (int u = 0; u < kUnitsPerStage; ++u) {
        int cout = cfg.channels[stage];
        std::string name = "gen.s" + std::to_string(stage) + ".u" + std::to_string(u);
        Unit unit;
        unit.conv = Conv2d<T>(store, name + ".conv", u == 0 ? cin : cout, cout, 3, 1, 1, rng);
        unit.noise_w = store.add(name + ".noise_w", Tensor<T>::zeros({cout}));
        unit.affine = Linear<T>(store, name + ".affine", cfg.latent_dim, 2 * cout, rng);
        units.push_back(std::move(unit));
      }
    }
    if (cfg.deconv_last) {
      int cmid = cfg.channels[kNumStages - 2];
      deconv = ConvTranspose2d<T>(store, "gen.deconv", cmid, cmid, 4, 2, 1, rng);
    }
    rgb = Conv2d<T>(store, "gen.rgb", cfg.channels[kNumStages - 1], 3, 1, 1, 0, rng);
  }

  // y_s, y_b = T_k(z_k)
  std::pair<Var<T>, Var<T>> affine_style(int k, const Var<T>& z) const {
    const Unit& u = units.at(static_cast<size_t>(k));
    Var<T> y = u.affine.forward(z);
    int c = u.conv.out;
    return {slice_cols(y, 0, c), slice_cols(y, c, c)};
  }

  // Final feature map -> RGB image in [-1, 1].
  Var<T> to_rgb(const Var<T>& x) const {
    const auto& s = x.val();
    if (s.dim(2) != kImageSize || s.dim(3) != kImageSize)
      throw std::invalid_argument("to_rgb: expected " + std::to_string(kImageSize) +
                                  "-pixel feature map, got " + s.shape_str());
    return tanh_v(rgb.forward(x));
  }

  // latents: exactly t = kNumStyleLayers vectors [N, latent]. Noise maps are
  // drawn fresh from noise_rng, one per unit.
  Var<T> synthesize(const std::vector<Var<T>>& latents, std::mt19937_64& noise_rng) const {
    if (latents.size() != kNumStyleLayers)
      throw std::invalid_argument("synthesize: expected " + std::to_string(kNumStyleLayers) +
                                  " latents, got " + std::to_string(latents.size()));
    int n = latents[0].val().dim(0);
    Var<T> x = bcast_batch(constant->leaf, n);
    int layer = 0;
    for (int stage = 0; stage < kNumStages; ++stage) {
      if (stage > 0) {
        if (cfg.deconv_last && stage == kNumStages - 1)
          x = deconv.forward(x);
        else
          x = upsample2x(x);
      }
      for (int u = 0; u < kUnitsPerStage; ++u, ++layer) {
        const Unit& unit = units[static_cast<size_t>(layer)];
        x = leaky_relu(unit.conv.forward(x), T(0.2));
        if (cfg.noise_injection) {
          const auto& s = x.val();
          Tensor<T> noise = randn<T>({n, 1, s.dim(2), s.dim(3)}, noise_rng);
          x = inject_noise(x, unit.noise_w->leaf, noise);
        }
        auto [ys, yb] = affine_style(layer, latents[static_cast<size_t>(layer)]);
        x = adain(x, ys, yb);
        if (!x.val().all_finite())
          throw std::runtime_error("synthesize: non-finite values after layer " +
                                   std::to_string(layer));
      }
    }
    Var<T> img = to_rgb(x);
    if (!img.val().all_finite()) throw std::runtime_error("synthesize: non-finite RGB output");
    return img;
  }
};

}  // namespace cisnet
