#pragma once

#include "cisnet/evaluation.hpp"

namespace cisnet {

// The three fixed SRM high-pass kernels (spatial rich models filter bank),
// each with its standard divisor:
//   1) first-order horizontal difference [-1, 1]
//   2) 3x3 "SQUARE" second-order kernel, divisor 4
//   3) 5x5 "KV" kernel, divisor 12
namespace srm {

inline const double kFirstOrder[1 * 2] = {-1.0, 1.0};

inline const double kSquare[3 * 3] = {
    -1.0 / 4, 2.0 / 4, -1.0 / 4,  //
    2.0 / 4, -4.0 / 4, 2.0 / 4,   //
    -1.0 / 4, 2.0 / 4, -1.0 / 4,
};

inline const double kKV[5 * 5] = {
    -1.0 / 12, 2.0 / 12,  -2.0 / 12, 2.0 / 12,  -1.0 / 12,  //
    2.0 / 12,  -6.0 / 12, 8.0 / 12,  -6.0 / 12, 2.0 / 12,   //
    -2.0 / 12, 8.0 / 12,  -12.0 / 12, 8.0 / 12, -2.0 / 12,  //
    2.0 / 12,  -6.0 / 12, 8.0 / 12,  -6.0 / 12, 2.0 / 12,   //
    -1.0 / 12, 2.0 / 12,  -2.0 / 12, 2.0 / 12,  -1.0 / 12,
};

}  // namespace srm

namespace detail {

inline int reflect_index(int i, int n) {
  if (i < 0) return -i - 1;
  if (i >= n) return 2 * n - 1 - i;
  return i;
}

// correlate one plane with a kh x kw kernel, reflect padding, same size
template <class T>
inline std::vector<T> correlate_plane(const std::vector<T>& plane, int h, int w,
                                      const double* kernel, int kh, int kw) {
  std::vector<T> out(static_cast<size_t>(h) * w, T(0));
  int oy = kh / 2, ox = kw / 2;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int i = 0; i < kh; ++i)
        for (int j = 0; j < kw; ++j) {
          int yy = reflect_index(y + i - oy, h);
          int xx = reflect_index(x + j - ox, w);
          s += kernel[i * kw + j] * static_cast<double>(plane[static_cast<size_t>(yy) * w + xx]);
        }
      out[static_cast<size_t>(y) * w + x] = static_cast<T>(s);
    }
  return out;
}

}  // namespace detail

// [3,H,W] image -> [3,H,W] residual stack: the color-averaged plane filtered
// by each of the three SRM kernels.
template <class T>
inline Tensor<T> srm_residuals(const Tensor<T>& img) {
  if (img.ndim() != 3 || img.dim(0) != 3)
    throw std::invalid_argument("srm_residuals: need [3,H,W], got " + img.shape_str());
  int h = img.dim(1), w = img.dim(2);
  std::vector<T> gray(static_cast<size_t>(h) * w);
  int64_t hw = static_cast<int64_t>(h) * w;
  for (int64_t i = 0; i < hw; ++i)
    gray[static_cast<size_t>(i)] =
        (img[i] + img[hw + i] + img[2 * hw + i]) / T(3);
  Tensor<T> out({3, h, w});
  auto plane = [&](int p, const double* k, int kh, int kw) {
    std::vector<T> r = detail::correlate_plane(gray, h, w, k, kh, kw);
    std::copy(r.begin(), r.end(), out.data.begin() + p * hw);
  };
  plane(0, srm::kFirstOrder, 1, 2);
  plane(1, srm::kSquare, 3, 3);
  plane(2, srm::kKV, 5, 5);
  return out;
}

enum class DetectorArch { simple_cnn, srnet32 };

struct DetectorSpec {
  DetectorArch arch = DetectorArch::simple_cnn;
  uint64_t seed = 0;
  int64_t steps = 400;
  int batch = 32;
  double lr = 1e-3;
  double holdout_fraction = 0.2;
};

// Binary steganalysis classifier.
// simple_cnn (DM_C): 3 stride-2 convs + linear head.
// srnet32 (DM_S): SRM prefilter, stem conv, two residual blocks, two
// stride-2 reductions + linear head (the reference residual-learning
// topology with pooling reduced to fit 32x32).
template <class T>
struct Detector {
  DetectorArch arch = DetectorArch::simple_cnn;
  ParamStore<T> store;
  std::vector<Conv2d<T>> convs;
  Linear<T> head;
  int flat_dim = 0;

  Detector() = default;
  Detector(DetectorArch a, std::mt19937_64& rng) : arch(a) {
    if (arch == DetectorArch::simple_cnn) {
      convs.emplace_back(store, "det.c0", 3, 8, 3, 2, 1, rng);
      convs.emplace_back(store, "det.c1", 8, 16, 3, 2, 1, rng);
      convs.emplace_back(store, "det.c2", 16, 32, 3, 2, 1, rng);
      flat_dim = 32 * 4 * 4;
    } else {
      convs.emplace_back(store, "det.stem", 3, 12, 3, 1, 1, rng);
      convs.emplace_back(store, "det.r0a", 12, 12, 3, 1, 1, rng);
      convs.emplace_back(store, "det.r0b", 12, 12, 3, 1, 1, rng);
      convs.emplace_back(store, "det.r1a", 12, 12, 3, 1, 1, rng);
      convs.emplace_back(store, "det.r1b", 12, 12, 3, 1, 1, rng);
      convs.emplace_back(store, "det.d0", 12, 24, 3, 2, 1, rng);
      convs.emplace_back(store, "det.d1", 24, 32, 3, 2, 1, rng);
      flat_dim = 32 * 8 * 8;
    }
    head = Linear<T>(store, "det.head", flat_dim, 2, rng);
  }

  // batch [N,3,32,32] -> logits [N,2]; class 1 = stego
  Var<T> forward(const Var<T>& img) const {
    int n = img.val().dim(0);
    Var<T> x = img;
    if (arch == DetectorArch::simple_cnn) {
      for (const auto& c : convs) x = leaky_relu(c.forward(x), T(0.2));
    } else {
      x = leaky_relu(convs[0].forward(x), T(0.2));
      for (int blk = 0; blk < 2; ++blk) {
        Var<T> y = leaky_relu(convs[static_cast<size_t>(1 + 2 * blk)].forward(x), T(0.2));
        y = convs[static_cast<size_t>(2 + 2 * blk)].forward(y);
        x = leaky_relu(add(x, y), T(0.2));  // residual shortcut
      }
      x = leaky_relu(convs[5].forward(x), T(0.2));
      x = leaky_relu(convs[6].forward(x), T(0.2));
    }
    return head.forward(reshape(x, {n, flat_dim}));
  }

  // srnet32 sees SRM residuals, simple_cnn sees pixels
  Tensor<T> preprocess(const Tensor<T>& img) const {
    return arch == DetectorArch::srnet32 ? srm_residuals(img) : img;
  }

  int predict(const Tensor<T>& img) const {
    Tensor<T> pre = preprocess(img);
    Tensor<T> batched({1, 3, img.dim(1), img.dim(2)}, pre.data);
    Tensor<T> logits = forward(make_const(batched)).val();
    return logits[1] > logits[0] ? 1 : 0;
  }
};

namespace detail {

template <class T>
inline Tensor<T> stack_batch(const std::vector<const Tensor<T>*>& imgs) {
  int n = static_cast<int>(imgs.size());
  Tensor<T> out({n, 3, kImageSize, kImageSize});
  int64_t stride = out.size() / n;
  for (int i = 0; i < n; ++i)
    std::copy(imgs[static_cast<size_t>(i)]->data.begin(), imgs[static_cast<size_t>(i)]->data.end(),
              out.data.begin() + i * stride);
  return out;
}

}  // namespace detail

struct DetectorTrainResult {
  double holdout_accuracy = 0;
};

// pos = stego (label 1), neg = clean/baseline (label 0); a disjoint held-out
// split measures same-model detection accuracy.
template <class T>
DetectorTrainResult train_detector(Detector<T>& det, const std::vector<Tensor<T>>& pos,
                                   const std::vector<Tensor<T>>& neg, const DetectorSpec& spec) {
  if (pos.empty() || neg.empty()) throw std::invalid_argument("detector: empty image set");
  std::mt19937_64 rng(spec.seed);
  struct Item {
    const Tensor<T>* img;
    int label;
  };
  std::vector<Item> items;
  std::vector<Tensor<T>> preprocessed;
  preprocessed.reserve(pos.size() + neg.size());
  for (const auto& t : pos) preprocessed.push_back(det.preprocess(t));
  for (const auto& t : neg) preprocessed.push_back(det.preprocess(t));
  for (size_t i = 0; i < pos.size(); ++i) items.push_back({&preprocessed[i], 1});
  for (size_t i = 0; i < neg.size(); ++i) items.push_back({&preprocessed[pos.size() + i], 0});
  std::shuffle(items.begin(), items.end(), rng);
  size_t n_hold = std::max<size_t>(2, static_cast<size_t>(items.size() * spec.holdout_fraction));
  std::vector<Item> hold(items.end() - static_cast<long>(n_hold), items.end());
  items.resize(items.size() - n_hold);
  if (items.empty()) throw std::invalid_argument("detector: sets too small for a holdout split");
  std::uniform_int_distribution<size_t> pick(0, items.size() - 1);
  for (int64_t step = 0; step < spec.steps; ++step) {
    std::vector<const Tensor<T>*> batch;
    std::vector<int> labels;
    for (int i = 0; i < spec.batch; ++i) {
      const Item& it = items[pick(rng)];
      batch.push_back(it.img);
      labels.push_back(it.label);
    }
    Var<T> logits = det.forward(make_const(detail::stack_batch(batch)));
    Var<T> loss = softmax_nll(logits, labels);
    auto grads = grad(loss, det.store.leaves());
    det.store.adam_update(grads, static_cast<T>(spec.lr));
  }
  int hit = 0;
  for (const Item& it : hold) {
    Tensor<T> batched({1, 3, kImageSize, kImageSize}, it.img->data);
    Tensor<T> logits = det.forward(make_const(batched)).val();
    if ((logits[1] > logits[0] ? 1 : 0) == it.label) ++hit;
  }
  return {static_cast<double>(hit) / static_cast<double>(hold.size())};
}

template <class T>
double eval_detector(const Detector<T>& det, const std::vector<Tensor<T>>& images,
                     int true_label) {
  if (images.empty()) throw std::invalid_argument("eval_detector: empty image set");
  int hit = 0;
  for (const auto& img : images)
    if (det.predict(img) == true_label) ++hit;
  return static_cast<double>(hit) / static_cast<double>(images.size());
}

// Fresh stego samples from a checkpointed model.
template <class T>
std::vector<Tensor<T>> sample_model_images(const CisNet<T>& net, int n, std::mt19937_64& rng,
                                           int batch = 64) {
  std::vector<Tensor<T>> out;
  out.reserve(static_cast<size_t>(n));
  std::uniform_int_distribution<int> pick_label(0, kNumExpressions - 1);
  while (static_cast<int>(out.size()) < n) {
    int b = std::min(batch, n - static_cast<int>(out.size()));
    Tensor<T> signal;
    if (net.cfg.variant == "baseline") {
      signal = randn<T>({b, net.cfg.n_bits}, rng);
    } else {
      std::vector<SecretMessage> msgs;
      for (int i = 0; i < b; ++i) msgs.push_back(SecretMessage::random(net.cfg.n_bits, rng));
      signal = encode_bits_batch<T>(msgs);
    }
    std::vector<int> labels;
    if (net.cfg.expression)
      for (int i = 0; i < b; ++i) labels.push_back(pick_label(rng));
    Tensor<T> imgs = net.synthesize_from_signal(signal, labels, rng()).val();
    int64_t stride = imgs.size() / b;
    for (int i = 0; i < b; ++i) {
      Tensor<T> one({3, kImageSize, kImageSize});
      std::copy(imgs.data.begin() + i * stride, imgs.data.begin() + (i + 1) * stride,
                one.data.begin());
      out.push_back(std::move(one));
    }
  }
  return out;
}

struct GeneralizationRow {
  std::string variant;
  std::vector<double> accuracies;  // raw per-repetition values, all logged
  double mean = 0;
};

struct GeneralizationReport {
  int repetitions = 0;
  std::vector<double> holdout_accuracies;  // per-rep same-pair accuracy on fresh held-out images
  double holdout_mean = 0;
  std::vector<GeneralizationRow> rows;

  std::string to_json() const {
    std::ostringstream os;
    os.precision(10);
    auto list = [&](const std::vector<double>& v) {
      os << "[";
      for (size_t i = 0; i < v.size(); ++i) os << v[i] << (i + 1 < v.size() ? ", " : "");
      os << "]";
    };
    os << "{\n  \"repetitions\": " << repetitions << ",\n  \"holdout_mean\": " << holdout_mean
       << ",\n  \"holdout\": ";
    list(holdout_accuracies);
    os << ",\n  \"rows\": [\n";
    for (size_t i = 0; i < rows.size(); ++i) {
      os << "    {\"variant\": \"" << rows[i].variant << "\", \"mean\": " << rows[i].mean
         << ", \"accuracies\": ";
      list(rows[i].accuracies);
      os << "}" << (i + 1 < rows.size() ? "," : "") << "\n";
    }
    os << "  ]\n}\n";
    return os.str();
  }
};

// Train the detector on baseline-vs-reference images, evaluate whether images
// from each variant model are flagged as stego; repeat with fresh seeds and
// average.  The same-pair score is measured on eval_per_class fresh held-out
// images per model (the split inside train_detector is far too small to
// estimate it once the training sets are deliberately kept small enough for
// the detector to latch onto reference-specific texture).
template <class T>
GeneralizationReport generalization_experiment(const Checkpoint& baseline,
                                               const Checkpoint& reference,
                                               const std::vector<Checkpoint>& variants,
                                               const DetectorSpec& spec, int repetitions = 10,
                                               int images_per_class = 1000,
                                               int eval_per_class = 256) {
  if (baseline.variant() != "baseline")
    throw std::invalid_argument("first checkpoint must be the baseline GAN");
  if (reference.variant() == "baseline")
    throw std::invalid_argument("reference checkpoint must be a stego model");
  CisNet<T> base_net = CisNet<T>::from_checkpoint(baseline);
  CisNet<T> ref_net = CisNet<T>::from_checkpoint(reference);
  std::vector<CisNet<T>> var_nets;
  var_nets.reserve(variants.size());
  for (const auto& v : variants) var_nets.push_back(CisNet<T>::from_checkpoint(v));
  GeneralizationReport report;
  report.repetitions = repetitions;
  report.rows.resize(variants.size());
  for (size_t v = 0; v < variants.size(); ++v) {
    std::string name = var_nets[v].cfg.variant;
    report.rows[v].variant = name.empty() ? ("variant" + std::to_string(v)) : name;
  }
  for (int rep = 0; rep < repetitions; ++rep) {
    uint64_t rep_seed = spec.seed + static_cast<uint64_t>(rep) * 7919;
    std::mt19937_64 rng(rep_seed);
    auto pos = sample_model_images(ref_net, images_per_class, rng);
    auto neg = sample_model_images(base_net, images_per_class, rng);
    std::mt19937_64 det_rng(rep_seed);
    Detector<T> det(spec.arch, det_rng);
    DetectorSpec rep_spec = spec;
    rep_spec.seed = rep_seed;
    train_detector(det, pos, neg, rep_spec);
    auto fresh_pos = sample_model_images(ref_net, eval_per_class, rng);
    auto fresh_neg = sample_model_images(base_net, eval_per_class, rng);
    report.holdout_accuracies.push_back(
        0.5 * (eval_detector(det, fresh_pos, 1) + eval_detector(det, fresh_neg, 0)));
    for (size_t v = 0; v < var_nets.size(); ++v) {
      auto imgs = sample_model_images(var_nets[v], eval_per_class, rng);
      report.rows[v].accuracies.push_back(eval_detector(det, imgs, 1));
    }
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };
  report.holdout_mean = mean(report.holdout_accuracies);
  for (auto& row : report.rows) row.mean = mean(row.accuracies);
  return report;
}

// One CSV row per image: model label + the flattened SRM residual vector
// (1 + 3*32*32 = 3073 columns); the t-SNE embedding itself is external.
template <class T>
inline std::string export_embedding_features(
    const std::vector<std::pair<std::string, Tensor<T>>>& labeled_images) {
  std::ostringstream os;
  os.precision(10);
  for (const auto& [label, img] : labeled_images) {
    Tensor<T> res = srm_residuals(img);
    os << label;
    for (int64_t i = 0; i < res.size(); ++i) os << ',' << static_cast<double>(res[i]);
    os << "\n";
  }
  return os.str();
}

}  // namespace cisnet
