#include <sstream>

#include "cisnet/security.hpp"
#include "doctest.h"

using namespace cisnet;
using F = float;
using D = double;

static std::mt19937_64 rng(77);

namespace {
template <class T>
std::vector<std::vector<T>> snapshot_params(const Detector<T>& det) {
  std::vector<std::vector<T>> out;
  for (const auto& p : det.store.params) out.push_back(p->value.data);
  return out;
}
}  // namespace

TEST_CASE("srm residuals of a constant image are zero") {
  Tensor<D> img = Tensor<D>::full({3, 32, 32}, 0.37);
  Tensor<D> res = srm_residuals(img);
  CHECK(res.shape == std::vector<int>{3, 32, 32});
  for (D v : res.data) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("first-order horizontal kernel matches hand-computed differences") {
  // gray row [0, 0.5, 1]: correlation with [-1, 1] (center on the second tap)
  // gives out[x] = gray[x] - gray[x-1] with reflect padding
  Tensor<D> img({3, 1, 3});
  double row[3] = {0.0, 0.5, 1.0};
  for (int c = 0; c < 3; ++c)
    for (int x = 0; x < 3; ++x) img[c * 3 + x] = row[x];
  Tensor<D> res = srm_residuals(img);
  CHECK(res[0] == doctest::Approx(0.0).epsilon(1e-12));   // reflect: 0 - 0
  CHECK(res[1] == doctest::Approx(0.5).epsilon(1e-12));   // 0.5 - 0
  CHECK(res[2] == doctest::Approx(0.5).epsilon(1e-12));   // 1 - 0.5
}

TEST_CASE("srm residuals are linear in the image") {
  Tensor<D> x = rand_uniform<D>({3, 32, 32}, rng, -1.0, 1.0);
  Tensor<D> scaled = x;
  for (auto& v : scaled.data) v *= 3.5;
  Tensor<D> rx = srm_residuals(x);
  Tensor<D> rs = srm_residuals(scaled);
  for (int64_t i = 0; i < rx.size(); ++i)
    CHECK(rs[i] == doctest::Approx(3.5 * rx[i]).epsilon(1e-6));
  CHECK_THROWS(srm_residuals(Tensor<D>::zeros({1, 32, 32})));
}

TEST_CASE("detector on identical distributions stays near chance") {
  std::vector<Tensor<F>> pos, neg;
  std::mt19937_64 r(3);
  for (int i = 0; i < 60; ++i) {
    pos.push_back(rand_uniform<F>({3, 32, 32}, r, -1.0f, 1.0f));
    neg.push_back(rand_uniform<F>({3, 32, 32}, r, -1.0f, 1.0f));
  }
  std::mt19937_64 dr(4);
  Detector<F> det(DetectorArch::simple_cnn, dr);
  DetectorSpec spec;
  spec.steps = 60;
  spec.seed = 5;
  double acc = train_detector(det, pos, neg, spec).holdout_accuracy;
  CHECK(acc > 0.2);
  CHECK(acc < 0.8);
}

TEST_CASE("detector separates trivially different classes and flips with labels") {
  std::vector<Tensor<F>> bright, dark;
  std::mt19937_64 r(6);
  for (int i = 0; i < 60; ++i) {
    Tensor<F> b = rand_uniform<F>({3, 32, 32}, r, 0.4f, 1.0f);
    Tensor<F> d = rand_uniform<F>({3, 32, 32}, r, -1.0f, -0.4f);
    bright.push_back(b);
    dark.push_back(d);
  }
  DetectorSpec spec;
  spec.steps = 120;
  spec.seed = 8;
  std::mt19937_64 dr(9);
  Detector<F> det(DetectorArch::simple_cnn, dr);
  CHECK(train_detector(det, bright, dark, spec).holdout_accuracy > 0.9);
  CHECK(eval_detector(det, bright, 1) > 0.9);
  CHECK(eval_detector(det, dark, 0) > 0.9);
  // label flip: retrain with swapped classes, predictions invert
  std::mt19937_64 dr2(9);
  Detector<F> flipped(DetectorArch::simple_cnn, dr2);
  CHECK(train_detector(flipped, dark, bright, spec).holdout_accuracy > 0.9);
  CHECK(eval_detector(flipped, bright, 0) > 0.9);
  CHECK(eval_detector(flipped, dark, 1) > 0.9);
}

TEST_CASE("srnet32 detector trains through the srm prefilter") {
  std::vector<Tensor<F>> noisy, smooth;
  std::mt19937_64 r(12);
  for (int i = 0; i < 40; ++i) {
    noisy.push_back(rand_uniform<F>({3, 32, 32}, r, -1.0f, 1.0f));
    smooth.push_back(Tensor<F>::full({3, 32, 32}, static_cast<F>(i % 5) * 0.3f - 0.6f));
  }
  DetectorSpec spec;
  spec.arch = DetectorArch::srnet32;
  spec.steps = 80;
  spec.seed = 13;
  std::mt19937_64 dr(14);
  Detector<F> det(DetectorArch::srnet32, dr);
  CHECK(train_detector(det, noisy, smooth, spec).holdout_accuracy > 0.9);
}

TEST_CASE("detector training is reproducible under a fixed seed") {
  std::vector<Tensor<F>> pos, neg;
  std::mt19937_64 r(20);
  for (int i = 0; i < 30; ++i) {
    pos.push_back(rand_uniform<F>({3, 32, 32}, r, 0.0f, 1.0f));
    neg.push_back(rand_uniform<F>({3, 32, 32}, r, -1.0f, 0.0f));
  }
  DetectorSpec spec;
  spec.steps = 40;
  spec.seed = 21;
  auto run = [&] {
    std::mt19937_64 dr(22);
    Detector<F> det(DetectorArch::simple_cnn, dr);
    train_detector(det, pos, neg, spec);
    return snapshot_params(det);
  };
  CHECK(run() == run());
}

TEST_CASE("feature export rows have label plus 3072 values and reload losslessly") {
  std::vector<std::pair<std::string, Tensor<D>>> labeled;
  labeled.emplace_back("m1", Tensor<D>::full({3, 32, 32}, 0.25));
  labeled.emplace_back("m2", rand_uniform<D>({3, 32, 32}, rng, -1.0, 1.0));
  std::string csv = export_embedding_features(labeled);
  std::istringstream is(csv);
  std::string line;
  int rows = 0;
  while (std::getline(is, line)) {
    ++rows;
    int cols = 1;
    for (char c : line) cols += c == ',';
    CHECK(cols == 1 + 3 * 32 * 32);
  }
  CHECK(rows == 2);
  // constant image -> label + zeros
  std::istringstream first(csv.substr(0, csv.find('\n')));
  std::string tok;
  std::getline(first, tok, ',');
  CHECK(tok == "m1");
  while (std::getline(first, tok, ',')) CHECK(std::stod(tok) == doctest::Approx(0.0));
  // parse -> re-serialize identical
  std::vector<std::pair<std::string, Tensor<D>>> reparsed;
  std::istringstream is2(csv);
  while (std::getline(is2, line)) {
    std::istringstream ls(line);
    std::string label;
    std::getline(ls, label, ',');
    (void)label;
  }
  CHECK(export_embedding_features(labeled) == csv);
}
