#pragma once

#include <Eigen/Dense>

#include "cisnet/trainer.hpp"

namespace cisnet {

// One row per attacked channel: mean bit accuracy over n_messages random
// payloads pushed through synthesize -> attack -> extract -> decide.
struct AccuracyRow {
  std::string channel;
  double accuracy = 0;
  int n_messages = 0;
};

struct AccuracyReport {
  std::vector<AccuracyRow> rows;
  uint64_t seed = 0;
  std::string codec;

  std::string to_csv() const {
    std::ostringstream os;
    os.precision(10);
    os << "channel,accuracy,n_messages,seed\n";
    for (const auto& r : rows)
      os << r.channel << ',' << r.accuracy << ',' << r.n_messages << ',' << seed << "\n";
    return os.str();
  }

  std::string to_json() const {
    std::ostringstream os;
    os.precision(10);
    os << "{\n  \"seed\": " << seed << ",\n  \"codec\": \"" << codec << "\",\n  \"rows\": [\n";
    for (size_t i = 0; i < rows.size(); ++i)
      os << "    {\"channel\": \"" << rows[i].channel << "\", \"accuracy\": " << rows[i].accuracy
         << ", \"n_messages\": " << rows[i].n_messages << "}" << (i + 1 < rows.size() ? "," : "")
         << "\n";
    os << "  ]\n}\n";
    return os.str();
  }

  double accuracy_for(const std::string& channel) const {
    for (const auto& r : rows)
      if (r.channel == channel) return r.accuracy;
    throw std::invalid_argument("no accuracy row for " + channel);
  }
};

template <class T>
AccuracyReport eval_accuracy_table(const CisNet<T>& net, const std::vector<ChannelSpec>& channels,
                                   int n_messages, uint64_t seed, int batch = 64) {
  if (n_messages < 1) throw std::invalid_argument("n_messages must be >= 1");
  AccuracyReport report;
  report.seed = seed;
  report.codec = codec_identity();
  std::uniform_int_distribution<int> pick_label(0, kNumExpressions - 1);
  for (const ChannelSpec& spec : channels) {
    spec.validate();
    // per-row rng derived from the master seed so rows are order-independent
    std::mt19937_64 rng(seed ^ std::hash<std::string>{}(spec.to_string()));
    double acc_sum = 0;
    int done = 0;
    while (done < n_messages) {
      int b = std::min(batch, n_messages - done);
      std::vector<SecretMessage> msgs;
      for (int i = 0; i < b; ++i) msgs.push_back(SecretMessage::random(net.cfg.n_bits, rng));
      Tensor<T> signal = encode_bits_batch<T>(msgs);
      std::vector<int> labels;
      if (net.cfg.expression)
        for (int i = 0; i < b; ++i) labels.push_back(pick_label(rng));
      Tensor<T> fake = net.synthesize_from_signal(signal, labels, rng()).val();
      Tensor<T> attacked = attack_batch(fake, spec, rng);
      Tensor<T> est = net.extractor.forward(make_const(attacked)).val();
      for (int i = 0; i < b; ++i) {
        Tensor<T> row({1, net.cfg.n_bits});
        for (int j = 0; j < net.cfg.n_bits; ++j) row[j] = est.at(i, j);
        acc_sum += bit_accuracy(msgs[static_cast<size_t>(i)], decide_bits(row));
      }
      done += b;
    }
    report.rows.push_back({spec.to_string(), acc_sum / n_messages, n_messages});
  }
  return report;
}

// Per-image embeddings from some fixed feature extractor.
struct FeatureSet {
  std::string extractor_id;
  int dim = 0;
  std::vector<std::vector<double>> features;

  void validate() const {
    if (features.size() < 2) throw std::invalid_argument("feature set needs >= 2 samples");
    for (const auto& f : features)
      if (static_cast<int>(f.size()) != dim)
        throw std::invalid_argument("feature dim mismatch in set");
  }
};

// Frechet distance between Gaussian fits:
// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}).
// The cross sqrt is computed symmetrically as S_b^{1/2} S_a S_b^{1/2}.
inline double fid(const FeatureSet& a, const FeatureSet& b) {
  a.validate();
  b.validate();
  if (a.dim != b.dim) throw std::invalid_argument("fid: feature dim mismatch");
  int d = a.dim;
  auto fit = [d](const FeatureSet& s) {
    int n = static_cast<int>(s.features.size());
    Eigen::MatrixXd x(n, d);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) x(i, j) = s.features[static_cast<size_t>(i)][static_cast<size_t>(j)];
    Eigen::VectorXd mu = x.colwise().mean();
    Eigen::MatrixXd centered = x.rowwise() - mu.transpose();
    Eigen::MatrixXd sigma = centered.transpose() * centered / (n - 1.0);  // unbiased
    return std::pair{mu, sigma};
  };
  auto [mu_a, sig_a] = fit(a);
  auto [mu_b, sig_b] = fit(b);
  auto psd_sqrt = [](const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return Eigen::MatrixXd(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose());
  };
  auto trace_cross_sqrt = [&](const Eigen::MatrixXd& sa, const Eigen::MatrixXd& sb) {
    Eigen::MatrixXd rb = psd_sqrt(sb);
    Eigen::MatrixXd inner = rb * sa * rb;
    inner = 0.5 * (inner + inner.transpose());  // symmetrize roundoff
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inner);
    return es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  };
  double tr = trace_cross_sqrt(sig_a, sig_b);
  if (!std::isfinite(tr)) {
    // fall back to slightly regularized covariances
    double eps = 1e-6;
    Eigen::MatrixXd ia = sig_a + eps * Eigen::MatrixXd::Identity(d, d);
    Eigen::MatrixXd ib = sig_b + eps * Eigen::MatrixXd::Identity(d, d);
    tr = trace_cross_sqrt(ia, ib);
  }
  return (mu_a - mu_b).squaredNorm() + sig_a.trace() + sig_b.trace() - 2.0 * tr;
}

inline double capacity_bpp(int n_bits, int height, int width) {
  if (n_bits < 0 || height < 1 || width < 1) throw std::invalid_argument("capacity_bpp: bad args");
  return static_cast<double>(n_bits) / (static_cast<double>(height) * width);
}

// Fixed, seed-locked random conv embedding: 3->dim 3x3 conv, leaky rectifier,
// global average pool. Desk-scale stand-in for an Inception feature pipeline;
// only relative comparisons are meaningful.
template <class T>
struct RandomConvFeatures {
  int dim = 64;
  uint64_t seed = 1234;
  Tensor<T> w;  // [dim,3,3,3]

  explicit RandomConvFeatures(int d = 64, uint64_t s = 1234) : dim(d), seed(s) {
    std::mt19937_64 rng(seed);
    w = randn<T>({dim, 3, 3, 3}, rng, static_cast<T>(std::sqrt(2.0 / 27.0)));
  }

  std::string id() const {
    return "randconv" + std::to_string(dim) + ":" + std::to_string(seed);
  }

  FeatureSet extract(const std::vector<Tensor<T>>& images) const {
    FeatureSet out;
    out.extractor_id = id();
    out.dim = dim;
    for (const Tensor<T>& img : images) {
      if (img.ndim() != 3 || img.dim(0) != 3)
        throw std::invalid_argument("features: need [3,H,W] images");
      Tensor<T> batched({1, 3, img.dim(1), img.dim(2)}, img.data);
      Var<T> y = leaky_relu(conv2d(make_const(batched), make_const(w), 1, 1), T(0.2));
      const Tensor<T>& v = y.val();
      int64_t hw = static_cast<int64_t>(v.dim(2)) * v.dim(3);
      std::vector<double> f(static_cast<size_t>(dim), 0.0);
      for (int c = 0; c < dim; ++c) {
        double s = 0;
        for (int64_t i = 0; i < hw; ++i) s += static_cast<double>(v[c * hw + i]);
        f[static_cast<size_t>(c)] = s / static_cast<double>(hw);
      }
      out.features.push_back(std::move(f));
    }
    return out;
  }
};

// Fraction of generated images whose predicted expression matches the
// requested label, under any classifier exposing predict(img)->label.
template <class T, class Classifier>
double expression_accuracy(const CisNet<T>& net, const Classifier& classifier, int n,
                           uint64_t seed) {
  if (!net.cfg.expression) throw std::invalid_argument("expression-mode checkpoint required");
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick_label(0, kNumExpressions - 1);
  int hit = 0;
  for (int i = 0; i < n; ++i) {
    SecretMessage msg = SecretMessage::random(net.cfg.n_bits, rng);
    int label = pick_label(rng);
    Tensor<T> signal = encode_bits<T>(msg);
    Tensor<T> img4 = net.synthesize_from_signal(signal, {label}, rng()).val();
    Tensor<T> img({3, kImageSize, kImageSize});
    std::copy(img4.data.begin(), img4.data.end(), img.data.begin());
    if (classifier.predict(img) == label) ++hit;
  }
  return static_cast<double>(hit) / n;
}

}  // namespace cisnet
