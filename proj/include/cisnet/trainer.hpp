#pragma once

#include <functional>

#include "cisnet/adversary.hpp"
#include "cisnet/checkpoint.hpp"
#include "cisnet/data.hpp"
#include "cisnet/extractor.hpp"

namespace cisnet {

// Everything the training loop needs, serializable as a flat key=value file.
struct TrainConfig {
  int n_bits = 16;
  bool expression = false;
  // loss weights; expression-free defaults (expression defaults() below)
  double lambda1 = 1.0, lambda2 = 0.0, lambda3 = 1.0, lambda4 = 0.0, lambda5 = 10.0;
  double lambda_gp = 50.0;
  double lambda4_threshold = 0.4;  // L_attg EMA level that zeroes lambda4
  double lr = 1e-4;
  double beta1 = 0.9, beta2 = 0.999;
  int batch = 32;
  int64_t steps = 200000;
  uint64_t seed = 0;
  std::string channels = "identity,jpeg:90,jpeg:80,jpeg:70,jpeg:60,jpeg:50";
  bool deconv_last = false;
  std::string dataset = "sprites:5000";  // "sprites:N" or an image directory
  std::string variant = "stego";         // "stego" | "baseline" | free-form (M3..M7 bookkeeping)
  // model widths
  int latent_dim = 512;
  int map_width = 512;
  int map_depth = 4;
  int fuse_depth = 2;
  std::string gen_channels = "512,256,128,64";
  std::string adv_channels = "64,128,256,512";
  std::string ext_channels = "64,128,256,512";
  int ext_fc = 512;
  // bookkeeping
  int64_t log_every = 50;
  int64_t ckpt_every = 1000;

  // expression-model weights 1,1,2,0.1,10
  static TrainConfig expression_defaults() {
    TrainConfig c;
    c.expression = true;
    c.lambda1 = 1.0;
    c.lambda2 = 1.0;
    c.lambda3 = 2.0;
    c.lambda4 = 0.1;
    c.lambda5 = 10.0;
    return c;
  }

  // widths sized for a single CPU core; the learning schedule is untouched
  static TrainConfig desk_profile() {
    TrainConfig c;
    c.n_bits = 8;
    c.steps = 5000;
    c.latent_dim = 32;
    c.map_width = 64;
    c.map_depth = 2;
    c.gen_channels = "32,32,16,8";
    c.adv_channels = "8,16,32,64";
    c.ext_channels = "8,16,32,64";
    c.ext_fc = 64;
    return c;
  }

  void validate() const {
    for (double l : {lambda1, lambda2, lambda3, lambda4, lambda5, lambda_gp})
      if (l < 0) throw std::invalid_argument("loss weights must be >= 0");
    if (batch < 1) throw std::invalid_argument("batch must be >= 1");
    if (n_bits < 1 || n_bits > 64) throw std::invalid_argument("n_bits must be 1..64");
    if (steps < 0) throw std::invalid_argument("steps must be >= 0");
    if (lr <= 0) throw std::invalid_argument("lr must be > 0");
    for (const ChannelSpec& s : channel_list()) s.validate();
  }

  std::vector<ChannelSpec> channel_list() const {
    std::vector<ChannelSpec> out;
    for (const std::string& tok : split(channels)) out.push_back(ChannelSpec::parse(tok));
    if (out.empty()) throw std::invalid_argument("empty channel list");
    return out;
  }

  std::vector<int> parse_widths(const std::string& s) const {
    std::vector<int> out;
    for (const std::string& tok : split(s)) out.push_back(std::stoi(tok));
    return out;
  }

  static std::vector<std::string> split(const std::string& s, char sep = ',') {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
      if (c == sep) {
        if (!cur.empty()) out.push_back(cur);
        cur.clear();
      } else if (!std::isspace(static_cast<unsigned char>(c))) {
        cur.push_back(c);
      }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
  }

  std::map<std::string, std::string> to_map() const {
    std::map<std::string, std::string> m;
    auto num = [](double v) {
      std::ostringstream os;
      os.precision(17);
      os << v;
      return os.str();
    };
    m["n_bits"] = std::to_string(n_bits);
    m["expression"] = expression ? "1" : "0";
    m["lambda1"] = num(lambda1);
    m["lambda2"] = num(lambda2);
    m["lambda3"] = num(lambda3);
    m["lambda4"] = num(lambda4);
    m["lambda5"] = num(lambda5);
    m["lambda_gp"] = num(lambda_gp);
    m["lambda4_threshold"] = num(lambda4_threshold);
    m["lr"] = num(lr);
    m["beta1"] = num(beta1);
    m["beta2"] = num(beta2);
    m["batch"] = std::to_string(batch);
    m["steps"] = std::to_string(steps);
    m["seed"] = std::to_string(seed);
    m["channels"] = channels;
    m["deconv_last"] = deconv_last ? "1" : "0";
    m["dataset"] = dataset;
    m["variant"] = variant;
    m["latent_dim"] = std::to_string(latent_dim);
    m["map_width"] = std::to_string(map_width);
    m["map_depth"] = std::to_string(map_depth);
    m["fuse_depth"] = std::to_string(fuse_depth);
    m["gen_channels"] = gen_channels;
    m["adv_channels"] = adv_channels;
    m["ext_channels"] = ext_channels;
    m["ext_fc"] = std::to_string(ext_fc);
    m["log_every"] = std::to_string(log_every);
    m["ckpt_every"] = std::to_string(ckpt_every);
    return m;
  }

  void apply(const std::string& key, const std::string& value) {
    auto flag = [&] {
      if (value == "1" || value == "true") return true;
      if (value == "0" || value == "false") return false;
      throw std::invalid_argument("boolean key " + key + " wants 0/1, got " + value);
    };
    if (key == "n_bits") n_bits = std::stoi(value);
    else if (key == "expression") expression = flag();
    else if (key == "lambda1") lambda1 = std::stod(value);
    else if (key == "lambda2") lambda2 = std::stod(value);
    else if (key == "lambda3") lambda3 = std::stod(value);
    else if (key == "lambda4") lambda4 = std::stod(value);
    else if (key == "lambda5") lambda5 = std::stod(value);
    else if (key == "lambda_gp") lambda_gp = std::stod(value);
    else if (key == "lambda4_threshold") lambda4_threshold = std::stod(value);
    else if (key == "lr") lr = std::stod(value);
    else if (key == "beta1") beta1 = std::stod(value);
    else if (key == "beta2") beta2 = std::stod(value);
    else if (key == "batch") batch = std::stoi(value);
    else if (key == "steps") steps = std::stoll(value);
    else if (key == "seed") seed = std::stoull(value);
    else if (key == "channels") channels = value;
    else if (key == "deconv_last") deconv_last = flag();
    else if (key == "dataset") dataset = value;
    else if (key == "variant") variant = value;
    else if (key == "latent_dim") latent_dim = std::stoi(value);
    else if (key == "map_width") map_width = std::stoi(value);
    else if (key == "map_depth") map_depth = std::stoi(value);
    else if (key == "fuse_depth") fuse_depth = std::stoi(value);
    else if (key == "gen_channels") gen_channels = value;
    else if (key == "adv_channels") adv_channels = value;
    else if (key == "ext_channels") ext_channels = value;
    else if (key == "ext_fc") ext_fc = std::stoi(value);
    else if (key == "log_every") log_every = std::stoll(value);
    else if (key == "ckpt_every") ckpt_every = std::stoll(value);
    else throw std::invalid_argument("unknown config key: " + key);
  }

  // checkpoint snapshots may carry extra "meta.*" bookkeeping keys
  static TrainConfig from_map(const std::map<std::string, std::string>& m) {
    TrainConfig c;
    for (const auto& [k, v] : m)
      if (k.rfind("meta.", 0) != 0) c.apply(k, v);
    c.validate();
    return c;
  }

  // flat key = value lines; '#' comments; unknown keys are errors
  static TrainConfig parse_file(const std::string& path) { return parse_file(path, TrainConfig()); }

  static TrainConfig parse_file(const std::string& path, TrainConfig base) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read config " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      auto notspace = [](unsigned char c) { return !std::isspace(c); };
      line.erase(line.begin(), std::find_if(line.begin(), line.end(), notspace));
      line.erase(std::find_if(line.rbegin(), line.rend(), notspace).base(), line.end());
      if (line.empty()) continue;
      auto eq = line.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": expected key=value");
      std::string key = line.substr(0, eq);
      std::string value = line.substr(eq + 1);
      key.erase(std::find_if(key.rbegin(), key.rend(), notspace).base(), key.end());
      value.erase(value.begin(), std::find_if(value.begin(), value.end(), notspace));
      base.apply(key, value);
    }
    base.validate();
    return base;
  }
};

// Per-step loss components; l_d and l_g are the exact Eq.-(10) recombinations.
struct LossReport {
  int64_t step = 0;
  double l_advd = 0, l_attd = 0, gp = 0, l_d = 0;
  double l_advg = 0, l_attg = 0, l_e = 0, l_g = 0;
  double lambda4_eff = 0;
  std::string channel;

  static const char* csv_header() {
    return "step,channel,l_advd,l_attd,gp,l_d,l_advg,l_attg,l_e,l_g,lambda4_eff";
  }
  std::string csv_row() const {
    std::ostringstream os;
    os.precision(10);
    os << step << ',' << channel << ',' << l_advd << ',' << l_attd << ',' << gp << ',' << l_d
       << ',' << l_advg << ',' << l_attg << ',' << l_e << ',' << l_g << ',' << lambda4_eff;
    return os.str();
  }
};

// The four submodels. Mapping, generator and extractor share g_store (one
// generator-side optimizer), the critic owns d_store.
template <class T>
struct CisNet {
  TrainConfig cfg;
  ParamStore<T> g_store, d_store;
  MappingNetwork<T> mapping;
  Generator<T> generator;
  Extractor<T> extractor;
  Adversary<T> adversary;

  CisNet(const TrainConfig& c, std::mt19937_64& rng) : cfg(c) {
    cfg.validate();
    MappingConfig mc;
    mc.n_bits = cfg.n_bits;
    mc.latent_dim = cfg.latent_dim;
    mc.width = cfg.map_width;
    mc.depth = cfg.map_depth;
    mc.fuse_depth = cfg.fuse_depth;
    mc.expression = cfg.expression;
    mapping = MappingNetwork<T>(g_store, mc, rng);
    GenConfig gc;
    gc.latent_dim = cfg.latent_dim;
    gc.channels = cfg.parse_widths(cfg.gen_channels);
    gc.deconv_last = cfg.deconv_last;
    generator = Generator<T>(g_store, gc, rng);
    ExtConfig ec;
    ec.n_bits = cfg.n_bits;
    ec.channels = cfg.parse_widths(cfg.ext_channels);
    ec.fc_width = cfg.ext_fc;
    extractor = Extractor<T>(g_store, ec, rng);
    AdvConfig ac;
    ac.channels = cfg.parse_widths(cfg.adv_channels);
    ac.attribute_head = cfg.expression;
    adversary = Adversary<T>(d_store, ac, rng);
  }

  // z broadcast to the style layers; baseline variant feeds the mapping a
  // standard-normal "signal" of the same width
  Var<T> synthesize_from_signal(const Tensor<T>& signal, const std::vector<int>& target_labels,
                                uint64_t noise_seed) const {
    Var<T> z;
    if (cfg.expression) {
      z = mapping.forward(make_const(signal), make_const(onehot_batch<T>(target_labels)));
    } else {
      z = mapping.forward(make_const(signal));
    }
    std::mt19937_64 noise_rng(noise_seed);
    return generator.synthesize(broadcast_latent(z, kNumStyleLayers), noise_rng);
  }

  Checkpoint to_checkpoint(int64_t step, const std::string& rng_state) const {
    Checkpoint ckpt;
    ckpt.config = cfg.to_map();
    ckpt.step = step;
    ckpt.rng_state = rng_state;
    ckpt.put_store(g_store);
    ckpt.put_store(d_store);
    return ckpt;
  }

  static CisNet from_checkpoint(const Checkpoint& ckpt) {
    TrainConfig cfg = TrainConfig::from_map(ckpt.config);
    std::mt19937_64 rng(cfg.seed);  // overwritten below
    CisNet net(cfg, rng);
    ckpt.load_store(net.g_store);
    ckpt.load_store(net.d_store);
    return net;
  }
};

// One training batch; all randomness is drawn up front so every loss can be
// re-evaluated deterministically (finite-difference checks rely on this).
template <class T>
struct StepBatch {
  Tensor<T> real;                  // [B,3,32,32]
  std::vector<int> real_labels;    // expression mode only
  Tensor<T> signal;                // [B,n_bits], +-1 (standard normal for baseline)
  std::vector<int> target_labels;  // requested expressions for the fakes
  uint64_t noise_seed = 0;         // generator noise maps
  uint64_t gp_seed = 0;            // gradient-penalty mixing coefficients
  ChannelSpec channel{ChannelKind::identity, 0};
};

template <class T>
StepBatch<T> sample_step_batch(const TrainConfig& cfg, const Dataset<T>& ds,
                               std::mt19937_64& rng) {
  if (ds.size() == 0) throw std::invalid_argument("empty dataset");
  if (cfg.expression && !ds.labeled())
    throw std::invalid_argument("expression mode needs a labeled dataset");
  StepBatch<T> b;
  int B = cfg.batch;
  b.real = Tensor<T>({B, 3, kImageSize, kImageSize});
  std::uniform_int_distribution<int> pick(0, ds.size() - 1);
  int64_t stride = static_cast<int64_t>(3) * kImageSize * kImageSize;
  for (int i = 0; i < B; ++i) {
    int idx = pick(rng);
    const Tensor<T>& img = ds.images[static_cast<size_t>(idx)];
    std::copy(img.data.begin(), img.data.end(), b.real.data.begin() + i * stride);
    if (cfg.expression) b.real_labels.push_back(ds.labels[static_cast<size_t>(idx)]);
  }
  if (cfg.variant == "baseline") {
    b.signal = randn<T>({B, cfg.n_bits}, rng);
  } else {
    std::vector<SecretMessage> msgs;
    for (int i = 0; i < B; ++i) msgs.push_back(SecretMessage::random(cfg.n_bits, rng));
    b.signal = encode_bits_batch<T>(msgs);
  }
  if (cfg.expression) {
    std::uniform_int_distribution<int> pick_label(0, kNumExpressions - 1);
    for (int i = 0; i < B; ++i) b.target_labels.push_back(pick_label(rng));
  }
  b.noise_seed = rng();
  b.gp_seed = rng();
  b.channel = sample_train_channel(rng);
  return b;
}

namespace detail {

inline void check_finite(double v, const char* component, int64_t step) {
  if (!std::isfinite(v))
    throw std::runtime_error(std::string("non-finite ") + component + " at step " +
                             std::to_string(step));
}

}  // namespace detail

// L_d = lambda1*L_advd + lambda2*L_attd + GP; the fake batch is a constant.
template <class T>
Var<T> compute_d_loss(const CisNet<T>& net, const StepBatch<T>& batch, LossReport& report) {
  Var<T> fake = net.synthesize_from_signal(batch.signal, batch.target_labels, batch.noise_seed);
  Tensor<T> fake_val = fake.val();
  Var<T> real = make_const(batch.real);
  auto out_real = net.adversary.forward(real);
  auto out_fake = net.adversary.forward(make_const(fake_val));
  Var<T> l_advd = wgan_d_loss(out_real.d_src, out_fake.d_src);
  std::mt19937_64 gp_rng(batch.gp_seed);
  Var<T> gp = gradient_penalty(net.adversary, batch.real, fake_val,
                               static_cast<T>(net.cfg.lambda_gp), gp_rng);
  Var<T> l_d = add(scale(l_advd, static_cast<T>(net.cfg.lambda1)), gp);
  report.l_advd = static_cast<double>(l_advd.val()[0]);
  report.gp = static_cast<double>(gp.val()[0]);
  if (net.cfg.expression) {
    Var<T> l_attd = att_d_loss(out_real.att_logits, batch.real_labels);
    report.l_attd = static_cast<double>(l_attd.val()[0]);
    l_d = add(l_d, scale(l_attd, static_cast<T>(net.cfg.lambda2)));
  }
  report.l_d = static_cast<double>(l_d.val()[0]);
  return l_d;
}

// L_g = lambda3*L_advg + lambda4_eff*L_attg + lambda5*L_e over the attacked fake.
template <class T>
Var<T> compute_g_loss(const CisNet<T>& net, const StepBatch<T>& batch, double lambda4_eff,
                      LossReport& report) {
  Var<T> fake = net.synthesize_from_signal(batch.signal, batch.target_labels, batch.noise_seed);
  auto out_fake = net.adversary.forward(fake);
  Var<T> l_advg = wgan_g_loss(out_fake.d_src);
  Var<T> l_g = scale(l_advg, static_cast<T>(net.cfg.lambda3));
  report.l_advg = static_cast<double>(l_advg.val()[0]);
  report.lambda4_eff = lambda4_eff;
  if (net.cfg.expression) {
    Var<T> l_attg = att_g_loss(out_fake.att_logits, batch.target_labels);
    report.l_attg = static_cast<double>(l_attg.val()[0]);
    l_g = add(l_g, scale(l_attg, static_cast<T>(lambda4_eff)));
  }
  if (net.cfg.lambda5 > 0) {
    Var<T> attacked = apply_train_channel(fake, batch.channel);
    Var<T> est = net.extractor.forward(attacked);
    Var<T> l_e = extractor_loss(make_const(batch.signal), est);
    report.l_e = static_cast<double>(l_e.val()[0]);
    l_g = add(l_g, scale(l_e, static_cast<T>(net.cfg.lambda5)));
  }
  report.l_g = static_cast<double>(l_g.val()[0]);
  return l_g;
}

// One critic update, then one generator-side update on the refreshed critic.
template <class T>
LossReport train_step(CisNet<T>& net, const StepBatch<T>& batch, int64_t step,
                      double lambda4_eff) {
  LossReport report;
  report.step = step;
  report.channel = batch.channel.to_string();
  Var<T> l_d = compute_d_loss(net, batch, report);
  detail::check_finite(report.l_advd, "L_advd", step);
  detail::check_finite(report.l_attd, "L_attd", step);
  detail::check_finite(report.gp, "gradient penalty", step);
  auto d_grads = grad(l_d, net.d_store.leaves());
  net.d_store.adam_update(d_grads, static_cast<T>(net.cfg.lr), static_cast<T>(net.cfg.beta1),
                          static_cast<T>(net.cfg.beta2));
  Var<T> l_g = compute_g_loss(net, batch, lambda4_eff, report);
  detail::check_finite(report.l_advg, "L_advg", step);
  detail::check_finite(report.l_attg, "L_attg", step);
  detail::check_finite(report.l_e, "L_e", step);
  auto g_grads = grad(l_g, net.g_store.leaves());
  net.g_store.adam_update(g_grads, static_cast<T>(net.cfg.lr), static_cast<T>(net.cfg.beta1),
                          static_cast<T>(net.cfg.beta2));
  return report;
}

// lambda4 zeroes permanently once the L_attg moving average crosses the
// threshold; decay 0.99 keeps single noisy steps from flapping the switch.
struct Lambda4Schedule {
  double decay = 0.99;
  double ema = std::numeric_limits<double>::quiet_NaN();
  bool tripped = false;

  double effective(double lambda4) const { return tripped ? 0.0 : lambda4; }
  void observe(double l_attg, double threshold) {
    ema = std::isnan(ema) ? l_attg : decay * ema + (1.0 - decay) * l_attg;
    if (ema < threshold) tripped = true;
  }
};

template <class T>
Checkpoint train(const TrainConfig& cfg, const Dataset<T>& ds,
                 const std::string& ckpt_path = "", const std::string& loss_csv = "",
                 const std::function<void(const LossReport&)>& on_log = {}) {
  cfg.validate();
  ds.validate();
  if (ds.size() == 0) throw std::invalid_argument("empty dataset");
  std::mt19937_64 rng(cfg.seed);
  CisNet<T> net(cfg, rng);
  Lambda4Schedule sched;
  std::ofstream csv;
  if (!loss_csv.empty()) {
    csv.open(loss_csv, std::ios::trunc);
    if (!csv) throw std::runtime_error("cannot write " + loss_csv);
    csv << LossReport::csv_header() << "\n";
  }
  for (int64_t step = 1; step <= cfg.steps; ++step) {
    StepBatch<T> batch = sample_step_batch(cfg, ds, rng);
    double l4 = sched.effective(cfg.lambda4);
    LossReport report = train_step(net, batch, step, l4);
    if (cfg.expression) sched.observe(report.l_attg, cfg.lambda4_threshold);
    if (step % cfg.log_every == 0 || step == cfg.steps) {
      if (csv.is_open()) csv << report.csv_row() << "\n" << std::flush;
      if (on_log) on_log(report);
    }
    if (!ckpt_path.empty() && cfg.ckpt_every > 0 && step % cfg.ckpt_every == 0)
      save_checkpoint(net.to_checkpoint(step, rng_to_string(rng)), ckpt_path);
  }
  Checkpoint final = net.to_checkpoint(cfg.steps, rng_to_string(rng));
  if (!ckpt_path.empty()) save_checkpoint(final, ckpt_path);
  return final;
}

// Identical model and schedule, but the latent input is noise instead of a
// payload and the extractor term is off.
template <class T>
Checkpoint train_baseline_gan(TrainConfig cfg, const Dataset<T>& ds,
                              const std::string& ckpt_path = "",
                              const std::string& loss_csv = "") {
  cfg.variant = "baseline";
  cfg.lambda5 = 0.0;
  return train(cfg, ds, ckpt_path, loss_csv);
}

// Batched real-channel attack for extractor (re)training and evaluation.
template <class T>
Tensor<T> attack_batch(const Tensor<T>& imgs, const ChannelSpec& spec, std::mt19937_64& rng) {
  if (imgs.ndim() != 4) throw std::invalid_argument("attack_batch: need [N,3,H,W]");
  Tensor<T> out = imgs;
  int64_t stride = imgs.size() / imgs.dim(0);
  for (int i = 0; i < imgs.dim(0); ++i) {
    Tensor<T> one({3, imgs.dim(2), imgs.dim(3)});
    std::copy(imgs.data.begin() + i * stride, imgs.data.begin() + (i + 1) * stride,
              one.data.begin());
    Tensor<T> hit = apply_channel(one, spec, rng).image;
    std::copy(hit.data.begin(), hit.data.end(), out.data.begin() + i * stride);
  }
  return out;
}

// Two-stage strategy: the generator is frozen; a fresh extractor is trained
// on its outputs attacked by the new channels, minimizing L_e only.
template <class T>
Checkpoint retrain_extractor(const Checkpoint& base, const std::vector<ChannelSpec>& new_channels,
                             int64_t steps, uint64_t seed) {
  if (new_channels.empty()) throw std::invalid_argument("empty channel list");
  for (const auto& s : new_channels) s.validate();
  CisNet<T> net = CisNet<T>::from_checkpoint(base);
  std::mt19937_64 rng(seed);
  ParamStore<T> ext_store;
  ExtConfig ec;
  ec.n_bits = net.cfg.n_bits;
  ec.channels = net.cfg.parse_widths(net.cfg.ext_channels);
  ec.fc_width = net.cfg.ext_fc;
  Extractor<T> ext(ext_store, ec, rng);
  std::uniform_int_distribution<size_t> pick(0, new_channels.size() - 1);
  std::uniform_int_distribution<int> pick_label(0, kNumExpressions - 1);
  for (int64_t step = 1; step <= steps; ++step) {
    std::vector<SecretMessage> msgs;
    for (int i = 0; i < net.cfg.batch; ++i)
      msgs.push_back(SecretMessage::random(net.cfg.n_bits, rng));
    Tensor<T> signal = encode_bits_batch<T>(msgs);
    std::vector<int> labels;
    if (net.cfg.expression)
      for (int i = 0; i < net.cfg.batch; ++i) labels.push_back(pick_label(rng));
    Tensor<T> fake = net.synthesize_from_signal(signal, labels, rng()).val();
    Tensor<T> attacked = attack_batch(fake, new_channels[pick(rng)], rng);
    Var<T> est = ext.forward(make_const(attacked));
    Var<T> l_e = extractor_loss(make_const(signal), est);
    detail::check_finite(static_cast<double>(l_e.val()[0]), "L_e", step);
    auto grads = grad(l_e, ext_store.leaves());
    ext_store.adam_update(grads, static_cast<T>(net.cfg.lr), static_cast<T>(net.cfg.beta1),
                          static_cast<T>(net.cfg.beta2));
  }
  // splice the retrained extractor into a copy of the base checkpoint;
  // generator parameters stay bitwise identical
  Checkpoint out = base;
  for (const auto& p : ext_store.params) {
    std::vector<double> v(p->value.data.begin(), p->value.data.end());
    out.params[p->name] = {p->value.shape, std::move(v)};
  }
  out.config["meta.retrained_channels"] = [&] {
    std::string s;
    for (const auto& c : new_channels) s += (s.empty() ? "" : ",") + c.to_string();
    return s;
  }();
  return out;
}

}  // namespace cisnet
