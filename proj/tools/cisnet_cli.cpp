// cisnet command-line tool: training, encoding/decoding, channel attacks,
// evaluation and the steganalysis harness. Exit codes: 0 success, 1 usage
// error, 2 runtime failure.
#include <iostream>

#include "CLI11.hpp"
#include "cisnet/security.hpp"

using namespace cisnet;
using F = float;

namespace {

Dataset<F> resolve_dataset(const std::string& id, uint64_t seed) {
  // "sprites:N" is the synthetic corpus; anything else is an image directory
  if (id.rfind("sprites:", 0) == 0) {
    int n = std::stoi(id.substr(8));
    return make_synthetic_sprites<F>(n, seed);
  }
  return load_dataset<F>(id);
}

std::vector<ChannelSpec> parse_channel_list(const std::string& list) {
  std::vector<ChannelSpec> out;
  for (const std::string& tok : TrainConfig::split(list)) out.push_back(ChannelSpec::parse(tok));
  if (out.empty()) throw std::invalid_argument("empty channel list");
  return out;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << content;
}

Tensor<F> single_image_batch(const Tensor<F>& img) {
  return Tensor<F>({1, 3, img.dim(1), img.dim(2)}, img.data);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cisnet: message-driven image synthesis with a trainable extractor"};
  app.require_subcommand(1);

  // ---- train / train-baseline ----
  struct {
    std::string config, out = "model.ckpt", loss_csv;
    bool expression = false;
  } tr;
  auto add_train = [&](CLI::App* cmd, bool with_expression) {
    cmd->add_option("--config", tr.config, "flat key=value config file")->required();
    cmd->add_option("--out", tr.out, "checkpoint output path");
    cmd->add_option("--loss-csv", tr.loss_csv, "loss log CSV path");
    if (with_expression)
      cmd->add_flag("--expression", tr.expression, "expression-conditioned model");
  };
  CLI::App* cmd_train = app.add_subcommand("train", "train the stego model");
  add_train(cmd_train, true);
  CLI::App* cmd_baseline = app.add_subcommand("train-baseline", "train the baseline GAN (M1)");
  add_train(cmd_baseline, false);

  // ---- encode ----
  struct {
    std::string ckpt, bits, expression, out = "stego.png";
    uint64_t seed = 0;
  } enc;
  CLI::App* cmd_encode = app.add_subcommand("encode", "synthesize a stego image from bits");
  cmd_encode->add_option("--ckpt", enc.ckpt)->required();
  cmd_encode->add_option("--bits", enc.bits, "payload as 0/1 characters")->required();
  cmd_encode->add_option("--expression", enc.expression, "expression name (expression models)");
  cmd_encode->add_option("--out", enc.out, "output image (png or jpg)");
  cmd_encode->add_option("--seed", enc.seed, "noise seed");

  // ---- decode ----
  struct {
    std::string ckpt, in;
  } dec;
  CLI::App* cmd_decode = app.add_subcommand("decode", "extract bits from an image");
  cmd_decode->add_option("--ckpt", dec.ckpt)->required();
  cmd_decode->add_option("--in", dec.in)->required();

  // ---- attack ----
  struct {
    std::string in, channel, out;
    uint64_t seed = 0;
  } atk;
  CLI::App* cmd_attack = app.add_subcommand("attack", "apply a channel attack to an image");
  cmd_attack->add_option("--in", atk.in)->required();
  cmd_attack->add_option("--channel", atk.channel, "e.g. jpeg:80, rotation:10, gauss:0.05")
      ->required();
  cmd_attack->add_option("--out", atk.out)->required();
  cmd_attack->add_option("--seed", atk.seed, "seed for stochastic attacks");

  // ---- eval-accuracy ----
  struct {
    std::string ckpt, channels = "identity,jpeg:90,jpeg:80,jpeg:70,jpeg:60,jpeg:50", out;
    int n = 10000;
    uint64_t seed = 0;
  } eva;
  CLI::App* cmd_evalacc = app.add_subcommand("eval-accuracy", "bit-accuracy table per channel");
  cmd_evalacc->add_option("--ckpt", eva.ckpt)->required();
  cmd_evalacc->add_option("--channels", eva.channels, "comma-separated channel list");
  cmd_evalacc->add_option("--n", eva.n, "messages per channel");
  cmd_evalacc->add_option("--seed", eva.seed);
  cmd_evalacc->add_option("--out", eva.out, "CSV path (a .json sidecar is also written)")
      ->required();

  // ---- eval-fid ----
  struct {
    std::string ckpt, data, out = "fid.json";
    int n = 5000;
    uint64_t seed = 0;
  } evf;
  CLI::App* cmd_evalfid = app.add_subcommand("eval-fid", "FID between data and model samples");
  cmd_evalfid->add_option("--ckpt", evf.ckpt)->required();
  cmd_evalfid->add_option("--data", evf.data, "image dir or sprites:N")->required();
  cmd_evalfid->add_option("--n", evf.n, "samples per side");
  cmd_evalfid->add_option("--seed", evf.seed);
  cmd_evalfid->add_option("--out", evf.out);

  // ---- retrain-extractor ----
  struct {
    std::string ckpt, channels, out;
    int64_t steps = 2000;
    uint64_t seed = 0;
  } ret;
  CLI::App* cmd_retrain =
      app.add_subcommand("retrain-extractor", "train a fresh extractor on a frozen generator");
  cmd_retrain->add_option("--ckpt", ret.ckpt)->required();
  cmd_retrain->add_option("--channels", ret.channels, "attack channels to train against")
      ->required();
  cmd_retrain->add_option("--out", ret.out)->required();
  cmd_retrain->add_option("--steps", ret.steps);
  cmd_retrain->add_option("--seed", ret.seed);

  // ---- detect ----
  struct {
    std::string baseline, stego, targets, arch = "simple_cnn", out = "detect.json";
    int reps = 10, images = 1000;
    uint64_t seed = 0;
  } det;
  CLI::App* cmd_detect = app.add_subcommand("detect", "steganalysis generalization experiment");
  cmd_detect->add_option("--baseline", det.baseline)->required();
  cmd_detect->add_option("--stego", det.stego)->required();
  cmd_detect->add_option("--targets", det.targets, "comma-separated variant checkpoints");
  cmd_detect->add_option("--arch", det.arch)->check(CLI::IsMember({"simple_cnn", "srnet32"}));
  cmd_detect->add_option("--reps", det.reps);
  cmd_detect->add_option("--images", det.images, "images per class per repetition");
  cmd_detect->add_option("--seed", det.seed);
  cmd_detect->add_option("--out", det.out);

  // ---- export-features ----
  struct {
    std::string ckpts, out;
    int n = 100;
    uint64_t seed = 0;
  } exf;
  CLI::App* cmd_export =
      app.add_subcommand("export-features", "SRM residual features for external embedding");
  cmd_export->add_option("--ckpts", exf.ckpts, "comma-separated checkpoints")->required();
  cmd_export->add_option("--n", exf.n, "images per model");
  cmd_export->add_option("--seed", exf.seed);
  cmd_export->add_option("--out", exf.out)->required();

  // ---- make-sprites ----
  struct {
    std::string out;
    int n = 5000;
    uint64_t seed = 0;
  } spr;
  CLI::App* cmd_sprites = app.add_subcommand("make-sprites", "write the synthetic sprite corpus");
  cmd_sprites->add_option("--n", spr.n)->required();
  cmd_sprites->add_option("--seed", spr.seed);
  cmd_sprites->add_option("--out", spr.out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_train->parsed() || cmd_baseline->parsed()) {
      TrainConfig base = TrainConfig::desk_profile();
      if (tr.expression) {
        const TrainConfig e = TrainConfig::expression_defaults();
        base.expression = true;
        base.lambda1 = e.lambda1;
        base.lambda2 = e.lambda2;
        base.lambda3 = e.lambda3;
        base.lambda4 = e.lambda4;
        base.lambda5 = e.lambda5;
      }
      TrainConfig cfg = TrainConfig::parse_file(tr.config, base);
      if (tr.expression) cfg.expression = true;
      Dataset<F> ds = resolve_dataset(cfg.dataset, cfg.seed);
      Checkpoint ckpt;
      if (cmd_baseline->parsed()) {
        ckpt = train_baseline_gan(cfg, ds, tr.out, tr.loss_csv);
      } else {
        ckpt = train(cfg, ds, tr.out, tr.loss_csv);
      }
      std::cout << "checkpoint written to " << tr.out << " (variant " << ckpt.variant() << ")\n";
    } else if (cmd_encode->parsed()) {
      CisNet<F> net = CisNet<F>::from_checkpoint(load_checkpoint(enc.ckpt));
      SecretMessage msg = SecretMessage::parse(enc.bits);
      if (msg.n_bits() != net.cfg.n_bits)
        throw std::invalid_argument("model wants " + std::to_string(net.cfg.n_bits) + " bits");
      std::vector<int> labels;
      if (net.cfg.expression)
        labels.push_back(ExpressionLabel::parse(enc.expression.empty() ? "neutral"
                                                                       : enc.expression)
                             .index);
      Tensor<F> img4 = net.synthesize_from_signal(encode_bits<F>(msg), labels, enc.seed).val();
      Tensor<F> img({3, kImageSize, kImageSize});
      std::copy(img4.data.begin(), img4.data.end(), img.data.begin());
      save_image(img, enc.out);
      std::cout << enc.out << "\n";
    } else if (cmd_decode->parsed()) {
      CisNet<F> net = CisNet<F>::from_checkpoint(load_checkpoint(dec.ckpt));
      Tensor<F> img = load_image<F>(dec.in);
      Tensor<F> est = net.extractor.forward(make_const(single_image_batch(img))).val();
      std::cout << decide_bits(est).to_string() << "\n";
    } else if (cmd_attack->parsed()) {
      ChannelSpec spec = ChannelSpec::parse(atk.channel);
      Tensor<F> img = load_image<F>(atk.in);
      std::mt19937_64 rng(atk.seed);
      save_image(apply_channel(img, spec, rng).image, atk.out,
                 spec.kind == ChannelKind::jpeg ? static_cast<int>(spec.param) : 90);
      std::cout << atk.out << "\n";
    } else if (cmd_evalacc->parsed()) {
      CisNet<F> net = CisNet<F>::from_checkpoint(load_checkpoint(eva.ckpt));
      AccuracyReport report =
          eval_accuracy_table(net, parse_channel_list(eva.channels), eva.n, eva.seed);
      write_file(eva.out, report.to_csv());
      write_file(eva.out + ".json", report.to_json());
      std::cout << report.to_csv();
    } else if (cmd_evalfid->parsed()) {
      CisNet<F> net = CisNet<F>::from_checkpoint(load_checkpoint(evf.ckpt));
      Dataset<F> ds = resolve_dataset(evf.data, evf.seed);
      int n = std::min(evf.n, ds.size());
      std::vector<Tensor<F>> real(ds.images.begin(), ds.images.begin() + n);
      std::mt19937_64 rng(evf.seed);
      std::vector<Tensor<F>> fake = sample_model_images(net, n, rng);
      RandomConvFeatures<F> feats;
      double value = fid(feats.extract(real), feats.extract(fake));
      std::ostringstream os;
      os.precision(10);
      os << "{\"fid\": " << value << ", \"n\": " << n << ", \"extractor\": \"" << feats.id()
         << "\", \"seed\": " << evf.seed << "}\n";
      write_file(evf.out, os.str());
      std::cout << os.str();
    } else if (cmd_retrain->parsed()) {
      Checkpoint base = load_checkpoint(ret.ckpt);
      Checkpoint out = retrain_extractor<F>(base, parse_channel_list(ret.channels), ret.steps,
                                            ret.seed);
      save_checkpoint(out, ret.out);
      std::cout << "checkpoint written to " << ret.out << "\n";
    } else if (cmd_detect->parsed()) {
      DetectorSpec spec;
      spec.arch = det.arch == "srnet32" ? DetectorArch::srnet32 : DetectorArch::simple_cnn;
      spec.seed = det.seed;
      std::vector<Checkpoint> targets;
      if (!det.targets.empty())
        for (const std::string& p : TrainConfig::split(det.targets))
          targets.push_back(load_checkpoint(p));
      GeneralizationReport report = generalization_experiment<F>(
          load_checkpoint(det.baseline), load_checkpoint(det.stego), targets, spec, det.reps,
          det.images);
      write_file(det.out, report.to_json());
      std::cout << report.to_json();
    } else if (cmd_export->parsed()) {
      std::vector<std::pair<std::string, Tensor<F>>> labeled;
      for (const std::string& path : TrainConfig::split(exf.ckpts)) {
        CisNet<F> net = CisNet<F>::from_checkpoint(load_checkpoint(path));
        std::mt19937_64 rng(exf.seed);
        for (auto& img : sample_model_images(net, exf.n, rng))
          labeled.emplace_back(std::filesystem::path(path).stem().string(), std::move(img));
      }
      write_file(exf.out, export_embedding_features(labeled));
      std::cout << exf.out << "\n";
    } else if (cmd_sprites->parsed()) {
      Dataset<F> ds = make_synthetic_sprites<F>(spr.n, spr.seed);
      std::filesystem::create_directories(spr.out);
      char name[32];
      for (int i = 0; i < ds.size(); ++i) {
        std::snprintf(name, sizeof(name), "sprite_%06d_c%d.png", i,
                      ds.labels[static_cast<size_t>(i)]);
        save_image(ds.images[static_cast<size_t>(i)],
                   (std::filesystem::path(spr.out) / name).string());
      }
      std::cout << ds.size() << " sprites in " << spr.out << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
