// Command-line front end: synth | train | encode | eval | visualize.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "intrinsic/errors.hpp"
#include "intrinsic/experiment.hpp"
#include "intrinsic/io_util.hpp"

namespace {

namespace ex = intrinsic::experiment;

struct CommonFlags {
  std::string config;
  std::optional<std::string> output;
  std::optional<std::string> train_root, test_root;
  std::optional<std::vector<int>> image_size;
  std::optional<int> synth_places, synth_domains, synth_test_places;
  std::optional<std::vector<int>> synth_size;
  std::optional<double> synth_strength;
  std::optional<std::uint64_t> synth_seed, seed;
};

struct TrainFlags {
  std::optional<std::int64_t> steps, checkpoint_every;
  std::optional<double> lr, alpha, beta;
  bool no_enc_loss = false;
  bool non_saturating = false;
  std::vector<std::string> domains;
  std::optional<std::string> resume;
};

struct EvalFlags {
  bool images = false;
  std::vector<std::string> representations;
  std::optional<std::vector<int>> lens;
  std::optional<int> dis, window;
  std::optional<std::string> reference;
  bool velocity_sweep = false;
  std::optional<double> match_noise;
  std::optional<std::uint64_t> noise_seed;
};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("-c,--config", f.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  app->add_option("-o,--output", f.output, "Output directory");
  app->add_option("--seed", f.seed, "Training seed");
  app->add_option("--train-root", f.train_root, "Training domain folders");
  app->add_option("--test-root", f.test_root, "Evaluation domain folders");
  app->add_option("--image-size", f.image_size, "Resize target H W for folder data")->expected(2);
  app->add_option("--synth-places", f.synth_places, "Synthetic places per domain");
  app->add_option("--synth-domains", f.synth_domains, "Synthetic domain count");
  app->add_option("--synth-test-places", f.synth_test_places, "Places in the synthetic evaluation set");
  app->add_option("--synth-size", f.synth_size, "Synthetic image H W")->expected(2);
  app->add_option("--synth-strength", f.synth_strength, "Appearance shift strength in [0,1]");
  app->add_option("--synth-seed", f.synth_seed, "Synthetic dataset seed");
}

ex::ExperimentConfig resolve(const CommonFlags& f) {
  ex::ExperimentConfig cfg = f.config.empty() ? ex::ExperimentConfig{} : ex::load_config(f.config);
  if (f.output) cfg.output_dir = *f.output;
  if (f.seed) cfg.training.seed = *f.seed;
  if (f.train_root || f.test_root) {
    cfg.synth.reset();
    if (f.train_root) cfg.train_root = *f.train_root;
    if (f.test_root) cfg.test_root = *f.test_root;
  }
  if (f.image_size) cfg.image_size = {(*f.image_size)[0], (*f.image_size)[1]};
  const bool synth_flag = f.synth_places || f.synth_domains || f.synth_size || f.synth_strength || f.synth_seed ||
                          f.synth_test_places;
  if (synth_flag) {
    if (!cfg.synth) {
      if (f.train_root || f.test_root) throw intrinsic::ConfigError("synthetic flags conflict with folder roots");
      cfg.synth = intrinsic::data::SynthSpec{};
      cfg.train_root.reset();
      cfg.test_root.reset();
    }
    auto& s = *cfg.synth;
    if (f.synth_places) s.num_places = *f.synth_places;
    if (f.synth_domains) {
      s.num_domains = *f.synth_domains;
      s.domain_names.clear();
      s.appearances.clear();
    }
    if (f.synth_size) s.image_size = {(*f.synth_size)[0], (*f.synth_size)[1]};
    if (f.synth_strength) {
      s.strength = *f.synth_strength;
      s.appearances.clear();
    }
    if (f.synth_seed) s.seed = *f.synth_seed;
    if (f.synth_test_places) cfg.synth_test_places = *f.synth_test_places;
  }
  return cfg;
}

std::vector<std::string> split_list(const std::vector<std::string>& items) {
  std::vector<std::string> out;
  for (const auto& item : items) {
    std::size_t start = 0;
    while (start <= item.size()) {
      const auto comma = item.find(',', start);
      const auto tok = item.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      if (!tok.empty()) out.push_back(tok);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
  return out;
}

std::string one_line(std::string s) {
  for (auto& ch : s) {
    if (ch == '\n' || ch == '\r') ch = ' ';
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Condition-invariant place representations: data, training, encoding, evaluation"};
  app.require_subcommand(1);

  CommonFlags synth_common, train_common, encode_common, eval_common, vis_common;
  TrainFlags tf;
  EvalFlags ef;
  std::string split = "train";
  std::string encode_ckpt, vis_ckpt;
  std::vector<std::int64_t> places{0};

  auto* synth = app.add_subcommand("synth", "Write a synthetic multi-domain dataset with ground truth");
  add_common(synth, synth_common);
  synth->add_option("--split", split, "Which synthetic set to write")->check(CLI::IsMember({"train", "test"}));

  auto* train = app.add_subcommand("train", "Train encoder, generators and discriminators");
  add_common(train, train_common);
  train->add_option("--steps", tf.steps, "Total training steps");
  train->add_option("--checkpoint-every", tf.checkpoint_every, "Checkpoint cadence in steps");
  train->add_option("--lr", tf.lr, "Learning rate");
  train->add_option("--alpha", tf.alpha, "Cycle loss weight");
  train->add_option("--beta", tf.beta, "Encoder loss weight");
  train->add_flag("--no-enc-loss", tf.no_enc_loss, "Ablation: exclude the encoder loss from gradients");
  train->add_flag("--non-saturating", tf.non_saturating, "Non-saturating generator adversarial term");
  train->add_option("--domains", tf.domains, "Train on this domain subset (comma separated)");
  train->add_option("--resume", tf.resume, "Continue from a training checkpoint");

  auto* encode = app.add_subcommand("encode", "Export intrinsic representations of the evaluation set");
  add_common(encode, encode_common);
  encode->add_option("--checkpoint", encode_ckpt, "Trained checkpoint")->required();

  auto* eval = app.add_subcommand("eval", "Sequence-matching accuracy table");
  add_common(eval, eval_common);
  eval->add_flag("--images", ef.images, "Add the raw-image baseline row");
  eval->add_option("--representations", ef.representations,
                   "Representation manifest, optionally LABEL=PATH (repeatable)");
  eval->add_option("--len", ef.lens, "Sequence lengths");
  eval->add_option("--dis", ef.dis, "Maximum index distance counted as correct");
  eval->add_option("--window", ef.window, "Contrast enhancement half-width");
  eval->add_option("--reference", ef.reference, "Reference domain");
  eval->add_flag("--velocity-sweep", ef.velocity_sweep, "Search trajectory slopes 0.8..1.2");
  eval->add_option("--match-noise", ef.match_noise, "Gaussian noise added to enhanced matrices");
  eval->add_option("--noise-seed", ef.noise_seed, "Seed for --match-noise");

  auto* vis = app.add_subcommand("visualize", "Original / equalized representation panels");
  add_common(vis, vis_common);
  vis->add_option("--checkpoint", vis_ckpt, "Trained checkpoint")->required();
  vis->add_option("--places", places, "Place (frame) indices");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << one_line(e.what()) << '\n';
    return 2;
  }

  try {
    if (synth->parsed()) {
      const auto cfg = resolve(synth_common);
      std::cout << ex::cmd_synth(cfg, split == "train" ? ex::Split::Train : ex::Split::Test).string() << '\n';
    } else if (train->parsed()) {
      auto cfg = resolve(train_common);
      if (tf.steps) cfg.training.total_steps = *tf.steps;
      if (tf.checkpoint_every) cfg.training.checkpoint_every = *tf.checkpoint_every;
      if (tf.lr) cfg.training.learning_rate = *tf.lr;
      if (tf.alpha) cfg.training.weights.alpha = *tf.alpha;
      if (tf.beta) cfg.training.weights.beta = *tf.beta;
      if (tf.no_enc_loss) cfg.training.disable_encoder_loss = true;
      if (tf.non_saturating) cfg.training.non_saturating = true;
      if (!tf.domains.empty()) cfg.training.domain_subset = split_list(tf.domains);
      std::optional<std::filesystem::path> resume;
      if (tf.resume) resume = *tf.resume;
      std::cout << ex::cmd_train(cfg, resume).string() << '\n';
    } else if (encode->parsed()) {
      const auto cfg = resolve(encode_common);
      std::cout << ex::cmd_encode(cfg, encode_ckpt).string() << '\n';
    } else if (eval->parsed()) {
      auto cfg = resolve(eval_common);
      if (ef.lens) cfg.eval.lens = *ef.lens;
      if (ef.dis) cfg.eval.dis = *ef.dis;
      if (ef.window) cfg.eval.window = *ef.window;
      if (ef.reference) cfg.eval.reference_domain = *ef.reference;
      if (ef.velocity_sweep) cfg.eval.velocity_sweep = true;
      if (ef.match_noise) cfg.eval.match_noise = *ef.match_noise;
      if (ef.noise_seed) cfg.eval.noise_seed = *ef.noise_seed;
      std::vector<ex::EvalSource> sources;
      if (ef.images) sources.push_back({"Raw images", std::nullopt});
      for (const auto& spec : ef.representations) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos) {
          sources.push_back({"Intrinsic Encoder", spec});
        } else {
          sources.push_back({spec.substr(0, eq), spec.substr(eq + 1)});
        }
      }
      ex::cmd_eval(cfg, sources);
      std::cout << intrinsic::io::read_text(cfg.output_dir / "eval" / "table.md");
    } else if (vis->parsed()) {
      const auto cfg = resolve(vis_common);
      for (const auto& p : ex::cmd_visualize(cfg, vis_ckpt, places)) std::cout << p.string() << '\n';
    }
  } catch (const intrinsic::Error& e) {
    std::cerr << "error: " << e.kind() << ": " << one_line(e.what()) << '\n';
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: io: " << one_line(e.what()) << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << one_line(e.what()) << '\n';
    return 1;
  }
  return 0;
}
