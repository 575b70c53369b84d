#include "intrinsic/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "intrinsic/errors.hpp"
#include "intrinsic/ops.hpp"

namespace intrinsic::trainer {

namespace {

std::vector<nets::NamedParameter> encoder_generator_params(const nets::ModelBundle& m) {
  auto out = m.encoder_parameters();
  for (const auto& d : m.domains()) {
    auto g = m.generator_parameters(d);
    out.insert(out.end(), g.begin(), g.end());
  }
  return out;
}

std::vector<nets::NamedParameter> discriminator_params(const nets::ModelBundle& m) {
  std::vector<nets::NamedParameter> out;
  for (const auto& d : m.domains()) {
    auto g = m.discriminator_parameters(d);
    out.insert(out.end(), g.begin(), g.end());
  }
  return out;
}

std::string join(const std::vector<std::int64_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ";" : "") + std::to_string(v[i]);
  return s;
}

std::string rng_state(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

}  // namespace

void TrainingConfig::validate() const {
  adam().validate();
  weights.validate();
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (total_steps < 0) throw ConfigError("total_steps must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  std::set<std::string> unique(domain_subset.begin(), domain_subset.end());
  if (unique.size() != domain_subset.size()) throw ConfigError("domain_subset lists a domain twice");
  if (!domain_subset.empty() && domain_subset.size() < 2) {
    throw ConfigError("domain_subset must select at least 2 domains");
  }
  model.validate();
}

void to_json(nlohmann::json& j, const TrainingConfig& c) {
  j = {{"learning_rate", c.learning_rate},
       {"adam_beta1", c.adam_beta1},
       {"adam_beta2", c.adam_beta2},
       {"adam_epsilon", c.adam_epsilon},
       {"batch_size", c.batch_size},
       {"total_steps", c.total_steps},
       {"seed", c.seed},
       {"weights", c.weights},
       {"disable_encoder_loss", c.disable_encoder_loss},
       {"non_saturating", c.non_saturating},
       {"domain_subset", c.domain_subset},
       {"checkpoint_every", c.checkpoint_every},
       {"model", c.model}};
}

void from_json(const nlohmann::json& j, TrainingConfig& c) {
  static const std::set<std::string> known{"learning_rate",  "adam_beta1",     "adam_beta2",
                                           "adam_epsilon",   "batch_size",     "total_steps",
                                           "seed",           "weights",        "disable_encoder_loss",
                                           "non_saturating", "domain_subset",  "checkpoint_every",
                                           "model"};
  for (const auto& [k, v] : j.items()) {
    if (!known.contains(k)) throw ConfigError("unknown training config key '" + k + "'");
  }
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.adam_epsilon = j.value("adam_epsilon", c.adam_epsilon);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.total_steps = j.value("total_steps", c.total_steps);
  c.seed = j.value("seed", c.seed);
  if (j.contains("weights")) c.weights = j.at("weights").get<objectives::LossWeights>();
  c.disable_encoder_loss = j.value("disable_encoder_loss", c.disable_encoder_loss);
  c.non_saturating = j.value("non_saturating", c.non_saturating);
  c.domain_subset = j.value("domain_subset", c.domain_subset);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  if (j.contains("model")) c.model = j.at("model").get<nets::BundleConfig>();
}

DomainPair pair_scheduler(const std::vector<std::string>& domain_ids, std::mt19937_64& rng) {
  const auto k = static_cast<std::int64_t>(domain_ids.size());
  if (k < 2) throw ConfigError("pair scheduling needs at least 2 domains, got " + std::to_string(k));
  std::uniform_int_distribution<std::int64_t> pick(0, k * (k - 1) / 2 - 1);
  std::int64_t r = pick(rng);
  std::int64_t i = 0;
  while (r >= k - 1 - i) {
    r -= k - 1 - i;
    ++i;
  }
  const std::int64_t j = i + 1 + r;
  std::bernoulli_distribution coin(0.5);
  if (coin(rng)) return {domain_ids[j], domain_ids[i]};
  return {domain_ids[i], domain_ids[j]};
}

UnpairedBatch sample_unpaired_batch(const data::Dataset& dataset, const DomainPair& pair, int batch_size,
                                    std::mt19937_64& rng) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (pair.a == pair.b) throw ConfigError("pair members must be distinct");
  UnpairedBatch out;
  auto draw = [&](const std::string& id, std::vector<std::int64_t>& idx) {
    const auto& set = dataset.domain(id);
    if (set.size() == 0) throw DataError("domain '" + id + "' has no images");
    std::uniform_int_distribution<std::int64_t> pick(0, static_cast<std::int64_t>(set.size()) - 1);
    std::vector<Tensor> frames;
    for (int i = 0; i < batch_size; ++i) {
      idx.push_back(pick(rng));
      const Tensor f = dataset.frame(id, idx.back());
      frames.push_back(f.reshaped({1, f.dim(0), f.dim(1), f.dim(2)}));
    }
    return stack_batch(frames);
  };
  out.x_a = draw(pair.a, out.indices_a);
  out.x_b = draw(pair.b, out.indices_b);
  return out;
}

ObjectiveGraph build_objective(const nets::ModelBundle& models, const DomainPair& pair, const Tensor& x_a,
                               const Tensor& x_b, const ObjectiveOptions& options) {
  const auto& enc = models.encoder();
  const auto& gen_a = models.generator(pair.a);
  const auto& gen_b = models.generator(pair.b);
  const auto& dis_a = models.discriminator(pair.a);
  const auto& dis_b = models.discriminator(pair.b);
  ag::Var xa(x_a), xb(x_b);

  auto r_a = enc.forward(xa);
  auto r_b = enc.forward(xb);
  auto x_ab = gen_b.forward(r_a);
  auto x_ba = gen_a.forward(r_b);
  auto r_ab = enc.forward(x_ab);
  auto r_ba = enc.forward(x_ba);
  auto x_aba = gen_a.forward(r_ab);
  auto x_bab = gen_b.forward(r_ba);
  auto r_aa = enc.forward(gen_a.forward(r_a));
  auto r_bb = enc.forward(gen_b.forward(r_b));

  auto fake_scores_a = dis_a.forward(x_ba);
  auto fake_scores_b = dis_b.forward(x_ab);

  ObjectiveGraph g;
  g.adv_a = objectives::adversarial_loss(dis_a.forward(xa), fake_scores_a);
  g.adv_b = objectives::adversarial_loss(dis_b.forward(xb), fake_scores_b);
  g.cyc_a = objectives::cycle_loss(xa, x_aba);
  g.cyc_b = objectives::cycle_loss(xb, x_bab);
  // L_enc(A) = |E(G_A(E(X_A))) - E(G_B(E(X_A)))|, L_enc(B) = |E(G_A(E(X_B))) - E(G_B(E(X_B)))|
  g.enc_a = objectives::encoder_loss(r_aa, r_ab);
  g.enc_b = objectives::encoder_loss(r_ba, r_bb);

  objectives::LossWeights eff = options.weights;
  if (options.disable_encoder_loss) eff.beta = 0.0;
  g.total = objectives::full_objective({g.adv_a, g.adv_b, g.cyc_a, g.cyc_b, g.enc_a, g.enc_b}, eff);

  if (options.non_saturating || eff.beta == 0.0) {
    // The real-score half of the adversarial terms is constant for E and G;
    // zero-weighted encoder terms are left out of the backward graph.
    std::vector<ag::Var> terms;
    std::vector<double> weights;
    if (options.non_saturating) {
      terms = {objectives::generator_adversarial_term(fake_scores_a, true),
               objectives::generator_adversarial_term(fake_scores_b, true)};
    } else {
      terms = {g.adv_a, g.adv_b};
    }
    weights = {1.0, 1.0};
    terms.insert(terms.end(), {g.cyc_a, g.cyc_b});
    weights.insert(weights.end(), {eff.alpha, eff.alpha});
    if (eff.beta != 0.0) {
      terms.insert(terms.end(), {g.enc_a, g.enc_b});
      weights.insert(weights.end(), {eff.beta, eff.beta});
    }
    g.generator_objective = ag::weighted_sum(terms, weights);
  } else {
    g.generator_objective = g.total;
  }

  g.report = {g.adv_a.item(), g.adv_b.item(), g.cyc_a.item(), g.cyc_b.item(),
              g.enc_a.item(), g.enc_b.item(), g.total.item()};
  objectives::check_finite(g.report);
  return g;
}

OptimizerState::OptimizerState(const nets::ModelBundle& models, const AdamOptions& options)
    : encoder_generators(options, encoder_generator_params(models)),
      discriminators(options, discriminator_params(models)) {}

std::vector<std::pair<std::string, Tensor>> OptimizerState::state() const {
  auto out = encoder_generators.state("optim.encoder_generators");
  auto d = discriminators.state("optim.discriminators");
  out.insert(out.end(), d.begin(), d.end());
  return out;
}

void OptimizerState::load_state(const std::vector<std::pair<std::string, Tensor>>& arrays) {
  encoder_generators.load_state("optim.encoder_generators", arrays);
  discriminators.load_state("optim.discriminators", arrays);
}

StepReport train_step(const nets::ModelBundle& models, const DomainPair& pair, const UnpairedBatch& batch,
                      const TrainingConfig& cfg, OptimizerState& optim, const PhaseHook& after_discriminator) {
  if (pair.a == pair.b) throw ConfigError("train_step needs two distinct domains");
  const auto t0 = std::chrono::steady_clock::now();
  const auto eg_params = optim.encoder_generators.parameters();
  const auto d_params = optim.discriminators.parameters();

  // Phase 1: discriminators ascend the adversarial terms on fixed fakes.
  {
    optim.discriminators.zero_grad();
    optim.encoder_generators.zero_grad();
    nets::set_requires_grad(eg_params, false);
    nets::set_requires_grad(d_params, true);
    Tensor fake_a, fake_b;
    {
      ag::NoGradGuard no_grad;
      fake_a = models.generator(pair.a)(models.encoder()(batch.x_b));
      fake_b = models.generator(pair.b)(models.encoder()(batch.x_a));
    }
    const auto& dis_a = models.discriminator(pair.a);
    const auto& dis_b = models.discriminator(pair.b);
    auto adv_a = objectives::adversarial_loss(dis_a.forward(ag::Var(batch.x_a)), dis_a.forward(ag::Var(fake_a)));
    auto adv_b = objectives::adversarial_loss(dis_b.forward(ag::Var(batch.x_b)), dis_b.forward(ag::Var(fake_b)));
    auto loss = ag::weighted_sum({adv_a, adv_b}, {-1.0, -1.0});
    if (!std::isfinite(loss.item())) throw NumericError("non-finite discriminator loss");
    ag::backward(loss);
    optim.discriminators.step();
    optim.discriminators.zero_grad();
  }
  if (after_discriminator) after_discriminator();

  // Phase 2: encoder and generators descend the full objective with D fixed.
  StepReport report;
  {
    nets::set_requires_grad(d_params, false);
    nets::set_requires_grad(eg_params, true);
    auto graph = build_objective(models, pair, batch.x_a, batch.x_b,
                                 {cfg.weights, cfg.disable_encoder_loss, cfg.non_saturating});
    ag::backward(graph.generator_objective);
    optim.encoder_generators.step();
    optim.encoder_generators.zero_grad();
    report.losses = graph.report;
  }
  nets::set_requires_grad(d_params, true);

  report.pair = pair;
  report.indices_a = batch.indices_a;
  report.indices_b = batch.indices_b;
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

Checkpoint training_checkpoint(const nets::ModelBundle& models, const OptimizerState& optim,
                               const TrainingConfig& cfg, std::int64_t step, const std::mt19937_64& rng) {
  Checkpoint ckpt = bundle_checkpoint(models, step);
  auto extra = optim.state();
  ckpt.arrays.insert(ckpt.arrays.end(), extra.begin(), extra.end());
  ckpt.metadata["training"] = cfg;
  ckpt.metadata["rng_state"] = rng_state(rng);
  return ckpt;
}

TrainResult train(const data::Dataset& dataset, const TrainingConfig& cfg, const TrainOptions& options) {
  cfg.validate();
  std::vector<std::string> domains = cfg.domain_subset.empty() ? dataset.domain_ids() : cfg.domain_subset;
  for (const auto& d : domains) {
    if (!dataset.has_domain(d)) throw ConfigError("domain '" + d + "' not present in the dataset");
  }
  if (domains.size() < 2) {
    throw ConfigError("training needs at least 2 domains, dataset provides " + std::to_string(domains.size()));
  }

  TrainResult result;
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::int64_t step = 0;
  if (options.resume) {
    result.models = bundle_from_checkpoint(*options.resume);
    if (result.models->domains() != domains) {
      throw ConfigError("resume checkpoint was trained on a different domain set");
    }
    step = options.resume->metadata.value("step", std::int64_t{0});
    std::istringstream is(options.resume->metadata.at("rng_state").get<std::string>());
    is >> rng;
  } else {
    result.models = std::make_unique<nets::ModelBundle>(cfg.model, domains, cfg.seed);
  }
  OptimizerState optim(*result.models, cfg.adam());
  if (options.resume) optim.load_state(options.resume->arrays);

  std::ofstream loss_log, sample_log;
  if (options.output_dir) {
    std::filesystem::create_directories(*options.output_dir);
    const auto mode = options.resume ? std::ios::app : std::ios::trunc;
    const auto loss_path = *options.output_dir / "loss_log.csv";
    const auto sample_path = *options.output_dir / "samples.csv";
    const bool fresh = !options.resume || !std::filesystem::exists(loss_path);
    loss_log.open(loss_path, std::ios::out | (fresh ? std::ios::trunc : mode));
    sample_log.open(sample_path, std::ios::out | (fresh ? std::ios::trunc : mode));
    if (!loss_log || !sample_log) throw IoError("cannot write logs under " + options.output_dir->string());
    if (fresh) {
      loss_log << objectives::csv_header() << ",domain_A,domain_B\n";
      sample_log << "step,domain_A,domain_B,indices_A,indices_B\n";
    }
  }

  auto save = [&](const std::string& name, std::int64_t at) {
    if (!options.output_dir) return;
    save_checkpoint(*options.output_dir / name, training_checkpoint(*result.models, optim, cfg, at, rng));
  };

  for (; step < cfg.total_steps; ++step) {
    const DomainPair pair = pair_scheduler(domains, rng);
    const UnpairedBatch batch = sample_unpaired_batch(dataset, pair, cfg.batch_size, rng);
    StepReport rep;
    try {
      rep = train_step(*result.models, pair, batch, cfg, optim);
    } catch (const NumericError& e) {
      save("diagnostic_step_" + std::to_string(step) + ".ckpt", step);
      throw NumericError(std::string(e.what()) + " at step " + std::to_string(step));
    }
    rep.step = step;
    if (loss_log.is_open()) {
      loss_log << objectives::csv_row(step, rep.losses) << ',' << pair.a << ',' << pair.b << '\n';
      sample_log << step << ',' << pair.a << ',' << pair.b << ',' << join(rep.indices_a) << ','
                 << join(rep.indices_b) << '\n';
    }
    if (options.on_step) options.on_step(rep);
    result.history.push_back(std::move(rep));
    if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 && step + 1 < cfg.total_steps) {
      save("ckpt_" + std::to_string(step + 1) + ".ckpt", step + 1);
    }
  }

  result.checkpoint = training_checkpoint(*result.models, optim, cfg, step, rng);
  if (options.output_dir) save_checkpoint(*options.output_dir / "final.ckpt", result.checkpoint);
  return result;
}

}  // namespace intrinsic::trainer
