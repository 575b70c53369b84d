#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "intrinsic/errors.hpp"
#include "intrinsic/trainer.hpp"
#include "support.hpp"

namespace intrinsic::trainer {
namespace {

using State = std::vector<std::pair<std::string, Tensor>>;

data::Dataset toy_dataset(int domains = 2, int places = 6) {
  data::SynthSpec spec;
  spec.num_places = places;
  spec.num_domains = domains;
  spec.image_size = {8, 8};
  spec.strength = 0.5;
  spec.seed = 3;
  return data::synth_generate(spec).dataset;
}

TrainingConfig toy_config(std::int64_t steps = 4) {
  TrainingConfig cfg;
  cfg.total_steps = steps;
  cfg.seed = 5;
  cfg.learning_rate = 1e-3;
  cfg.checkpoint_every = 0;
  cfg.model = testing::tiny_bundle();
  return cfg;
}

State group(const nets::ModelBundle& m, bool discriminators) {
  State out;
  for (auto& [name, t] : m.state()) {
    if ((name.rfind("discriminator.", 0) == 0) == discriminators) out.emplace_back(name, t);
  }
  return out;
}

bool same(const State& a, const State& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].first != b[i].first || !bit_identical(a[i].second, b[i].second)) return false;
  }
  return true;
}

TEST(PairScheduler, UniformOverPairsWithRandomRoles) {
  const std::vector<std::string> ids{"spring", "summer", "autumn", "winter"};
  std::mt19937_64 rng(1);
  std::map<std::set<std::string>, int> counts;
  std::map<std::string, int> first;
  const int draws = 60000;
  for (int i = 0; i < draws; ++i) {
    const auto p = pair_scheduler(ids, rng);
    ASSERT_NE(p.a, p.b);
    ++counts[{p.a, p.b}];
    ++first[p.a];
  }
  ASSERT_EQ(counts.size(), 6u);
  double chi2 = 0.0;
  const double expected = draws / 6.0;
  for (const auto& [pair, n] : counts) chi2 += (n - expected) * (n - expected) / expected;
  EXPECT_LT(chi2, 15.086);  // chi-square, 5 dof, p = 0.01
  for (const auto& [id, n] : first) EXPECT_NEAR(n / static_cast<double>(draws), 0.25, 0.01) << id;
}

TEST(PairScheduler, TwoDomainsAndDegenerateInput) {
  std::mt19937_64 rng(2);
  int swapped = 0;
  for (int i = 0; i < 200; ++i) {
    const auto p = pair_scheduler({"spring", "winter"}, rng);
    EXPECT_EQ((std::set<std::string>{p.a, p.b}), (std::set<std::string>{"spring", "winter"}));
    swapped += p.a == "winter";
  }
  EXPECT_GT(swapped, 0);
  EXPECT_LT(swapped, 200);
  EXPECT_THROW(pair_scheduler({"winter"}, rng), ConfigError);
  EXPECT_THROW(pair_scheduler({}, rng), ConfigError);
}

TEST(Sampler, IndependentUniformIndices) {
  data::Dataset ds;
  for (const char* id : {"summer", "winter"}) {
    data::DomainSet set;
    set.domain_id = id;
    for (int i = 0; i < 3600; ++i) {
      set.frames.push_back({{}, i});
      set.images.emplace_back(Shape{3, 1, 1});
    }
    ds.domains.push_back(std::move(set));
  }
  std::mt19937_64 rng(3);
  const int n = 10000;
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  for (int i = 0; i < n; ++i) {
    const auto b = sample_unpaired_batch(ds, {"summer", "winter"}, 1, rng);
    ASSERT_EQ(b.x_a.shape(), (Shape{1, 3, 1, 1}));
    ASSERT_EQ(b.indices_a.size(), 1u);
    const double x = static_cast<double>(b.indices_a[0]), y = static_cast<double>(b.indices_b[0]);
    sa += x, sb += y, saa += x * x, sbb += y * y, sab += x * y;
  }
  const double cov = sab / n - (sa / n) * (sb / n);
  const double r = cov / std::sqrt((saa / n - sa * sa / n / n) * (sbb / n - sb * sb / n / n));
  EXPECT_NEAR(r, 0.0, 0.05);
  EXPECT_NEAR(sa / n, 1799.5, 60.0);
}

TEST(Sampler, DeterministicBatchesAndErrors) {
  const auto ds = toy_dataset();
  std::mt19937_64 r1(4), r2(4);
  for (int i = 0; i < 20; ++i) {
    const auto a = sample_unpaired_batch(ds, {"summer", "winter"}, 3, r1);
    const auto b = sample_unpaired_batch(ds, {"summer", "winter"}, 3, r2);
    EXPECT_EQ(a.indices_a, b.indices_a);
    EXPECT_EQ(a.indices_b, b.indices_b);
    EXPECT_EQ(a.x_a.shape(), (Shape{3, 3, 8, 8}));
  }
  auto empty = ds;
  empty.domains[1].frames.clear();
  empty.domains[1].images.clear();
  EXPECT_THROW(sample_unpaired_batch(empty, {"summer", "winter"}, 1, r1), DataError);
  EXPECT_THROW(sample_unpaired_batch(ds, {"summer", "summer"}, 1, r1), ConfigError);
}

TEST(TrainStep, UpdateIsolationAtEveryStep) {
  const auto ds = toy_dataset(3);
  const auto cfg = toy_config();
  const nets::ModelBundle models(cfg.model, ds.domain_ids(), cfg.seed);
  OptimizerState optim(models, cfg.adam());
  std::mt19937_64 rng(6);
  for (int step = 0; step < 100; ++step) {
    const auto pair = pair_scheduler(ds.domain_ids(), rng);
    const auto batch = sample_unpaired_batch(ds, pair, 1, rng);
    const State eg_before = group(models, false), d_before = group(models, true);
    State d_after_phase1;
    bool eg_held = false;
    train_step(models, pair, batch, cfg, optim, [&] {
      eg_held = same(group(models, false), eg_before);
      d_after_phase1 = group(models, true);
    });
    ASSERT_TRUE(eg_held) << "step " << step;
    ASSERT_TRUE(same(group(models, true), d_after_phase1)) << "step " << step;
    ASSERT_FALSE(same(d_before, d_after_phase1)) << "step " << step;
    ASSERT_FALSE(same(eg_before, group(models, false))) << "step " << step;
  }
}

TEST(TrainStep, ZeroGradientFixedPoint) {
  data::Dataset ds;
  for (const char* id : {"summer", "winter"}) {
    data::DomainSet set;
    set.domain_id = id;
    set.frames.push_back({{}, 0});
    set.images.emplace_back(Shape{3, 8, 8});
    ds.domains.push_back(std::move(set));
  }
  const auto cfg = toy_config();
  const nets::ModelBundle models(cfg.model, ds.domain_ids(), 0);
  for (auto& p : models.parameters()) {
    if (!p.name.ends_with(".gamma")) p.var.mutable_value().fill(0.0);
  }
  const State before = models.state();
  const DomainPair pair{"summer", "winter"};
  std::mt19937_64 rng(0);
  const auto batch = sample_unpaired_batch(ds, pair, 1, rng);
  const auto pre = build_objective(models, pair, batch.x_a, batch.x_b, {cfg.weights}).report;
  OptimizerState optim(models, cfg.adam());
  const auto rep = train_step(models, pair, batch, cfg, optim);
  EXPECT_TRUE(same(models.state(), before));
  EXPECT_EQ(rep.losses.total, pre.total);
  EXPECT_EQ(rep.losses.terms(), pre.terms());
}

TEST(Train, ZeroStepsReturnsInitialization) {
  const auto ds = toy_dataset();
  const auto cfg = toy_config(0);
  const auto result = train(ds, cfg);
  const nets::ModelBundle init(cfg.model, ds.domain_ids(), cfg.seed);
  EXPECT_TRUE(same(result.models->state(), init.state()));
  EXPECT_TRUE(result.history.empty());
  EXPECT_EQ(result.checkpoint.metadata.at("step"), 0);
}

TEST(Train, DeterministicInSeed) {
  const auto ds = toy_dataset(3);
  const auto a = train(ds, toy_config(6));
  const auto b = train(ds, toy_config(6));
  EXPECT_TRUE(same(a.checkpoint.arrays, b.checkpoint.arrays));
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].pair, b.history[i].pair);
    EXPECT_EQ(a.history[i].indices_a, b.history[i].indices_a);
    EXPECT_EQ(a.history[i].losses.total, b.history[i].losses.total);
  }
  auto other = toy_config(6);
  other.seed = 6;
  EXPECT_FALSE(same(train(ds, other).checkpoint.arrays, a.checkpoint.arrays));
}

TEST(Train, ResumeContinuesTheSameTrajectory) {
  const auto ds = toy_dataset();
  testing::TempDir dir;
  const auto full = train(ds, toy_config(6));
  auto cfg = toy_config(3);
  cfg.checkpoint_every = 0;
  train(ds, cfg, {dir.path()});
  cfg.total_steps = 6;
  const auto resumed = train(ds, cfg, {dir.path(), load_checkpoint(dir / "final.ckpt")});
  EXPECT_TRUE(same(resumed.checkpoint.arrays, full.checkpoint.arrays));
  ASSERT_EQ(resumed.history.size(), 3u);
  EXPECT_EQ(resumed.history.front().step, 3);
  EXPECT_EQ(resumed.history.back().losses.total, full.history.back().losses.total);
}

TEST(Train, WritesPeriodicCheckpointsAndLogs) {
  const auto ds = toy_dataset();
  testing::TempDir dir;
  auto cfg = toy_config(5);
  cfg.checkpoint_every = 2;
  train(ds, cfg, {dir.path()});
  EXPECT_TRUE(std::filesystem::exists(dir / "ckpt_2.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(dir / "ckpt_4.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(dir / "final.ckpt"));
  std::ifstream log(dir / "loss_log.csv");
  std::string line;
  int rows = 0;
  while (std::getline(log, line)) ++rows;
  EXPECT_EQ(rows, 6);
  EXPECT_EQ(load_checkpoint(dir / "ckpt_2.ckpt").metadata.at("step"), 2);
}

TEST(Train, AblationMatchesZeroBeta) {
  const auto ds = toy_dataset(3);
  auto ablation = toy_config(5);
  ablation.disable_encoder_loss = true;
  auto zero_beta = toy_config(5);
  zero_beta.weights.beta = 0.0;
  const auto a = train(ds, ablation);
  const auto b = train(ds, zero_beta);
  EXPECT_TRUE(same(a.models->state(), b.models->state()));
  const auto full = train(ds, toy_config(5));
  EXPECT_FALSE(same(full.models->state(), a.models->state()));
  for (const auto& rep : a.history) EXPECT_GT(rep.losses.enc_a + rep.losses.enc_b, 0.0);
}

TEST(Train, DomainSubsetNeverSamplesExcludedDomains) {
  const auto ds = toy_dataset(4);
  auto cfg = toy_config(40);
  cfg.domain_subset = {"summer", "winter"};
  std::set<std::string> seen;
  TrainOptions opts;
  opts.on_step = [&](const StepReport& r) {
    seen.insert(r.pair.a);
    seen.insert(r.pair.b);
  };
  const auto result = train(ds, cfg, opts);
  EXPECT_EQ(seen, (std::set<std::string>{"summer", "winter"}));
  EXPECT_EQ(result.models->domains(), (std::vector<std::string>{"summer", "winter"}));
  cfg.domain_subset = {"summer", "monsoon"};
  EXPECT_THROW(train(ds, cfg), ConfigError);
  cfg.domain_subset = {"summer"};
  EXPECT_THROW(train(ds, cfg), ConfigError);
  EXPECT_THROW(train(toy_dataset().subset({"summer"}), toy_config()), ConfigError);
}

TEST(Train, DivergenceRaisesWithDiagnosticCheckpoint) {
  const auto ds = toy_dataset();
  testing::TempDir dir;
  auto cfg = toy_config(20);
  cfg.learning_rate = 1e300;
  EXPECT_THROW(train(ds, cfg, {dir.path()}), NumericError);
  bool diagnostic = false;
  for (const auto& e : std::filesystem::directory_iterator(dir.path())) {
    diagnostic |= e.path().filename().string().rfind("diagnostic_step_", 0) == 0;
  }
  EXPECT_TRUE(diagnostic);
}

TEST(TrainingConfig, ValidationAndJson) {
  auto cfg = toy_config();
  EXPECT_NO_THROW(cfg.validate());
  cfg.learning_rate = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = toy_config();
  cfg.adam_beta2 = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = toy_config();
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = toy_config();
  cfg.domain_subset = {"summer", "summer"};
  EXPECT_THROW(cfg.validate(), ConfigError);

  const nlohmann::json j = toy_config();
  EXPECT_EQ(nlohmann::json(j.get<TrainingConfig>()), j);
  auto bad = j;
  bad["learning_rat"] = 1.0;
  EXPECT_THROW(bad.get<TrainingConfig>(), ConfigError);
  const auto defaults = nlohmann::json::object().get<TrainingConfig>();
  EXPECT_EQ(defaults.learning_rate, 2e-5);
  EXPECT_EQ(defaults.adam_beta1, 0.5);
  EXPECT_EQ(defaults.weights.alpha, 10.0);
  EXPECT_EQ(defaults.weights.beta, 1.0);
  EXPECT_EQ(defaults.batch_size, 1);
}

}  // namespace
}  // namespace intrinsic::trainer
