#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "intrinsic/adam.hpp"
#include "intrinsic/checkpoint.hpp"
#include "intrinsic/data.hpp"
#include "intrinsic/nets.hpp"
#include "intrinsic/objectives.hpp"
#include "json.hpp"

namespace intrinsic::trainer {

struct TrainingConfig {
  double learning_rate = 2e-5;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int batch_size = 1;
  std::int64_t total_steps = 20000;
  std::uint64_t seed = 0;
  objectives::LossWeights weights;
  bool disable_encoder_loss = false;
  bool non_saturating = false;
  std::vector<std::string> domain_subset;  ///< empty means every domain
  std::int64_t checkpoint_every = 1000;
  nets::BundleConfig model;

  void validate() const;
  AdamOptions adam() const { return {learning_rate, adam_beta1, adam_beta2, adam_epsilon}; }
  /// Encoder-loss weight that actually enters the gradients.
  double effective_beta() const { return disable_encoder_loss ? 0.0 : weights.beta; }
};

void to_json(nlohmann::json& j, const TrainingConfig& c);
void from_json(const nlohmann::json& j, TrainingConfig& c);

/// Ordered pair: `a` plays domain A, `b` plays domain B.
struct DomainPair {
  std::string a;
  std::string b;
  friend bool operator==(const DomainPair&, const DomainPair&) = default;
};

/// Uniform draw over the K(K-1)/2 unordered pairs, then a fair coin for the
/// role assignment.
DomainPair pair_scheduler(const std::vector<std::string>& domain_ids, std::mt19937_64& rng);

struct UnpairedBatch {
  Tensor x_a;  ///< (batch, 3, H, W)
  Tensor x_b;
  std::vector<std::int64_t> indices_a;
  std::vector<std::int64_t> indices_b;
};

/// Independent uniform draws (with replacement) from each domain.
UnpairedBatch sample_unpaired_batch(const data::Dataset& dataset, const DomainPair& pair, int batch_size,
                                    std::mt19937_64& rng);

/// Every intermediate of the composite objective for one pair:
///   R_A = E(X_A), X_AB = G_B(R_A), R_AB = E(X_AB), X_ABA = G_A(R_AB),
///   X_AA = G_A(R_A), R_AA = E(X_AA) and the mirrored B-side quantities.
struct ObjectiveGraph {
  ag::Var adv_a, adv_b, cyc_a, cyc_b, enc_a, enc_b;
  /// Scalar the encoder/generators descend.
  ag::Var generator_objective;
  /// Eq.-style total with the effective weights.
  ag::Var total;
  objectives::LossReport report;
};

struct ObjectiveOptions {
  objectives::LossWeights weights;
  bool disable_encoder_loss = false;
  bool non_saturating = false;
};

ObjectiveGraph build_objective(const nets::ModelBundle& models, const DomainPair& pair, const Tensor& x_a,
                               const Tensor& x_b, const ObjectiveOptions& options);

/// Optimizer state: one Adam over {E, G_*}, one over {D_*}.
struct OptimizerState {
  OptimizerState(const nets::ModelBundle& models, const AdamOptions& options);
  Adam encoder_generators;
  Adam discriminators;

  std::vector<std::pair<std::string, Tensor>> state() const;
  void load_state(const std::vector<std::pair<std::string, Tensor>>& arrays);
};

struct StepReport {
  std::int64_t step = 0;
  DomainPair pair;
  objectives::LossReport losses;
  double wall_seconds = 0.0;
  std::vector<std::int64_t> indices_a;
  std::vector<std::int64_t> indices_b;
};

/// Called between the discriminator phase and the encoder/generator phase.
using PhaseHook = std::function<void()>;

/// Phase 1: one ascent step on D_A, D_B with E and G fixed. Phase 2: one
/// descent step on E, G_A, G_B with D fixed. Returns the phase-2 losses.
StepReport train_step(const nets::ModelBundle& models, const DomainPair& pair, const UnpairedBatch& batch,
                      const TrainingConfig& cfg, OptimizerState& optim, const PhaseHook& after_discriminator = {});

struct TrainOptions {
  std::optional<std::filesystem::path> output_dir;  ///< checkpoints and logs
  std::optional<Checkpoint> resume;
  std::function<void(const StepReport&)> on_step;
};

struct TrainResult {
  std::unique_ptr<nets::ModelBundle> models;
  Checkpoint checkpoint;
  std::vector<StepReport> history;
};

/// Full checkpoint of a training run: bundle parameters, optimizer moments,
/// RNG state, step counter and training config.
Checkpoint training_checkpoint(const nets::ModelBundle& models, const OptimizerState& optim,
                               const TrainingConfig& cfg, std::int64_t step, const std::mt19937_64& rng);

/// Alternating optimization over cfg.total_steps iterations of
/// pair_scheduler -> sample_unpaired_batch -> train_step. Deterministic in
/// cfg.seed. With `resume`, continues from the checkpoint's step counter.
TrainResult train(const data::Dataset& dataset, const TrainingConfig& cfg, const TrainOptions& options = {});

}  // namespace intrinsic::trainer
