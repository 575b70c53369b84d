#pragma once

#include <array>
#include <string>

#include "intrinsic/autograd.hpp"
#include "json.hpp"

namespace intrinsic::objectives {

/// Probabilities are clamped to [eps, 1 - eps] before taking logs.
inline constexpr double kLogGuard = 1e-7;

struct LossWeights {
  double alpha = 10.0;  ///< cycle weight
  double beta = 1.0;    ///< encoder-loss weight

  void validate() const;
};

void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);

/// The six terms of the full objective for one (A, B) domain pair.
struct LossReport {
  double adv_a = 0.0;
  double adv_b = 0.0;
  double cyc_a = 0.0;
  double cyc_b = 0.0;
  double enc_a = 0.0;
  double enc_b = 0.0;
  double total = 0.0;

  std::array<double, 6> terms() const { return {adv_a, adv_b, cyc_a, cyc_b, enc_a, enc_b}; }
  /// Swap the A and B roles of every term.
  LossReport swapped() const;
};

/// mean log D(real) + mean log(1 - D(fake)), the quantity the discriminator
/// ascends. Scores must lie in [0, 1]; NaN or out-of-range scores raise
/// DomainError.
ag::Var adversarial_loss(const ag::Var& real_scores, const ag::Var& fake_scores);

/// The part of the adversarial loss that depends on the generator side.
/// Saturating form: mean log(1 - D(fake)) (descended). Non-saturating form:
/// -mean log D(fake) (descended).
ag::Var generator_adversarial_term(const ag::Var& fake_scores, bool non_saturating);

/// Mean absolute difference between an image batch and its reconstruction.
ag::Var cycle_loss(const ag::Var& original, const ag::Var& reconstructed);

/// Mean absolute difference between the re-encodings of the two generated
/// renderings of the same source.
ag::Var encoder_loss(const ag::Var& rep_via_a, const ag::Var& rep_via_b);

/// adv_a + adv_b + alpha (cyc_a + cyc_b) + beta (enc_a + enc_b).
double full_objective(const LossReport& terms, const LossWeights& weights);

/// Differentiable form of full_objective over scalar term variables, ordered
/// adv_a, adv_b, cyc_a, cyc_b, enc_a, enc_b.
ag::Var full_objective(const std::array<ag::Var, 6>& terms, const LossWeights& weights);

void check_finite(const LossReport& r);

std::string csv_header();
std::string csv_row(std::int64_t step, const LossReport& r);
nlohmann::json to_json_row(std::int64_t step, const LossReport& r);

}  // namespace intrinsic::objectives
