#include "intrinsic/objectives.hpp"

#include <cmath>
#include <cstdio>

#include "intrinsic/errors.hpp"
#include "intrinsic/ops.hpp"

namespace intrinsic::objectives {

namespace {

void require_probabilities(const ag::Var& scores, const char* what) {
  for (double v : scores.value().values()) {
    if (!std::isfinite(v)) throw NumericError(std::string(what) + " score is not finite");
    if (v < 0.0 || v > 1.0) {
      throw DomainError(std::string(what) + " score " + std::to_string(v) + " lies outside [0, 1]");
    }
  }
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void LossWeights::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw ConfigError("loss weights must be non-negative");
}

void to_json(nlohmann::json& j, const LossWeights& w) { j = {{"alpha", w.alpha}, {"beta", w.beta}}; }

void from_json(const nlohmann::json& j, LossWeights& w) {
  w.alpha = j.value("alpha", w.alpha);
  w.beta = j.value("beta", w.beta);
}

LossReport LossReport::swapped() const {
  return {adv_b, adv_a, cyc_b, cyc_a, enc_b, enc_a, total};
}

ag::Var adversarial_loss(const ag::Var& real_scores, const ag::Var& fake_scores) {
  require_probabilities(real_scores, "real");
  require_probabilities(fake_scores, "fake");
  auto real_term = ag::mean(ag::log_clamped(real_scores, kLogGuard));
  auto fake_term = ag::mean(ag::log_clamped(ag::one_minus(fake_scores), kLogGuard));
  return ag::weighted_sum({real_term, fake_term}, {1.0, 1.0});
}

ag::Var generator_adversarial_term(const ag::Var& fake_scores, bool non_saturating) {
  require_probabilities(fake_scores, "fake");
  if (non_saturating) {
    return ag::weighted_sum({ag::mean(ag::log_clamped(fake_scores, kLogGuard))}, {-1.0});
  }
  return ag::mean(ag::log_clamped(ag::one_minus(fake_scores), kLogGuard));
}

ag::Var cycle_loss(const ag::Var& original, const ag::Var& reconstructed) {
  return ag::l1_mean(reconstructed, original);
}

ag::Var encoder_loss(const ag::Var& rep_via_a, const ag::Var& rep_via_b) {
  return ag::l1_mean(rep_via_a, rep_via_b);
}

double full_objective(const LossReport& t, const LossWeights& w) {
  for (double v : t.terms()) {
    if (!std::isfinite(v)) throw NumericError("non-finite loss term " + std::to_string(v));
  }
  return t.adv_a + t.adv_b + w.alpha * t.cyc_a + w.alpha * t.cyc_b + w.beta * t.enc_a + w.beta * t.enc_b;
}

ag::Var full_objective(const std::array<ag::Var, 6>& terms, const LossWeights& w) {
  for (const auto& t : terms) {
    if (!std::isfinite(t.item())) throw NumericError("non-finite loss term " + std::to_string(t.item()));
  }
  return ag::weighted_sum({terms.begin(), terms.end()}, {1.0, 1.0, w.alpha, w.alpha, w.beta, w.beta});
}

void check_finite(const LossReport& r) {
  for (double v : r.terms()) {
    if (!std::isfinite(v)) throw NumericError("non-finite loss term");
  }
  if (!std::isfinite(r.total)) throw NumericError("non-finite total loss");
}

std::string csv_header() { return "step,adv_A,adv_B,cyc_A,cyc_B,enc_A,enc_B,total"; }

std::string csv_row(std::int64_t step, const LossReport& r) {
  std::string s = std::to_string(step);
  for (double v : r.terms()) s += "," + fmt(v);
  s += "," + fmt(r.total);
  return s;
}

nlohmann::json to_json_row(std::int64_t step, const LossReport& r) {
  return {{"step", step},   {"adv_A", r.adv_a}, {"adv_B", r.adv_b}, {"cyc_A", r.cyc_a},
          {"cyc_B", r.cyc_b}, {"enc_A", r.enc_a}, {"enc_B", r.enc_b}, {"total", r.total}};
}

}  // namespace intrinsic::objectives
