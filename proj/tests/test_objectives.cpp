#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "intrinsic/errors.hpp"
#include "intrinsic/objectives.hpp"
#include "support.hpp"

namespace intrinsic::objectives {
namespace {

using ag::Var;
using testing::random_tensor;

double guarded_log(double p) { return std::log(std::min(std::max(p, kLogGuard), 1.0 - kLogGuard)); }

double oracle_adversarial(const Tensor& real, const Tensor& fake) {
  double a = 0.0, b = 0.0;
  for (double v : real.values()) a += guarded_log(v);
  for (double v : fake.values()) b += guarded_log(1.0 - v);
  return a / static_cast<double>(real.size()) + b / static_cast<double>(fake.size());
}

double oracle_l1(const Tensor& x, const Tensor& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(x[i] - y[i]);
  return s / static_cast<double>(x.size());
}

Shape random_shape(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> d(1, 5);
  return {d(rng), d(rng), d(rng), d(rng)};
}

TEST(AdversarialLoss, MatchesElementwiseOracle) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor real = random_tensor(random_shape(rng), rng, 0.0, 1.0);
    const Tensor fake = random_tensor(random_shape(rng), rng, 0.0, 1.0);
    EXPECT_NEAR(adversarial_loss(Var(real), Var(fake)).item(), oracle_adversarial(real, fake), 1e-12);
  }
}

TEST(AdversarialLoss, PerfectDiscriminatorAndChance) {
  EXPECT_NEAR(adversarial_loss(Var(Tensor(Shape{4}, 0.5)), Var(Tensor(Shape{4}, 0.5))).item(), 2.0 * std::log(0.5),
              1e-15);
  const double saturated = adversarial_loss(Var(Tensor(Shape{2}, 1.0)), Var(Tensor(Shape{2}, 0.0))).item();
  EXPECT_NEAR(saturated, 2.0 * std::log(1.0 - kLogGuard), 1e-15);
  const double worst = adversarial_loss(Var(Tensor(Shape{2}, 0.0)), Var(Tensor(Shape{2}, 1.0))).item();
  EXPECT_TRUE(std::isfinite(worst));
  EXPECT_NEAR(worst, 2.0 * std::log(kLogGuard), 1e-9);
}

TEST(AdversarialLoss, RejectsValuesOutsideTheUnitInterval) {
  const Tensor ok(Shape{2}, 0.5);
  EXPECT_THROW(adversarial_loss(Var(Tensor(Shape{2}, {0.5, 1.5})), Var(ok)), DomainError);
  EXPECT_THROW(adversarial_loss(Var(ok), Var(Tensor(Shape{2}, {-0.1, 0.5}))), DomainError);
  EXPECT_THROW(adversarial_loss(Var(Tensor(Shape{1}, std::numeric_limits<double>::quiet_NaN())), Var(ok)),
               NumericError);
  EXPECT_THROW(generator_adversarial_term(Var(Tensor(Shape{1}, 2.0)), false), DomainError);
}

TEST(GeneratorTerm, SaturatingAndNonSaturatingForms) {
  std::mt19937_64 rng(2);
  const Tensor fake = random_tensor({1, 1, 3, 3}, rng, 0.0, 1.0);
  double sat = 0.0, nonsat = 0.0;
  for (double v : fake.values()) {
    sat += guarded_log(1.0 - v);
    nonsat -= guarded_log(v);
  }
  EXPECT_NEAR(generator_adversarial_term(Var(fake), false).item(), sat / 9.0, 1e-12);
  EXPECT_NEAR(generator_adversarial_term(Var(fake), true).item(), nonsat / 9.0, 1e-12);
}

TEST(CycleAndEncoderLoss, MatchElementwiseOracle) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const Shape s = random_shape(rng);
    const Tensor x = random_tensor(s, rng), y = random_tensor(s, rng);
    EXPECT_NEAR(cycle_loss(Var(x), Var(y)).item(), oracle_l1(x, y), 1e-12);
    EXPECT_NEAR(encoder_loss(Var(x), Var(y)).item(), oracle_l1(x, y), 1e-12);
  }
  const Tensor z(Shape{1, 3, 2, 2}, 0.25);
  EXPECT_EQ(cycle_loss(Var(z), Var(z)).item(), 0.0);
  EXPECT_THROW(cycle_loss(Var(z), Var(Tensor(Shape{1, 3, 2, 3}))), ShapeError);
}

TEST(FullObjective, WeightedCombination) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int trial = 0; trial < 100; ++trial) {
    const LossReport r{u(rng), u(rng), u(rng), u(rng), u(rng), u(rng), 0.0};
    const LossWeights w{std::abs(u(rng)), std::abs(u(rng))};
    const double expect = r.adv_a + r.adv_b + w.alpha * (r.cyc_a + r.cyc_b) + w.beta * (r.enc_a + r.enc_b);
    EXPECT_NEAR(full_objective(r, w), expect, 1e-12);
    std::array<Var, 6> terms;
    const auto t = r.terms();
    for (int i = 0; i < 6; ++i) terms[i] = Var(Tensor::scalar(t[i]));
    EXPECT_NEAR(full_objective(terms, w).item(), expect, 1e-12);
  }
}

TEST(FullObjective, GradientCarriesTheWeights) {
  std::array<Var, 6> terms;
  for (auto& t : terms) t = Var(Tensor::scalar(0.5), true);
  ag::backward(full_objective(terms, LossWeights{10.0, 1.0}));
  const std::array<double, 6> expect{1, 1, 10, 10, 1, 1};
  for (int i = 0; i < 6; ++i) EXPECT_EQ(terms[i].grad()[0], expect[i]);
}

TEST(FullObjective, NonFiniteTermsRaise) {
  LossReport r;
  r.cyc_b = std::numeric_limits<double>::infinity();
  EXPECT_THROW(full_objective(r, {}), NumericError);
  EXPECT_THROW(check_finite(r), NumericError);
  LossReport ok;
  ok.total = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(check_finite(ok), NumericError);
}

TEST(LossWeights, ValidationAndJson) {
  EXPECT_NO_THROW((LossWeights{10.0, 1.0}.validate()));
  EXPECT_THROW((LossWeights{-1.0, 1.0}.validate()), ConfigError);
  EXPECT_THROW((LossWeights{1.0, std::numeric_limits<double>::quiet_NaN()}.validate()), ConfigError);
  const auto w = nlohmann::json{{"alpha", 3.5}}.get<LossWeights>();
  EXPECT_EQ(w.alpha, 3.5);
  EXPECT_EQ(w.beta, 1.0);
}

TEST(LossLog, CsvRowsRoundTrip) {
  const LossReport r{-1.25, -0.5, 0.1, 0.2, 1.0 / 3.0, 0.4, 7.0};
  EXPECT_EQ(csv_header(), "step,adv_A,adv_B,cyc_A,cyc_B,enc_A,enc_B,total");
  std::stringstream ss(csv_row(12, r));
  std::string cell;
  std::vector<double> values;
  while (std::getline(ss, cell, ',')) values.push_back(std::stod(cell));
  ASSERT_EQ(values.size(), 8u);
  EXPECT_EQ(values[0], 12.0);
  EXPECT_EQ(values[5], 1.0 / 3.0);
  EXPECT_EQ(values[7], 7.0);
  EXPECT_EQ(r.swapped().adv_a, -0.5);
  EXPECT_EQ(r.swapped().enc_b, 1.0 / 3.0);
  EXPECT_EQ(to_json_row(3, r)["cyc_B"], 0.2);
}

}  // namespace
}  // namespace intrinsic::objectives
