#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "intrinsic/adam.hpp"
#include "intrinsic/errors.hpp"

namespace intrinsic {
namespace {

using ag::Var;

void set_grad(Var& p, double g) {
  p.zero_grad();
  p.node()->accumulate(Tensor(p.shape(), g));
}

TEST(Adam, ConstantGradientMatchesClosedForm) {
  // With a constant gradient g the bias-corrected moments are exactly g and
  // g^2, so every step moves theta by lr * g / (|g| + eps).
  const AdamOptions opt{2e-5, 0.5, 0.999, 1e-8};
  for (double g : {0.3, -2.0, 1e-3}) {
    Var theta(Tensor::scalar(1.5), true);
    Adam adam(opt, {{"theta", theta}});
    for (int t = 1; t <= 25; ++t) {
      set_grad(theta, g);
      adam.step();
      const double expect = 1.5 - t * opt.learning_rate * g / (std::abs(g) + opt.epsilon);
      EXPECT_NEAR(theta.item(), expect, 1e-12) << "g=" << g << " t=" << t;
    }
  }
}

TEST(Adam, SingleStepFromMomentFormulas) {
  const AdamOptions opt{0.1, 0.9, 0.99, 1e-8};
  Var theta(Tensor::scalar(0.0), true);
  Adam adam(opt, {{"theta", theta}});
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  double m = 0.0, v = 0.0, ref = 0.0;
  for (int t = 1; t <= 10; ++t) {
    const double g = n(rng);
    set_grad(theta, g);
    adam.step();
    m = opt.beta1 * m + (1 - opt.beta1) * g;
    v = opt.beta2 * v + (1 - opt.beta2) * g * g;
    ref -= opt.learning_rate * (m / (1 - std::pow(opt.beta1, t))) /
           (std::sqrt(v / (1 - std::pow(opt.beta2, t))) + opt.epsilon);
    EXPECT_NEAR(theta.item(), ref, 1e-12);
  }
}

TEST(Adam, ParametersWithoutGradientAreUntouched) {
  Var a(Tensor::scalar(1.0), true), b(Tensor::scalar(2.0), true);
  Adam adam({}, {{"a", a}, {"b", b}});
  set_grad(a, 0.5);
  adam.step();
  EXPECT_NE(a.item(), 1.0);
  EXPECT_EQ(b.item(), 2.0);
  const auto state = adam.state("opt");
  auto find = [&](const std::string& n) {
    for (const auto& [k, t] : state)
      if (k == n) return t;
    return Tensor();
  };
  EXPECT_EQ(find("opt.t.a").item(), 1.0);
  EXPECT_EQ(find("opt.t.b").item(), 0.0);
  EXPECT_EQ(find("opt.m.b").item(), 0.0);
}

TEST(Adam, StateRoundTripContinuesIdentically) {
  Var a(Tensor(Shape{3}, {0.1, 0.2, 0.3}), true);
  Var a2(Tensor(Shape{3}, {0.1, 0.2, 0.3}), true);
  Adam first({}, {{"a", a}});
  for (int i = 0; i < 3; ++i) {
    set_grad(a, 0.1 * (i + 1));
    first.step();
  }
  a2.mutable_value() = a.value();
  Adam second({}, {{"a", a2}});
  second.load_state("x", first.state("x"));
  set_grad(a, -0.7);
  set_grad(a2, -0.7);
  first.step();
  second.step();
  EXPECT_TRUE(bit_identical(a.value(), a2.value()));
  EXPECT_THROW(second.load_state("y", first.state("x")), DataError);
}

TEST(Adam, ZeroGradClearsAccumulation) {
  Var a(Tensor::scalar(1.0), true);
  Adam adam({}, {{"a", a}});
  set_grad(a, 1.0);
  adam.zero_grad();
  EXPECT_FALSE(a.has_grad());
  adam.step();
  EXPECT_EQ(a.item(), 1.0);
}

TEST(Adam, OptionValidation) {
  EXPECT_THROW((AdamOptions{0.0, 0.5, 0.999, 1e-8}.validate()), ConfigError);
  EXPECT_THROW((AdamOptions{1e-3, 1.0, 0.999, 1e-8}.validate()), ConfigError);
  EXPECT_THROW((AdamOptions{1e-3, 0.5, -0.1, 1e-8}.validate()), ConfigError);
  EXPECT_NO_THROW((AdamOptions{1e-3, 0.0, 0.0, 1e-8}.validate()));
}

}  // namespace
}  // namespace intrinsic
