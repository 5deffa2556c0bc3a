#include <gtest/gtest.h>

#include <cmath>

#include "clipc/optim.hpp"

namespace clipc {
namespace {

TEST(LrSchedule, JunctionsAndLinearity) {
  const std::int64_t total = 16 * 40, warm = 16 * 5;
  EXPECT_EQ(lr_at(warm, total, warm, 0.003, 1e-5), 0.003);
  EXPECT_EQ(lr_at(total, total, warm, 0.003, 1e-5), 1e-5);
  EXPECT_DOUBLE_EQ(lr_at(warm / 2, total, warm, 0.003, 1e-5), 0.0015);
  EXPECT_EQ(lr_at(0, total, warm, 0.003, 1e-5), 0.0);
}

TEST(LrSchedule, ContinuousAndNonIncreasingAfterWarmup) {
  const std::int64_t total = 1000, warm = 100;
  EXPECT_NEAR(lr_at(warm - 1, total, warm, 0.003, 1e-5), lr_at(warm, total, warm, 0.003, 1e-5), 0.003 / warm + 1e-12);
  double prev = lr_at(warm, total, warm, 0.003, 1e-5);
  for (std::int64_t s = warm + 1; s <= total; ++s) {
    const double cur = lr_at(s, total, warm, 0.003, 1e-5);
    ASSERT_LE(cur, prev) << s;
    prev = cur;
  }
}

TEST(LrSchedule, Preconditions) {
  EXPECT_THROW(lr_at(0, 10, 10, 1, 0), std::invalid_argument);
  EXPECT_THROW(lr_at(11, 10, 2, 1, 0), std::invalid_argument);
  EXPECT_THROW(lr_at(-1, 10, 2, 1, 0), std::invalid_argument);
  EXPECT_EQ(lr_at(0, 10, 0, 1.0, 0.5), 1.0);
}

std::vector<Parameter> scalar_params(double value, double grad, bool decay = true) {
  std::vector<Parameter> ps;
  ps.emplace_back("p", 1, 1, decay);
  ps[0].value(0, 0) = value;
  ps[0].grad(0, 0) = grad;
  return ps;
}

TEST(AdamW, ZeroGradientNoDecayIsIdentity) {
  AdamW opt({0.9, 0.98, 1e-8, 0.0, std::nullopt});
  auto ps = scalar_params(1.25, 0.0);
  for (int i = 0; i < 5; ++i) opt.step(ps, 0.003);
  EXPECT_EQ(ps[0].value(0, 0), 1.25);
}

TEST(AdamW, ZeroGradientDecayScales) {
  AdamW opt({0.9, 0.98, 1e-8, 0.1, std::nullopt});
  std::vector<Parameter> ps;
  ps.emplace_back("w", 3, 2, true);
  ps.emplace_back("ln.gain", 1, 2, false);
  ps[0].value << 1, -2, 3.5, 0.25, -7, 100;
  ps[1].value << 1, 1;
  const MatrixD before = ps[0].value;
  opt.step(ps, 0.003);
  EXPECT_LE((ps[0].value - before * (1 - 0.003 * 0.1)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(ps[1].value, MatrixD::Ones(1, 2));
}

TEST(AdamW, FirstStepByHand) {
  // m = 0.1, v = 0.02; bias corrected m_hat = 1, v_hat = 1; update = lr / (1 + eps).
  const double lr = 0.01, eps = 1e-8;
  AdamW opt({0.9, 0.98, eps, 0.0, std::nullopt});
  auto ps = scalar_params(0.5, 1.0);
  opt.step(ps, lr);
  EXPECT_NEAR(ps[0].value(0, 0), 0.5 - lr / (1 + eps), 1e-15);
  EXPECT_EQ(opt.state().step, 1);
  EXPECT_NEAR(opt.state().m[0](0, 0), 0.1, 1e-15);
  EXPECT_NEAR(opt.state().v[0](0, 0), 0.02, 1e-15);
}

TEST(AdamW, SecondStepByHand) {
  const double lr = 0.01, b1 = 0.9, b2 = 0.98, eps = 1e-8;
  AdamW opt({b1, b2, eps, 0.0, std::nullopt});
  auto ps = scalar_params(0.0, 1.0);
  opt.step(ps, lr);
  ps[0].grad(0, 0) = -2.0;
  opt.step(ps, lr);
  const double m = b1 * 0.1 + (1 - b1) * -2.0, v = b2 * 0.02 + (1 - b2) * 4.0;
  const double expected = -lr / (1 + eps) - lr * (m / (1 - b1 * b1)) / (std::sqrt(v / (1 - b2 * b2)) + eps);
  EXPECT_NEAR(ps[0].value(0, 0), expected, 1e-15);
}

TEST(AdamW, NonFiniteGradientLeavesParametersUntouched) {
  AdamW opt;
  auto ps = scalar_params(2.0, std::nan(""));
  EXPECT_THROW(opt.step(ps, 0.1), std::runtime_error);
  EXPECT_EQ(ps[0].value(0, 0), 2.0);
  EXPECT_EQ(opt.state().step, 0);
}

TEST(AdamW, GradientClippingScalesGlobalNorm) {
  // With clipping the first update direction is unchanged (Adam is scale
  // invariant), but the moments see the clipped gradient.
  AdamW opt({0.9, 0.98, 1e-8, 0.0, 1.0});
  std::vector<Parameter> ps;
  ps.emplace_back("a", 1, 2, true);
  ps[0].grad << 3.0, 4.0;
  opt.step(ps, 0.1);
  EXPECT_NEAR(opt.state().m[0](0, 0), 0.1 * 0.6, 1e-15);
  EXPECT_NEAR(opt.state().m[0](0, 1), 0.1 * 0.8, 1e-15);
}

}  // namespace
}  // namespace clipc
