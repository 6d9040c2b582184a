#include <gtest/gtest.h>

#include "grad_suite.hpp"
#include "scalepart/nn.hpp"

namespace scalepart {
namespace {

using testing::GradMode;

class GradientSuite : public ::testing::TestWithParam<std::size_t> {};

TEST_P(GradientSuite, ReferenceCentralDifferences) {
  const auto c = testing::gradient_suite().at(GetParam());
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto r = c.run({}, seed, GradMode::Reference);
    EXPECT_TRUE(r.passed()) << c.name << " seed " << seed << "\n" << r.summary();
    EXPECT_LT(r.forward_gap, 1e-5) << c.name;
    EXPECT_FALSE(r.entries.empty());
  }
}

INSTANTIATE_TEST_SUITE_P(Ops, GradientSuite, ::testing::Range<std::size_t>(0, 11),
                         [](const auto& info) { return testing::gradient_suite().at(info.param).name; });

TEST(GradientComposites, BlockAndCrossLayer) {
  for (const auto& c : testing::composite_gradient_cases())
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const auto r = c.run({}, seed, GradMode::Reference);
      EXPECT_TRUE(r.passed()) << c.name << " seed " << seed << "\n" << r.summary();
      EXPECT_LT(r.forward_gap, 1e-5) << c.name;
    }
}

// Decoder and encoder end to end: the binary32 directional derivative sums over every
// parameter, so its rounding noise is of order 1e-3 relative; 1e-2 separates that from a
// wrong gradient (sign or factor errors give O(1)).
TEST(GradientComposites, DirectionalDecoderAndEncoder) {
  for (const auto& d : testing::directional_cases())
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      const auto r = d(seed);
      EXPECT_LT(r.rel_error, 1e-2) << r.name << " seed " << seed << " analytic " << r.analytic << " numeric "
                                   << r.numeric;
    }
}

TEST(GradCheck, DetectsWrongGradient) {
  Tensor x({3}, std::vector<float>{0.5f, -1.0f, 2.0f}), g = Tensor::zeros_like(x);
  auto loss = [&] {
    double s = 0.0;
    for (float v : x.values()) s += double(v) * v * v;
    return s;
  };
  auto wrong = [&] {
    for (std::size_t i = 0; i < 3; ++i) g[i] = 2.0f * x[i] * x[i];  // should be 3 x^2
    return loss();
  };
  EXPECT_FALSE(nn::grad_check(loss, wrong, {{"x", &x, &g}}).passed());
  auto right = [&] {
    for (std::size_t i = 0; i < 3; ++i) g[i] = 3.0f * x[i] * x[i];
    return loss();
  };
  EXPECT_TRUE(nn::grad_check(loss, right, {{"x", &x, &g}}).passed());
}

}  // namespace
}  // namespace scalepart
