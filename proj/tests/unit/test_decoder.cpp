#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "contracts.hpp"
#include "scalepart/decoder.hpp"
#include "scalepart/decoder_training.hpp"
#include "scalepart/error.hpp"
#include "scalepart/synthetic.hpp"

namespace scalepart {
namespace {

DecoderConfig small_config() {
  return {.dim = 24, .heads = 2, .ffn_hidden = 32, .scale_pairs = 8, .modulator_layers = 2, .cross_layers = 2,
          .anchor_count = 16};
}

Tensor random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  Tensor t = Tensor::matrix(r, c);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

void randomize(nn::ParameterStore& store, std::uint64_t seed, float range) {
  Rng rng(seed);
  std::uniform_real_distribution<float> u(-range, range);
  for (auto& p : store)
    for (auto& v : p.value.values()) v = u(rng);
}

TEST(PositionalEncoding, LayoutAndFrequencies) {
  const auto f = positional_frequencies(24);
  ASSERT_EQ(f.size(), 4u);
  EXPECT_DOUBLE_EQ(f.front(), 1.0);
  EXPECT_NEAR(f.back(), 64.0, 1e-9);
  const PointSet p({{0.3f, -0.2f, 0.7f}});
  const Tensor pe = positional_encoding(p, 24);
  EXPECT_NEAR(pe(0, 0), std::sin(0.3f), 1e-6);
  EXPECT_NEAR(pe(0, 1), std::cos(0.3f), 1e-6);
  EXPECT_NEAR(pe(0, 8), std::sin(-0.2f), 1e-6);
  EXPECT_NEAR(pe(0, 16), std::sin(0.7f), 1e-6);
}

TEST(PositionalEncoding, SeparatesSmallHeightDifferences) {
  for (float dz : {0.01f, 0.05f, 0.3f}) {
    const PointSet p({{0.1f, 0.2f, 0.0f}, {0.1f, 0.2f, dz}});
    const Tensor pe = positional_encoding(p, 96);
    double d = 0.0;
    for (std::size_t c = 0; c < 96; ++c) d += std::pow(double(pe(0, c)) - pe(1, c), 2);
    EXPECT_GT(std::sqrt(d), 1e-3) << dz;
  }
}

TEST(PositionalEncoding, RejectsBadDimension) {
  const PointSet p({{0, 0, 0}});
  EXPECT_THROW(positional_encoding(p, 0), ValidationError);
  EXPECT_THROW(positional_encoding(p, 20), ValidationError);
}

TEST(Decoder, AnchorsCommuteWithPermutation) {
  const PointSet p = testing::random_cloud(50, 1);
  std::vector<std::size_t> perm(50);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), Rng(2));
  PointSet q;
  for (auto i : perm) q.coords.push_back(p[i]);
  const auto a = select_anchors(p, 16), b = select_anchors(q, 16);
  ASSERT_EQ(a.size(), 16u);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(perm[b[i]], a[i]);
  EXPECT_EQ(select_anchors(p, 80).size(), 50u);
}

TEST(Decoder, ScaleClampAndDropout) {
  bool clamped = false;
  EXPECT_EQ(clamp_scale(1.5f, &clamped), 1.0f);
  EXPECT_TRUE(clamped);
  EXPECT_EQ(clamp_scale(-0.2f, &clamped), 0.0f);
  EXPECT_TRUE(clamped);
  EXPECT_EQ(clamp_scale(0.3f, &clamped), 0.3f);
  EXPECT_FALSE(clamped);

  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    EXPECT_EQ(scale_dropout(0.4f, 0.0, rng), std::optional<float>(0.4f));
    EXPECT_FALSE(scale_dropout(0.4f, 1.0, rng).has_value());
    EXPECT_FALSE(scale_dropout(std::nullopt, 0.0, rng).has_value());
  }
  std::size_t dropped = 0;
  for (int i = 0; i < 2000; ++i) dropped += !scale_dropout(0.4f, 0.1, rng).has_value();
  EXPECT_NEAR(dropped / 2000.0, 0.1, 0.03);
}

TEST(Decoder, FilmContracts) {
  const auto r = testing::film_contracts_check();
  EXPECT_TRUE(r.passed) << r.detail;
}

TEST(Decoder, FreshFilmProjectionIsZero) {
  Decoder dec(small_config(), 1);
  for (std::size_t l = 0; l < small_config().modulator_layers; ++l) {
    for (float v : dec.film(l).projection().weight().value.values()) EXPECT_EQ(v, 0.0f);
    for (float v : dec.film(l).projection().bias().value.values()) EXPECT_EQ(v, 0.0f);
    EXPECT_FLOAT_EQ(dec.film(l).gate().value[0], 0.1f);
  }
}

TEST(Decoder, OutOfRangeScaleIsClamped) {
  Decoder dec(small_config(), 2);
  randomize(dec.parameters(), 4, 0.3f);
  const PointSet p = testing::random_cloud(30, 5);
  const Tensor f = random_matrix(30, 24, 6);
  EXPECT_EQ(dec.forward(f, p, 3, 1.7f), dec.forward(f, p, 3, 1.0f));
  EXPECT_EQ(dec.forward(f, p, 3, -0.5f), dec.forward(f, p, 3, 0.0f));
}

TEST(Decoder, PermutationEquivariant) {
  Decoder dec(small_config(), 3);
  randomize(dec.parameters(), 7, 0.3f);
  const PointSet p = testing::random_cloud(40, 8);
  const Tensor f = random_matrix(40, 24, 9);
  std::vector<std::size_t> perm(40);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), Rng(10));
  PointSet q;
  Tensor g = Tensor::matrix(40, 24);
  std::size_t prompt_q = 0;
  for (std::size_t i = 0; i < 40; ++i) {
    q.coords.push_back(p[perm[i]]);
    std::copy(f.row(perm[i]).begin(), f.row(perm[i]).end(), g.row(i).begin());
    if (perm[i] == 11) prompt_q = i;
  }
  for (std::optional<float> s : {std::optional<float>{}, std::optional<float>{0.4f}}) {
    const Tensor a = dec.forward(f, p, 11, s), b = dec.forward(g, q, prompt_q, s);
    for (std::size_t i = 0; i < 40; ++i) EXPECT_NEAR(b[i], a[perm[i]], 1e-5);
  }
}

TEST(Decoder, ProbabilitiesStayInsideClamp) {
  Decoder dec(small_config(), 4);
  randomize(dec.parameters(), 11, 2.0f);
  const Tensor prob = dec.forward(random_matrix(30, 24, 12), testing::random_cloud(30, 13), 0, 0.5f);
  for (float v : prob.values()) {
    EXPECT_GE(v, nn::kProbClamp);
    EXPECT_LE(v, 1.0f - nn::kProbClamp);
  }
}

TEST(DecoderTraining, TargetSampleIsConsistent) {
  const auto cloud = data::synthetic_cloud(5, 400);
  Rng rng(14);
  for (int i = 0; i < 20; ++i) {
    const TrainSample s = sample_target_part(cloud, rng);
    std::size_t positives = 0;
    for (std::size_t n = 0; n < cloud.size(); ++n) {
      EXPECT_EQ(s.mask[n], cloud.labels.labels[n] == s.part ? 1 : 0);
      positives += s.mask[n];
    }
    EXPECT_EQ(s.mask[s.prompt], 1);
    EXPECT_FLOAT_EQ(s.scale, float(positives) / 400.0f);
  }
}

TEST(DecoderTraining, ExampleKeepsPromptAndSubsetMask) {
  const auto cloud = data::synthetic_cloud(6, 400);
  const Encoder enc({.feature_dim = 24, .hidden_dim = 8, .resolution = 6}, 1);
  Rng rng(15);
  const TrainSample s = sample_target_part(cloud, rng);
  const DecoderExample ex = make_example(enc, cloud, s, 64, 16);
  ASSERT_EQ(ex.points.size(), 64u);
  EXPECT_EQ(ex.features.rows(), 64u);
  EXPECT_EQ(ex.mask[ex.prompt], 1);
  EXPECT_EQ(ex.points[ex.prompt], cloud.points[s.prompt]);
}

TEST(DecoderTraining, ZeroLearningRateLeavesParametersUnchanged) {
  const std::vector<data::AnnotatedCloud> data{data::synthetic_cloud(1, 256), data::synthetic_cloud(2, 256)};
  const Encoder enc({.feature_dim = 24, .hidden_dim = 8, .resolution = 6}, 1);
  Decoder dec(small_config(), 5);
  std::vector<Tensor> before;
  for (const auto& p : dec.parameters()) before.push_back(p.value);
  DecoderTrainConfig cfg;
  cfg.lr = 0.0;
  cfg.epochs = 1;
  cfg.batch = 2;
  cfg.points_per_sample = 64;
  const auto log = train_decoder(dec, enc, data, cfg);
  EXPECT_EQ(log.epoch_loss.size(), 1u);
  std::size_t i = 0;
  for (const auto& p : dec.parameters()) EXPECT_EQ(p.value, before[i++]) << p.name;
}

}  // namespace
}  // namespace scalepart
