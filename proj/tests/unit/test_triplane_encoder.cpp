#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "contracts.hpp"
#include "scalepart/contrastive.hpp"
#include "scalepart/encoder.hpp"
#include "scalepart/error.hpp"
#include "scalepart/synthetic.hpp"
#include "scalepart/triplane.hpp"

namespace scalepart {
namespace {

TriPlaneField random_field(std::size_t ch, std::size_t h, std::size_t w, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  TriPlaneField f(ch, h, w);
  for (auto& p : f.planes)
    for (auto& v : p.values()) v = u(rng);
  return f;
}

Tensor random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  Tensor t = Tensor::matrix(r, c);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += double(a[i]) * b[i];
  return s;
}

double dot(const TriPlaneField& a, const TriPlaneField& b) {
  double s = 0.0;
  for (std::size_t p = 0; p < 3; ++p) s += dot(a.planes[p], b.planes[p]);
  return s;
}

TEST(TriPlane, SamplingMatchesBilinearOracle) {
  const TriPlaneField f = random_field(5, 7, 9, 1);
  const PointSet pts = testing::random_cloud(200, 2);
  const Tensor out = sample_point_features(f, pts);
  ASSERT_EQ(out.rows(), 200u);
  ASSERT_EQ(out.cols(), 5u);
  for (std::size_t n = 0; n < pts.size(); ++n) {
    const auto ref = testing::bilinear_oracle(f, pts[n]);
    for (std::size_t c = 0; c < 5; ++c) EXPECT_NEAR(out(n, c), ref[c], 1e-5);
  }
}

TEST(TriPlane, GridNodesReturnStoredCells) {
  const TriPlaneField f = random_field(3, 9, 9, 3);
  PointSet pts;
  std::vector<std::array<std::size_t, 3>> nodes{{0, 0, 0}, {8, 8, 8}, {2, 5, 7}, {4, 4, 1}};
  for (const auto& n : nodes)
    pts.coords.push_back({-1.0f + n[0] / 4.0f, -1.0f + n[1] / 4.0f, -1.0f + n[2] / 4.0f});
  const Tensor out = sample_point_features(f, pts);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto [x, y, z] = nodes[i];
    for (std::size_t c = 0; c < 3; ++c) {
      const double expected = double(f.cell(Plane::XY, x, y)[c]) + f.cell(Plane::YZ, y, z)[c] + f.cell(Plane::ZX, z, x)[c];
      EXPECT_NEAR(out(i, c), expected, 1e-6);
    }
  }
}

TEST(TriPlane, OutOfRangeQueriesAreClamped) {
  const TriPlaneField f = random_field(2, 5, 5, 4);
  const PointSet inside({{1.0f, -1.0f, 0.5f}}), outside({{3.0f, -2.0f, 0.5f}});
  SampleDiagnostics diag;
  const Tensor a = sample_point_features(f, inside), b = sample_point_features(f, outside, &diag);
  EXPECT_EQ(diag.clamped, 1u);
  for (std::size_t c = 0; c < 2; ++c) EXPECT_FLOAT_EQ(a(0, c), b(0, c));
}

TEST(TriPlane, ScatterMeanAveragesSharedCells) {
  // On a 3 x 3 grid, x = -0.95 and x = -1 share row 0; x = 0 is row 1.
  const PointSet pts({{-1.0f, -1.0f, -1.0f}, {-0.95f, -1.0f, -1.0f}, {0.0f, 0.0f, 0.0f}});
  const Tensor lifted({3, 2}, std::vector<float>{1, 2, 3, 4, 10, 20});
  ScatterIndex index;
  const TriPlaneField f = scatter_mean(lifted, pts, 3, 3, &index);
  EXPECT_EQ(f.cell(Plane::XY, 0, 0)[0], 2.0f);
  EXPECT_EQ(f.cell(Plane::XY, 0, 0)[1], 3.0f);
  EXPECT_EQ(f.cell(Plane::XY, 1, 1)[0], 10.0f);
  EXPECT_EQ(f.cell(Plane::XY, 2, 2)[0], 0.0f);  // empty
  EXPECT_EQ(index.counts[0][0], 2u);
  EXPECT_EQ(index.cells[0][2], 4u);
}

TEST(TriPlane, BackwardPassesAreAdjoints) {
  const PointSet pts = testing::random_cloud(60, 5);
  const TriPlaneField t = random_field(4, 6, 6, 6), g_field = random_field(4, 6, 6, 7);

  const Tensor g_points = random_matrix(60, 4, 8);
  TriPlaneField back(4, 6, 6);
  sample_point_features_backward(pts, g_points, back);
  EXPECT_NEAR(dot(sample_point_features(t, pts), g_points), dot(t, back), 1e-4);

  const Tensor lifted = random_matrix(60, 4, 9);
  ScatterIndex index;
  const TriPlaneField scattered = scatter_mean(lifted, pts, 6, 6, &index);
  EXPECT_NEAR(dot(scattered, g_field), dot(lifted, scatter_mean_backward(g_field, index)), 1e-4);

  const Tensor kernel = random_matrix(3, 9 * 4, 10);
  Tensor kernel_3d({3, 9, 4}, 0.0f);
  std::copy(kernel.values().begin(), kernel.values().end(), kernel_3d.values().begin());
  Tensor grad_kernel = Tensor::zeros_like(kernel_3d);
  const TriPlaneField ds = mix_planes_backward(t, kernel_3d, g_field, grad_kernel);
  EXPECT_NEAR(dot(mix_planes(t, kernel_3d), g_field), dot(t, ds), 1e-4);
}

TEST(TriPlane, FidelityContract) {
  const auto r = testing::triplane_fidelity_check();
  EXPECT_TRUE(r.passed) << r.detail;
}

// -log(sum_P e^s / sum_{j != i} e^s) averaged over anchors with a positive, in binary64.
double contrastive_oracle(const Tensor& f, const std::vector<std::uint32_t>& labels, double tau) {
  const std::size_t n = f.rows(), d = f.cols();
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0;
    for (std::size_t c = 0; c < d; ++c) s += double(f(i, c)) * f(i, c);
    norms[i] = std::sqrt(s);
  }
  double total = 0.0;
  std::size_t valid = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double pos = 0.0, all = 0.0;
    bool has = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double s = 0;
      for (std::size_t c = 0; c < d; ++c) s += double(f(i, c)) * f(j, c);
      const double e = std::exp(s / (norms[i] * norms[j] * tau));
      all += e;
      if (labels[j] == labels[i]) {
        pos += e;
        has = true;
      }
    }
    if (!has) continue;
    total += -std::log(pos / all);
    ++valid;
  }
  return total / double(valid);
}

TEST(Contrastive, MatchesNaiveOracle) {
  const Tensor f = random_matrix(10, 8, 11);
  std::vector<std::uint32_t> labels(10);
  for (std::size_t i = 0; i < 10; ++i) labels[i] = std::uint32_t(i % 3);
  const auto r = contrastive_loss(f, labels);
  EXPECT_NEAR(r.loss, contrastive_oracle(f, labels, kDefaultTemperature), 1e-6);
  EXPECT_EQ(r.valid_anchors, 10u);
  EXPECT_EQ(r.grad.shape(), f.shape());
  EXPECT_TRUE(contrastive_loss(f, labels, kDefaultTemperature, false).grad.empty());
}

TEST(Contrastive, SingletonAnchorsAreSkipped) {
  const Tensor f = random_matrix(5, 4, 12);
  const std::vector<std::uint32_t> labels{0, 0, 1, 1, 2};
  const auto r = contrastive_loss(f, labels);
  EXPECT_EQ(r.valid_anchors, 4u);
  EXPECT_NEAR(r.loss, contrastive_oracle(f, labels, kDefaultTemperature), 1e-6);
  EXPECT_THROW(contrastive_loss(f, std::vector<std::uint32_t>{0, 1, 2, 3, 4}), ValidationError);
}

TEST(Contrastive, InvariantToFeatureScaleAndLabelNames) {
  const Tensor f = random_matrix(9, 6, 13);
  Tensor scaled = f;
  for (auto& v : scaled.values()) v *= 3.5f;
  const std::vector<std::uint32_t> labels{0, 1, 2, 0, 1, 2, 0, 1, 2}, renamed{5, 9, 1, 5, 9, 1, 5, 9, 1};
  const double base = contrastive_loss(f, labels).loss;
  EXPECT_NEAR(contrastive_loss(scaled, labels).loss, base, 1e-6);
  EXPECT_NEAR(contrastive_loss(f, renamed).loss, base, 1e-12);
}

TEST(Contrastive, AnchorSubsamplingIsSortedAndDeterministic) {
  const auto labels = data::synthetic_cloud(2, 500).labels;
  const auto a = subsample_anchors(labels, 100, 7), b = subsample_anchors(labels, 100, 7);
  EXPECT_EQ(a.anchors, b.anchors);
  EXPECT_EQ(a.anchors.size(), 100u);
  EXPECT_TRUE(std::is_sorted(a.anchors.begin(), a.anchors.end()));
  EXPECT_EQ(std::adjacent_find(a.anchors.begin(), a.anchors.end()), a.anchors.end());
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(a.labels[i], labels.labels[a.anchors[i]]);
  EXPECT_FALSE(a.used_all);
  EXPECT_NE(subsample_anchors(labels, 100, 8).anchors, a.anchors);
  const auto all = subsample_anchors(labels, 1000, 7);
  EXPECT_TRUE(all.used_all);
  EXPECT_EQ(all.anchors.size(), 500u);
}

EncoderConfig small_encoder() { return {.feature_dim = 12, .hidden_dim = 8, .resolution = 6}; }

TEST(Encoder, FeatureShapeAndDeterministicInit) {
  const PointSet pts = testing::random_cloud(40, 14);
  const Encoder a(small_encoder(), 3), b(small_encoder(), 3);
  const Tensor fa = a.features(pts);
  EXPECT_EQ(fa.rows(), 40u);
  EXPECT_EQ(fa.cols(), 12u);
  EXPECT_EQ(fa, b.features(pts));
}

TEST(Encoder, ZeroLearningRateLeavesParametersUnchanged) {
  Encoder enc(small_encoder(), 4);
  std::vector<Tensor> before;
  for (const auto& p : enc.parameters()) before.push_back(p.value);
  const std::vector<data::AnnotatedCloud> data{data::synthetic_cloud(1, 128), data::synthetic_cloud(2, 128)};
  const auto log = train_encoder(enc, data, {.lr = 0.0, .epochs = 1, .anchors = 64});
  EXPECT_EQ(log.step_loss.size(), 2u);
  std::size_t i = 0;
  for (const auto& p : enc.parameters()) EXPECT_EQ(p.value, before[i++]) << p.name;
}

TEST(Encoder, TrainingLowersContrastiveLoss) {
  Encoder enc(small_encoder(), 5);
  const std::vector<data::AnnotatedCloud> data{data::synthetic_cloud(3, 256)};
  const auto log = train_encoder(enc, data, {.lr = 3e-3, .epochs = 40, .anchors = 128});
  ASSERT_EQ(log.epoch_loss.size(), 40u);
  EXPECT_LT(log.epoch_loss.back(), log.epoch_loss.front());
}

TEST(Encoder, TrainingDeterminismContract) {
  const auto r = testing::training_determinism_check();
  EXPECT_TRUE(r.passed) << r.detail;
}

}  // namespace
}  // namespace scalepart
