#include <gtest/gtest.h>

#include <algorithm>
#include <limits>

#include "contracts.hpp"
#include "scalepart/error.hpp"
#include "scalepart/inference.hpp"
#include "scalepart/synthetic.hpp"

namespace scalepart {
namespace {

TEST(Inference, PostProcessingContracts) {
  const auto r = testing::post_processing_contracts_check();
  EXPECT_TRUE(r.passed) << r.detail;
}

TEST(Inference, ChainTracesWithTwoNeighbours) {
  const auto six = testing::chain_trace(6, 2);
  EXPECT_EQ(six.voted_after, (std::vector<std::size_t>{1, 2, 3, 4, 6}));
  EXPECT_EQ(six.fallback_after, (std::vector<std::size_t>{5, 4, 3, 2, 0}));
  EXPECT_TRUE(six.all_labeled);
  const auto seven = testing::chain_trace(7, 2);
  EXPECT_EQ(seven.voted_after, (std::vector<std::size_t>{1, 2, 3, 4, 5}));
  EXPECT_EQ(seven.fallback_after, (std::vector<std::size_t>{6, 5, 4, 3, 2}));
  EXPECT_TRUE(seven.all_labeled);
}

TEST(Inference, ThresholdIsInclusive) {
  const auto p = threshold_probabilities({0.69f, 0.7f, 0.95f, 0.1f}, 0.7f);
  EXPECT_EQ(p.mask, (std::vector<std::uint8_t>{0, 1, 1, 0}));
  EXPECT_DOUBLE_EQ(p.positive_ratio, 0.5);
}

TEST(Inference, ResolveOverlapsHigherConfidenceWins) {
  const PointSet pts({{0, 0, 0}, {1, 0, 0}});
  const std::vector<std::vector<std::uint8_t>> masks{{1, 1}, {1, 0}};
  const std::vector<std::vector<float>> conf{{0.8f, 0.8f}, {0.9f, 0.1f}};
  EXPECT_EQ(resolve_overlaps(pts, masks, conf, 1.0), (std::vector<std::int32_t>{1, 0}));
}

TEST(Inference, ResolveOverlapsTieGoesToLowerIndex) {
  const PointSet pts({{0, 0, 0}, {1, 0, 0}, {2, 0, 0}});
  const std::vector<std::vector<std::uint8_t>> masks{{1, 1, 1}, {1, 1, 1}, {0, 0, 0}};
  const std::vector<std::vector<float>> conf{{0.1f, 0.1f, 0.1f}, {0.9f, 0.9f, 0.9f}, {0, 0, 0}};
  EXPECT_EQ(resolve_overlaps(pts, masks, conf, 0.0), (std::vector<std::int32_t>{0, 0, 0}));
}

TEST(Inference, ResolveOverlapsNearerCenterWins) {
  const PointSet pts({{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {10, 0, 0}});
  const std::vector<std::vector<std::uint8_t>> masks{{1, 1, 1, 0}, {0, 0, 1, 1}};
  const std::vector<std::vector<float>> conf{{0, 0, 0, 0}, {1, 1, 1, 1}};
  EXPECT_EQ(resolve_overlaps(pts, masks, conf, 0.0), (std::vector<std::int32_t>{0, 0, 0, 1}));
  EXPECT_EQ(resolve_overlaps(pts, masks, conf, 1.0), (std::vector<std::int32_t>{0, 0, 1, 1}));
}

TEST(Inference, ResolveOverlapsMatchesOracle) {
  for (std::uint64_t t = 0; t < 20; ++t) {
    const PointSet pts = testing::random_cloud(80, 300 + t);
    Rng rng(t);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    std::vector<std::vector<std::uint8_t>> masks(3, std::vector<std::uint8_t>(80));
    std::vector<std::vector<float>> conf(3, std::vector<float>(80));
    for (std::size_t m = 0; m < 3; ++m)
      for (std::size_t i = 0; i < 80; ++i) {
        conf[m][i] = u(rng);
        masks[m][i] = u(rng) < 0.5f;
      }
    for (double alpha : {0.0, 0.5, 1.0})
      EXPECT_EQ(resolve_overlaps(pts, masks, conf, alpha), testing::resolve_overlaps_oracle(pts, masks, conf, alpha));
  }
}

TEST(Inference, PropagationSurroundedPointTakesNeighbourLabel) {
  std::vector<Vec3> c{{0, 0, 0}, {1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  std::vector<std::int32_t> z{-1, 2, 2, 2, 2, 2, 2};
  for (int i = 0; i < 4; ++i) {
    c.push_back({10.0f + i, 0, 0});
    z.push_back(0);
  }
  const PointSet pts(c);
  PropagationStats stats;
  const auto out = knn_propagate(z, knn(pts, 6), pts, 5, &stats);
  EXPECT_EQ(out[0], 2);
  EXPECT_EQ(stats.voted, 1u);
  EXPECT_EQ(stats.fallback_assigned, 0u);
}

TEST(Inference, PropagationLeavesFullAssignmentAndRejectsEmpty) {
  const PointSet pts = testing::random_cloud(30, 7);
  std::vector<std::int32_t> z(30);
  for (std::size_t i = 0; i < 30; ++i) z[i] = std::int32_t(i % 3);
  PropagationStats stats;
  EXPECT_EQ(knn_propagate(z, knn(pts, 4), pts, 5, &stats), z);
  EXPECT_EQ(stats.voted + stats.fallback_assigned, 0u);
  EXPECT_THROW(knn_propagate(std::vector<std::int32_t>(30, -1), knn(pts, 4), pts), ValidationError);
}

TEST(Inference, PropagationMatchesOracle) {
  for (std::uint64_t t = 0; t < 20; ++t) {
    const PointSet pts = testing::random_cloud(120, 400 + t);
    Rng rng(t);
    std::vector<std::int32_t> z(120, -1);
    for (auto& v : z)
      if (rng() % 4 == 0) v = std::int32_t(rng() % 3);
    z[0] = 1;
    for (std::size_t k : {3u, 8u})
      EXPECT_EQ(knn_propagate(z, knn(pts, k), pts, 5), testing::knn_propagate_oracle(z, pts, k, 5));
  }
}

TEST(Inference, DisjointCoveringMasksPassThrough) {
  const PointSet pts = testing::random_cloud(50, 8);
  std::vector<MaskPrediction> preds;
  for (std::size_t m = 0; m < 3; ++m) {
    std::vector<float> prob(50);
    for (std::size_t i = 0; i < 50; ++i) prob[i] = i % 3 == m ? 0.9f : 0.2f;
    preds.push_back(threshold_probabilities(prob, kDefaultThreshold));
  }
  const auto r = full_segment_from_predictions(pts, preds);
  EXPECT_FALSE(r.confidence_fallback);
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(r.labels[i], i % 3);
}

TEST(Inference, IntersectionOverUnion) {
  const std::vector<std::uint8_t> a{0, 1, 1, 1, 0}, b{0, 0, 1, 1, 1}, none(5, 0);
  bool degenerate = true;
  EXPECT_DOUBLE_EQ(iou(a, b, &degenerate), 0.5);
  EXPECT_FALSE(degenerate);
  EXPECT_DOUBLE_EQ(iou(none, none, &degenerate), 1.0);
  EXPECT_TRUE(degenerate);
  EXPECT_DOUBLE_EQ(iou(a, none), 0.0);
}

TEST(Inference, ObjectAndDatasetMeanIoU) {
  const auto gt = PartLabelMap::from_labels({0, 0, 1, 1});
  const auto o = object_iou("a", gt, {{1, 1, 0, 0}, {0, 1, 1, 1}});
  ASSERT_EQ(o.parts.size(), 2u);
  EXPECT_DOUBLE_EQ(o.parts[1], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(o.miou, (1.0 + 2.0 / 3.0) / 2.0);
  ObjectIoU other{"b", 0.5, {0.5}};
  EXPECT_DOUBLE_EQ(mean_iou("x", {o, other}).dataset_miou, (o.miou + 0.5) / 2.0);
}

TEST(Inference, PromptPointIsFarthestFromOtherParts) {
  // Parts on either side of the plane x = 0.
  std::vector<Vec3> c;
  std::vector<std::uint32_t> l;
  for (int i = 1; i <= 4; ++i) {
    c.push_back({-0.25f * i, 0.1f * (i % 2), 0});
    l.push_back(0);
    c.push_back({0.25f * i, 0, 0.1f * (i % 2)});
    l.push_back(1);
  }
  const PointSet pts(c);
  const auto labels = PartLabelMap::from_labels(l);
  EXPECT_EQ(select_prompt_point(labels, 0, pts), 6u);  // x = -1
  EXPECT_EQ(select_prompt_point(labels, 1, pts), 7u);  // x = +1
}

TEST(Inference, PromptPointMatchesOracle) {
  const auto cloud = data::synthetic_cloud(9, 300);
  for (std::uint32_t part = 0; part < cloud.labels.part_count; ++part) {
    std::size_t best = 0;
    double best_d = -1.0;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      if (cloud.labels.labels[i] != part) continue;
      double nearest = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < cloud.size(); ++j)
        if (cloud.labels.labels[j] != part) nearest = std::min(nearest, squared_distance(cloud.points[i], cloud.points[j]));
      if (nearest > best_d) {
        best_d = nearest;
        best = i;
      }
    }
    EXPECT_EQ(select_prompt_point(cloud.labels, part, cloud.points), best) << part;
  }
}

TEST(Inference, PartScaleIsPointShare) {
  const auto labels = PartLabelMap::from_labels({0, 0, 0, 1, 1, 1, 1, 1, 1, 1});
  EXPECT_DOUBLE_EQ(part_scale(labels, 0), 0.3);
  EXPECT_DOUBLE_EQ(part_scale(labels, 1), 0.7);
}

TEST(Inference, DeterministicAcrossReload) {
  const auto r = testing::inference_determinism_check();
  EXPECT_TRUE(r.passed) << r.detail;
}

TEST(Inference, PipelineContracts) {
  const auto r = testing::pipeline_contracts_check();
  EXPECT_TRUE(r.passed) << r.detail;
}

}  // namespace
}  // namespace scalepart
