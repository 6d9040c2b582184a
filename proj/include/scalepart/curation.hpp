#pragma once

#include <cstdint>
#include <vector>

#include "scalepart/geometry.hpp"
#include "scalepart/mesh.hpp"
#include "scalepart/validator.hpp"

namespace scalepart::data {

struct RefineConfig {
  double eps_factor = 0.15;
  std::size_t min_pts = kDefaultMinPts;
};

// Splits every label whose points form several density clusters at
// eps = aabb_diagonal(label points) * eps_factor into one fresh label per cluster. Noise points
// join the cluster of their nearest clustered point with the same original label. Labels never
// merge; new ids are assigned in (original label, cluster) order. Point order is preserved.
AnnotatedCloud connectivity_refine(const AnnotatedCloud& cloud, const RefineConfig& cfg = {});

struct PartCountBounds {
  std::uint32_t min_parts = 2;
  std::uint32_t max_parts = 50;
};

// True iff the number of non-empty parts lies in [min_parts, max_parts].
bool part_count_filter(const AnnotatedCloud& cloud, const PartCountBounds& bounds = {});

struct CurationConfig {
  RefineConfig refine;
  PartCountBounds bounds;
  double quality_threshold = 0.5;
};

struct CurationStats {
  std::size_t input = 0;
  std::size_t after_quality = 0;
  std::size_t labels_split = 0;  // labels added by connectivity refinement
  std::size_t kept = 0;
};

// Annotation -> quality filtering -> connectivity refinement -> part-count filtering. Input
// clouds are normalised to the unit sphere first. Quality filtering is skipped when
// `validator` is null.
std::vector<AnnotatedCloud> curate(const std::vector<AnnotatedCloud>& annotated, const CurationConfig& cfg,
                                   const ValidatorModel* validator, CurationStats* stats = nullptr);

}  // namespace scalepart::data
