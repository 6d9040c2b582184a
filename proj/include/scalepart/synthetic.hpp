#pragma once

#include <cstdint>

#include "scalepart/mesh.hpp"

namespace scalepart::data {

struct SyntheticConfig {
  std::uint32_t min_parts = 2;
  std::uint32_t max_parts = 8;
  // Relative surface-area weights of the parts are drawn from [1, max_area_ratio].
  double max_area_ratio = 3.0;
  // Allowed interpenetration depth between primitives, in units of the unit primitive size.
  double overlap_tolerance = 0.01;
  std::uint32_t max_attempts = 64;
};

// Random assembly of posed primitives (box, cylinder, sphere, torus), one part per primitive.
// Every new primitive is slid along a random direction until it rests against the assembly,
// and rejected if it interpenetrates any earlier primitive. Deterministic per seed.
// Throws ValidationError unless 2 <= min_parts <= max_parts <= 50.
LabeledMesh generate_synthetic_shape(std::uint64_t seed, const SyntheticConfig& cfg = {});

// Generated shape sampled with n surface points, normalized to the unit sphere, labels compacted.
AnnotatedCloud synthetic_cloud(std::uint64_t seed, std::size_t n = 2048, const SyntheticConfig& cfg = {});

}  // namespace scalepart::data
