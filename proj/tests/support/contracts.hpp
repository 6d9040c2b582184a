#pragma once

#include <string>
#include <vector>

#include "scalepart/geometry.hpp"
#include "scalepart/inference.hpp"
#include "scalepart/mesh.hpp"
#include "scalepart/triplane.hpp"

// Property checks shared by the unit tests and the acceptance runner. Each returns whether the
// property held plus a one-line measurement.
namespace scalepart::testing {

struct CheckResult {
  bool passed = false;
  std::string detail;
};

// Gradient suite in reference mode; also reports the worst binary32 self-check.
CheckResult gradient_suite_check(std::size_t seeds = 3);
CheckResult loss_identities_check();
CheckResult triplane_fidelity_check();
CheckResult film_contracts_check();
CheckResult post_processing_contracts_check();
CheckResult pipeline_contracts_check();
CheckResult training_determinism_check();
CheckResult inference_determinism_check();

// ---- instances and oracles ---------------------------------------------------------------------

// Two sphere surfaces under one label, centers 1.0 apart on x, each sphere's box diagonal 0.5.
data::AnnotatedCloud two_sphere_cloud(std::size_t points_per_sphere = 400, bool separate_labels = false);

// Points 0..unassigned on a line with unit spacing.
PointSet chain_points(std::size_t unassigned);

// knn_propagate on a chain whose point 0 carries label 0, run with 1..5 rounds.
struct ChainTrace {
  std::vector<std::size_t> voted_after;     // points labeled by votes after r rounds
  std::vector<std::size_t> fallback_after;  // points left to the nearest-assigned fallback
  bool all_labeled = false;                 // with 5 rounds
};
ChainTrace chain_trace(std::size_t unassigned, std::size_t k);

// Independent bilinear evaluation of F(x) = T_xy + T_yz + T_zx in binary64.
std::vector<double> bilinear_oracle(const TriPlaneField& field, const Vec3& p);

std::vector<std::int32_t> resolve_overlaps_oracle(const PointSet& points,
                                                  const std::vector<std::vector<std::uint8_t>>& masks,
                                                  const std::vector<std::vector<float>>& confidences, double alpha);

// Brute-force neighbourhoods, synchronous majority rounds, nearest-assigned fallback.
std::vector<std::int32_t> knn_propagate_oracle(std::vector<std::int32_t> assignment, const PointSet& points,
                                               std::size_t k, std::size_t iterations);

PointSet random_cloud(std::size_t n, std::uint64_t seed, float extent = 1.0f);

}  // namespace scalepart::testing
