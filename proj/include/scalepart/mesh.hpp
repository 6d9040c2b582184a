#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scalepart/geometry.hpp"

namespace scalepart::data {

struct Triangle {
  Vec3 a, b, c;
  std::uint32_t part = 0;

  double area() const;
};

// Triangle soup with one part id per triangle; ids are contiguous in [0, part_count).
struct LabeledMesh {
  std::vector<Triangle> triangles;
  std::uint32_t part_count = 0;

  double surface_area() const;
  std::vector<double> part_areas() const;
};

enum class Stage : std::uint8_t { Raw = 0, Filtered = 1, Refined = 2 };
const char* stage_name(Stage s);

// Points plus per-point part labels. An unlabeled cloud has part_count == 0 and no labels.
struct AnnotatedCloud {
  std::string source_id;
  PointSet points;
  PartLabelMap labels;
  Stage stage = Stage::Raw;

  std::size_t size() const { return points.size(); }
  bool labeled() const { return labels.part_count > 0; }
};

// Area-weighted triangle choice, uniform barycentric position inside the triangle; each point
// inherits its triangle's part id. Deterministic per seed. Throws ValidationError when the mesh
// has no positive-area triangle.
AnnotatedCloud sample_surface_proportional(const LabeledMesh& mesh, std::size_t n, std::uint64_t seed);

// Reads a Wavefront OBJ; each `g` / `o` group becomes one part. Faces with more than three
// vertices are fan-triangulated.
LabeledMesh read_obj(const std::string& path);

}  // namespace scalepart::data
