#include "scalepart/mesh.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "scalepart/error.hpp"
#include "scalepart/nn.hpp"

namespace scalepart::data {

double Triangle::area() const {
  const double ux = double(b.x) - a.x, uy = double(b.y) - a.y, uz = double(b.z) - a.z;
  const double vx = double(c.x) - a.x, vy = double(c.y) - a.y, vz = double(c.z) - a.z;
  const double cx = uy * vz - uz * vy, cy = uz * vx - ux * vz, cz = ux * vy - uy * vx;
  return 0.5 * std::sqrt(cx * cx + cy * cy + cz * cz);
}

double LabeledMesh::surface_area() const {
  double total = 0.0;
  for (const auto& t : triangles) total += t.area();
  return total;
}

std::vector<double> LabeledMesh::part_areas() const {
  std::vector<double> areas(part_count, 0.0);
  for (const auto& t : triangles) {
    if (t.part < part_count) areas[t.part] += t.area();
  }
  return areas;
}

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::Raw: return "raw";
    case Stage::Filtered: return "filtered";
    case Stage::Refined: return "refined";
  }
  return "unknown";
}

AnnotatedCloud sample_surface_proportional(const LabeledMesh& mesh, std::size_t n, std::uint64_t seed) {
  if (mesh.triangles.empty()) throw ValidationError("sample_surface_proportional: empty mesh");
  std::vector<double> cumulative;
  std::vector<std::size_t> index;
  double total = 0.0;
  for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
    const double a = mesh.triangles[i].area();
    if (a > 0.0) {
      total += a;
      cumulative.push_back(total);
      index.push_back(i);
    }
  }
  if (!(total > 0.0)) throw ValidationError("sample_surface_proportional: mesh has zero surface area");

  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  AnnotatedCloud cloud;
  cloud.points.coords.resize(n);
  cloud.labels.labels.resize(n);
  cloud.labels.part_count = mesh.part_count;
  for (std::size_t k = 0; k < n; ++k) {
    const double pick = unit(rng) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
    if (it == cumulative.end()) --it;
    const Triangle& t = mesh.triangles[index[static_cast<std::size_t>(it - cumulative.begin())]];
    const double r1 = std::sqrt(unit(rng));
    const double r2 = unit(rng);
    const double wa = 1.0 - r1, wb = r1 * (1.0 - r2), wc = r1 * r2;
    cloud.points.coords[k] = {static_cast<float>(wa * t.a.x + wb * t.b.x + wc * t.c.x),
                              static_cast<float>(wa * t.a.y + wb * t.b.y + wc * t.c.y),
                              static_cast<float>(wa * t.a.z + wb * t.b.z + wc * t.c.z)};
    cloud.labels.labels[k] = t.part;
  }
  cloud.stage = Stage::Raw;
  return cloud;
}

LabeledMesh read_obj(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::vector<Vec3> vertices;
  std::map<std::string, std::uint32_t> groups;
  std::uint32_t current = 0;
  bool any_group = false;
  LabeledMesh mesh;
  std::string line;
  while (std::getline(f, line)) {
    std::istringstream is(line);
    std::string tag;
    is >> tag;
    if (tag == "v") {
      Vec3 v;
      is >> v.x >> v.y >> v.z;
      vertices.push_back(v);
    } else if (tag == "g" || tag == "o") {
      std::string name;
      std::getline(is, name);
      auto [it, inserted] = groups.try_emplace(name, static_cast<std::uint32_t>(groups.size()));
      current = it->second;
      any_group = true;
    } else if (tag == "f") {
      std::vector<std::size_t> idx;
      std::string tok;
      while (is >> tok) {
        const long v = std::stol(tok.substr(0, tok.find('/')));
        idx.push_back(v > 0 ? static_cast<std::size_t>(v - 1) : vertices.size() + static_cast<std::size_t>(v));
      }
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) {
        if (idx[0] >= vertices.size() || idx[k] >= vertices.size() || idx[k + 1] >= vertices.size()) {
          throw FormatError(path + ": face references a missing vertex");
        }
        mesh.triangles.push_back({vertices[idx[0]], vertices[idx[k]], vertices[idx[k + 1]], current});
      }
    }
  }
  mesh.part_count = any_group ? static_cast<std::uint32_t>(groups.size()) : 1;
  // Drop degenerate triangles and re-compact part ids over the surviving groups.
  std::erase_if(mesh.triangles, [](const Triangle& t) { return !(t.area() > 0.0); });
  std::map<std::uint32_t, std::uint32_t> remap;
  for (const auto& t : mesh.triangles) remap.try_emplace(t.part, 0);
  std::uint32_t next = 0;
  for (auto& [k, v] : remap) v = next++;
  for (auto& t : mesh.triangles) t.part = remap[t.part];
  mesh.part_count = next;
  return mesh;
}

}  // namespace scalepart::data
