#include "scalepart/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "scalepart/error.hpp"
#include "scalepart/nn.hpp"

namespace scalepart::data {

namespace {

struct V {
  double x = 0, y = 0, z = 0;
};
V operator+(V a, V b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
V operator-(V a, V b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
V operator*(double s, V a) { return {s * a.x, s * a.y, s * a.z}; }
double len(V a) { return std::sqrt(a.x * a.x + a.y * a.y + a.z * a.z); }

using Mat3 = std::array<double, 9>;  // row-major rotation

V mul(const Mat3& r, V v) {
  return {r[0] * v.x + r[1] * v.y + r[2] * v.z, r[3] * v.x + r[4] * v.y + r[5] * v.z,
          r[6] * v.x + r[7] * v.y + r[8] * v.z};
}
V mul_t(const Mat3& r, V v) {
  return {r[0] * v.x + r[3] * v.y + r[6] * v.z, r[1] * v.x + r[4] * v.y + r[7] * v.z,
          r[2] * v.x + r[5] * v.y + r[8] * v.z};
}

Mat3 random_rotation(Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  double q[4];
  double n = 0;
  do {
    for (auto& c : q) c = g(rng);
    n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
  } while (n < 1e-9);
  const double w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
  return {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
          2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
          2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
}

V random_direction(Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  V d;
  do {
    d = {g(rng), g(rng), g(rng)};
  } while (len(d) < 1e-9);
  return (1.0 / len(d)) * d;
}

enum class Kind { Box, Cylinder, Sphere, Torus };

// A primitive in its local frame (axis-aligned, centred at the origin), scaled uniformly and
// posed by (rotation, center).
struct Primitive {
  Kind kind = Kind::Sphere;
  std::array<double, 3> dims{};  // box: half extents; cylinder: r, half height; sphere: r; torus: R, r
  double scale = 1.0;
  Mat3 rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};
  V center;

  double local_sdf(V p) const {
    switch (kind) {
      case Kind::Box: {
        const V q{std::abs(p.x) - dims[0], std::abs(p.y) - dims[1], std::abs(p.z) - dims[2]};
        const V qp{std::max(q.x, 0.0), std::max(q.y, 0.0), std::max(q.z, 0.0)};
        return len(qp) + std::min(std::max({q.x, q.y, q.z}), 0.0);
      }
      case Kind::Cylinder: {
        const double dx = std::hypot(p.x, p.y) - dims[0];
        const double dz = std::abs(p.z) - dims[1];
        return std::min(std::max(dx, dz), 0.0) + std::hypot(std::max(dx, 0.0), std::max(dz, 0.0));
      }
      case Kind::Sphere:
        return len(p) - dims[0];
      case Kind::Torus:
        return std::hypot(std::hypot(p.x, p.y) - dims[0], p.z) - dims[1];
    }
    return 0.0;
  }

  double sdf(V world) const { return scale * local_sdf(mul_t(rotation, (1.0 / scale) * (world - center))); }

  double bounding_radius() const {
    switch (kind) {
      case Kind::Box: return scale * std::sqrt(dims[0] * dims[0] + dims[1] * dims[1] + dims[2] * dims[2]);
      case Kind::Cylinder: return scale * std::hypot(dims[0], dims[1]);
      case Kind::Sphere: return scale * dims[0];
      case Kind::Torus: return scale * (dims[0] + dims[1]);
    }
    return 0.0;
  }

  V to_world(V local) const { return center + mul(rotation, scale * local); }
};

void add_quad(std::vector<std::array<V, 3>>& tris, V a, V b, V c, V d) {
  tris.push_back({a, b, c});
  tris.push_back({a, c, d});
}

// Local-frame triangulation at unit scale.
std::vector<std::array<V, 3>> local_triangles(const Primitive& p) {
  std::vector<std::array<V, 3>> tris;
  constexpr double kPi = std::numbers::pi;
  switch (p.kind) {
    case Kind::Box: {
      const double a = p.dims[0], b = p.dims[1], c = p.dims[2];
      const V v[8] = {{-a, -b, -c}, {a, -b, -c}, {a, b, -c}, {-a, b, -c},
                      {-a, -b, c},  {a, -b, c},  {a, b, c},  {-a, b, c}};
      add_quad(tris, v[0], v[3], v[2], v[1]);
      add_quad(tris, v[4], v[5], v[6], v[7]);
      add_quad(tris, v[0], v[1], v[5], v[4]);
      add_quad(tris, v[2], v[3], v[7], v[6]);
      add_quad(tris, v[1], v[2], v[6], v[5]);
      add_quad(tris, v[3], v[0], v[4], v[7]);
      break;
    }
    case Kind::Cylinder: {
      const int seg = 24;
      const double r = p.dims[0], h = p.dims[1];
      for (int i = 0; i < seg; ++i) {
        const double t0 = 2 * kPi * i / seg, t1 = 2 * kPi * (i + 1) / seg;
        const V b0{r * std::cos(t0), r * std::sin(t0), -h}, b1{r * std::cos(t1), r * std::sin(t1), -h};
        const V u0{b0.x, b0.y, h}, u1{b1.x, b1.y, h};
        add_quad(tris, b0, b1, u1, u0);
        tris.push_back({V{0, 0, -h}, b1, b0});
        tris.push_back({V{0, 0, h}, u0, u1});
      }
      break;
    }
    case Kind::Sphere: {
      const int stacks = 12, slices = 20;
      const double r = p.dims[0];
      auto at = [&](int i, int j) {
        const double th = kPi * i / stacks, ph = 2 * kPi * j / slices;
        return V{r * std::sin(th) * std::cos(ph), r * std::sin(th) * std::sin(ph), r * std::cos(th)};
      };
      for (int i = 0; i < stacks; ++i) {
        for (int j = 0; j < slices; ++j) {
          const V a = at(i, j), b = at(i + 1, j), c = at(i + 1, j + 1), d = at(i, j + 1);
          if (i == 0) {
            tris.push_back({a, b, c});
          } else if (i == stacks - 1) {
            tris.push_back({a, b, d});
          } else {
            add_quad(tris, a, b, c, d);
          }
        }
      }
      break;
    }
    case Kind::Torus: {
      const int major = 24, minor = 12;
      const double big = p.dims[0], small = p.dims[1];
      auto at = [&](int i, int j) {
        const double u = 2 * kPi * i / major, v = 2 * kPi * j / minor;
        const double w = big + small * std::cos(v);
        return V{w * std::cos(u), w * std::sin(u), small * std::sin(v)};
      };
      for (int i = 0; i < major; ++i) {
        for (int j = 0; j < minor; ++j) add_quad(tris, at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1));
      }
      break;
    }
  }
  return tris;
}

double tri_area(const std::array<V, 3>& t) {
  const V u = t[1] - t[0], v = t[2] - t[0];
  const V c{u.y * v.z - u.z * v.y, u.z * v.x - u.x * v.z, u.x * v.y - u.y * v.x};
  return 0.5 * len(c);
}

Primitive random_primitive(Rng& rng, double target_area) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Primitive p;
  const int kind = static_cast<int>(u(rng) * 4.0);
  switch (std::min(kind, 3)) {
    case 0:
      p.kind = Kind::Box;
      p.dims = {0.35 + 0.65 * u(rng), 0.35 + 0.65 * u(rng), 0.35 + 0.65 * u(rng)};
      break;
    case 1:
      p.kind = Kind::Cylinder;
      p.dims = {0.25 + 0.35 * u(rng), 0.4 + 0.8 * u(rng), 0.0};
      break;
    case 2:
      p.kind = Kind::Sphere;
      p.dims = {1.0, 0.0, 0.0};
      break;
    default:
      p.kind = Kind::Torus;
      p.dims = {1.0, 0.25 + 0.2 * u(rng), 0.0};
      break;
  }
  double area = 0.0;
  for (const auto& t : local_triangles(p)) area += tri_area(t);
  p.scale = std::sqrt(target_area / area);
  p.rotation = random_rotation(rng);
  return p;
}

// Surface probe points of a posed primitive (triangle vertices and centroids).
std::vector<V> probe_points(const Primitive& p) {
  std::vector<V> pts;
  for (const auto& t : local_triangles(p)) {
    pts.push_back(p.to_world(t[0]));
    pts.push_back(p.to_world((1.0 / 3.0) * (t[0] + t[1] + t[2])));
  }
  return pts;
}

double penetration(const Primitive& a, const std::vector<V>& a_probes, const Primitive& b,
                   const std::vector<V>& b_probes) {
  if (len(a.center - b.center) > a.bounding_radius() + b.bounding_radius()) return 0.0;
  double worst = 0.0;
  for (const auto& q : a_probes) worst = std::min(worst, b.sdf(q));
  for (const auto& q : b_probes) worst = std::min(worst, a.sdf(q));
  return -worst;
}

}  // namespace

LabeledMesh generate_synthetic_shape(std::uint64_t seed, const SyntheticConfig& cfg) {
  if (cfg.min_parts < 2 || cfg.max_parts > 50 || cfg.min_parts > cfg.max_parts) {
    throw ValidationError("generate_synthetic_shape: part range must lie within [2, 50]");
  }
  Rng rng(seed ^ 0x5eed5ca1eULL);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::uint32_t parts =
      cfg.min_parts + static_cast<std::uint32_t>(u(rng) * double(cfg.max_parts - cfg.min_parts + 1));
  const std::uint32_t target = std::min(parts, cfg.max_parts);

  std::vector<Primitive> placed;
  std::vector<std::vector<V>> probes;
  const double unit_area = 4.0 * std::numbers::pi;  // a unit sphere's area
  std::uint32_t rounds = 0;
  while (placed.size() < target && rounds++ < 4 * target) {
    const double weight = 1.0 + (cfg.max_area_ratio - 1.0) * u(rng);
    bool done = false;
    for (std::uint32_t attempt = 0; attempt < cfg.max_attempts && !done; ++attempt) {
      Primitive cand = random_primitive(rng, weight * unit_area);
      if (placed.empty()) {
        placed.push_back(cand);
        probes.push_back(probe_points(cand));
        done = true;
        break;
      }
      const Primitive& host = placed[static_cast<std::size_t>(u(rng) * double(placed.size())) % placed.size()];
      const V dir = random_direction(rng);
      const double far = host.bounding_radius() + cand.bounding_radius() + 0.05;
      auto overlap_at = [&](double t) {
        cand.center = host.center + t * dir;
        const auto cp = probe_points(cand);
        double worst = 0.0;
        for (std::size_t k = 0; k < placed.size(); ++k) worst = std::max(worst, penetration(cand, cp, placed[k], probes[k]));
        return worst;
      };
      if (overlap_at(far) > cfg.overlap_tolerance) continue;  // blocked by a third primitive
      // Slide toward the host until contact.
      double lo = 0.0, hi = far;
      for (int it = 0; it < 24; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (overlap_at(mid) > 0.0) {
          lo = mid;
        } else {
          hi = mid;
        }
      }
      if (overlap_at(hi) > cfg.overlap_tolerance) continue;
      placed.push_back(cand);
      probes.push_back(probe_points(cand));
      done = true;
    }
    if (!done && placed.size() >= cfg.min_parts) break;  // assembly is crowded; keep what fits
  }

  LabeledMesh mesh;
  mesh.part_count = static_cast<std::uint32_t>(placed.size());
  for (std::uint32_t part = 0; part < placed.size(); ++part) {
    for (const auto& t : local_triangles(placed[part])) {
      const V a = placed[part].to_world(t[0]), b = placed[part].to_world(t[1]), c = placed[part].to_world(t[2]);
      Triangle tri{{float(a.x), float(a.y), float(a.z)}, {float(b.x), float(b.y), float(b.z)},
                   {float(c.x), float(c.y), float(c.z)}, part};
      if (tri.area() > 0.0) mesh.triangles.push_back(tri);
    }
  }
  return mesh;
}

AnnotatedCloud synthetic_cloud(std::uint64_t seed, std::size_t n, const SyntheticConfig& cfg) {
  const LabeledMesh mesh = generate_synthetic_shape(seed, cfg);
  AnnotatedCloud cloud = sample_surface_proportional(mesh, n, seed ^ 0x5a3b1e);
  cloud.points = normalize_unit_sphere(cloud.points.coords);
  cloud.labels = PartLabelMap::from_labels(std::move(cloud.labels.labels), true);
  cloud.source_id = "synthetic-" + std::to_string(seed);
  return cloud;
}

}  // namespace scalepart::data
