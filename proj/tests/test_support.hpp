#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "meshcorr/camera.hpp"
#include "meshcorr/mesh.hpp"
#include "meshcorr/rasterizer.hpp"
#include "meshcorr/rng.hpp"

namespace meshcorr::testing {

struct RayHit {
  double t = std::numeric_limits<double>::infinity();
  std::uint64_t id = 0;
  double inverse_depth = 0.0;
};

// Moller-Trumbore, double-sided.
inline std::optional<double> intersect_triangle(const Vec3& origin, const Vec3& dir,
                                                const Vec3& v0, const Vec3& v1, const Vec3& v2) {
  constexpr double kEps = 1e-12;
  const Vec3 e1 = v1 - v0;
  const Vec3 e2 = v2 - v0;
  const Vec3 p = cross(dir, e2);
  const double det = dot(e1, p);
  if (std::abs(det) < kEps) return std::nullopt;
  const double inv_det = 1.0 / det;
  const Vec3 s = origin - v0;
  const double u = dot(s, p) * inv_det;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  const Vec3 q = cross(s, e1);
  const double v = dot(dir, q) * inv_det;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  const double t = dot(e2, q) * inv_det;
  if (t <= 0.0) return std::nullopt;
  return t;
}

// Independent per-pixel renderer: casts the exact pixel-center ray and keeps
// the nearest hit with camera-frame z >= near (ties to the smaller id, as
// the rasterizer specifies).
inline RayHit raycast_pixel(const TriangleMesh& mesh, const Intrinsics& k,
                            const RigidTransform& pose, int u, int v, double near = kNearPlane) {
  const RigidTransform cam_to_world = invert(pose);
  const Vec3 origin = cam_to_world.translation;
  const Vec3 dir_cam = {(u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0};
  const Vec3 dir = cam_to_world.rotation * dir_cam;

  RayHit best;
  for (const auto& tri : mesh.triangles) {
    const Vec3& a = mesh.vertices[tri[0]];
    const Vec3& b = mesh.vertices[tri[1]];
    const Vec3& c = mesh.vertices[tri[2]];
    const auto t = intersect_triangle(origin, dir, a, b, c);
    if (!t) continue;
    // camera-frame depth along the ray parameterization: z = t * dir_cam.z = t
    const double z = *t;
    if (z < near) continue;
    const std::uint64_t id = triangle_id(a, b, c);
    if (z < best.t || (z == best.t && id < best.id)) {
      best.t = z;
      best.id = id;
      best.inverse_depth = 1.0 / z;
    }
  }
  if (!std::isfinite(best.t)) return {};
  return best;
}

// Random triangle soup in front of a camera at the origin looking along +z.
inline TriangleMesh random_scene(SplitMix64& rng, int n_triangles, double min_z = 3.0,
                                 double max_z = 15.0, double lateral = 8.0, double size = 3.0) {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;
  for (int i = 0; i < n_triangles; ++i) {
    const Vec3 center{rng.uniform(-lateral, lateral), rng.uniform(-lateral / 3.0, lateral / 3.0),
                      rng.uniform(min_z, max_z)};
    const std::uint32_t base = static_cast<std::uint32_t>(vertices.size());
    for (int j = 0; j < 3; ++j)
      vertices.push_back(center + Vec3{rng.uniform(-size, size), rng.uniform(-size, size),
                                       rng.uniform(-size / 2.0, size / 2.0)});
    triangles.push_back({base, base + 1, base + 2});
  }
  return make_mesh(std::move(vertices), std::move(triangles));
}

inline Intrinsics test_camera(int width = 288, int height = 96) {
  Intrinsics k;
  k.fx = 160.0;
  k.fy = 160.0;
  k.cx = width / 2.0;
  k.cy = height / 2.0;
  k.width = width;
  k.height = height;
  return k;
}

inline double rel_err(double got, double want) {
  const double denom = std::max({std::abs(got), std::abs(want), 1e-12});
  return std::abs(got - want) / denom;
}

}  // namespace meshcorr::testing
