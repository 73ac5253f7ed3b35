#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "meshcorr/geometry.hpp"

namespace meshcorr {

inline constexpr double kDegenerateAreaThreshold = 1e-12;  // m^2
inline constexpr double kTriangleIdQuantum = 1e-4;         // m

// Indexed triangle soup, world-frame vertices in meters.
struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;

  bool empty() const { return triangles.empty(); }
  Vec3 vertex(std::uint32_t i) const { return vertices[i]; }
};

struct TriangleAttributes {
  Vec3 normal;          // unit
  double area = 0.0;    // m^2
  double edge_ratio = 0.0;  // min edge / max edge, in (0, 1]
  std::uint64_t id = 0;
};

Vec3 triangle_normal(const Vec3& v0, const Vec3& v1, const Vec3& v2);
double triangle_area(const Vec3& v0, const Vec3& v1, const Vec3& v2);
double edge_length_ratio(const Vec3& v0, const Vec3& v1, const Vec3& v2);

// Deterministic world-frame id: FNV-1a over the bit patterns of the three
// vertices quantized to a 1e-4 m grid, vertices sorted lexicographically.
// 0 is reserved for background; a hash of 0 is remapped to 1.
std::uint64_t triangle_id(const Vec3& v0, const Vec3& v1, const Vec3& v2);

TriangleAttributes triangle_attributes(const Vec3& v0, const Vec3& v1, const Vec3& v2);

struct MeshBuildReport {
  std::size_t dropped_degenerate = 0;
};

// Validates indices, drops triangles with area < kDegenerateAreaThreshold.
// Throws std::invalid_argument on out-of-range indices or non-finite
// coordinates.
TriangleMesh make_mesh(std::vector<Vec3> vertices,
                       std::vector<std::array<std::uint32_t, 3>> triangles,
                       MeshBuildReport* report = nullptr);

// ASCII OBJ subset: v and f records, 1-based indices, triangles only.
// Faces with more than three vertices are rejected with an error naming the
// offending line.
TriangleMesh load_obj(const std::string& path, MeshBuildReport* report = nullptr);
void save_obj(const std::string& path, const TriangleMesh& mesh);

}  // namespace meshcorr
