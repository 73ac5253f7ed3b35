#include "meshcorr/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace meshcorr {

Vec3 triangle_normal(const Vec3& v0, const Vec3& v1, const Vec3& v2) {
  return normalized(cross(v1 - v0, v2 - v0));
}

double triangle_area(const Vec3& v0, const Vec3& v1, const Vec3& v2) {
  return 0.5 * norm(cross(v1 - v0, v2 - v0));
}

double edge_length_ratio(const Vec3& v0, const Vec3& v1, const Vec3& v2) {
  const double e0 = norm(v1 - v0);
  const double e1 = norm(v2 - v1);
  const double e2 = norm(v0 - v2);
  const double lo = std::min({e0, e1, e2});
  const double hi = std::max({e0, e1, e2});
  return lo / hi;
}

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

inline std::uint64_t fnv1a_append(std::uint64_t h, const void* bytes, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

struct QuantizedVertex {
  std::int64_t x, y, z;
  bool operator<(const QuantizedVertex& o) const {
    if (x != o.x) return x < o.x;
    if (y != o.y) return y < o.y;
    return z < o.z;
  }
};

inline QuantizedVertex quantize(const Vec3& v) {
  return {static_cast<std::int64_t>(std::llround(v.x / kTriangleIdQuantum)),
          static_cast<std::int64_t>(std::llround(v.y / kTriangleIdQuantum)),
          static_cast<std::int64_t>(std::llround(v.z / kTriangleIdQuantum))};
}

}  // namespace

std::uint64_t triangle_id(const Vec3& v0, const Vec3& v1, const Vec3& v2) {
  std::array<QuantizedVertex, 3> q = {quantize(v0), quantize(v1), quantize(v2)};
  std::sort(q.begin(), q.end());
  std::uint64_t h = kFnvOffset;
  for (const QuantizedVertex& v : q) {
    h = fnv1a_append(h, &v.x, sizeof(v.x));
    h = fnv1a_append(h, &v.y, sizeof(v.y));
    h = fnv1a_append(h, &v.z, sizeof(v.z));
  }
  return h == 0 ? 1 : h;
}

TriangleAttributes triangle_attributes(const Vec3& v0, const Vec3& v1, const Vec3& v2) {
  TriangleAttributes a;
  a.normal = triangle_normal(v0, v1, v2);
  a.area = triangle_area(v0, v1, v2);
  a.edge_ratio = edge_length_ratio(v0, v1, v2);
  a.id = triangle_id(v0, v1, v2);
  return a;
}

TriangleMesh make_mesh(std::vector<Vec3> vertices,
                       std::vector<std::array<std::uint32_t, 3>> triangles,
                       MeshBuildReport* report) {
  for (const Vec3& v : vertices)
    if (!std::isfinite(v.x) || !std::isfinite(v.y) || !std::isfinite(v.z))
      throw std::invalid_argument("make_mesh: non-finite vertex coordinate");

  TriangleMesh mesh;
  mesh.vertices = std::move(vertices);
  mesh.triangles.reserve(triangles.size());
  std::size_t dropped = 0;
  for (const auto& t : triangles) {
    for (std::uint32_t idx : t)
      if (idx >= mesh.vertices.size())
        throw std::invalid_argument("make_mesh: triangle index out of range");
    const double area = triangle_area(mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
    if (area < kDegenerateAreaThreshold) {
      ++dropped;
      continue;
    }
    mesh.triangles.push_back(t);
  }
  if (report) report->dropped_degenerate = dropped;
  return mesh;
}

TriangleMesh load_obj(const std::string& path, MeshBuildReport* report) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_obj: cannot open " + path);

  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      Vec3 v;
      if (!(ss >> v.x >> v.y >> v.z))
        throw std::runtime_error("load_obj: bad vertex at line " + std::to_string(line_no));
      vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<std::uint32_t> idx;
      std::string tok;
      while (ss >> tok) {
        // accept "i", "i/j", "i/j/k"
        const std::size_t slash = tok.find('/');
        const std::string head = slash == std::string::npos ? tok : tok.substr(0, slash);
        long v = 0;
        try {
          v = std::stol(head);
        } catch (const std::exception&) {
          throw std::runtime_error("load_obj: bad face index at line " + std::to_string(line_no));
        }
        if (v < 1)
          throw std::runtime_error("load_obj: face index must be positive (1-based) at line " +
                                   std::to_string(line_no));
        idx.push_back(static_cast<std::uint32_t>(v - 1));
      }
      if (idx.size() != 3)
        throw std::runtime_error("load_obj: face with " + std::to_string(idx.size()) +
                                 " vertices at line " + std::to_string(line_no) +
                                 " (triangulated faces required)");
      triangles.push_back({idx[0], idx[1], idx[2]});
    }
    // other record types are skipped
  }
  return make_mesh(std::move(vertices), std::move(triangles), report);
}

void save_obj(const std::string& path, const TriangleMesh& mesh) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_obj: cannot open " + path);
  char buf[128];
  for (const Vec3& v : mesh.vertices) {
    std::snprintf(buf, sizeof(buf), "v %.17g %.17g %.17g\n", v.x, v.y, v.z);
    out << buf;
  }
  for (const auto& t : mesh.triangles)
    out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  if (!out) throw std::runtime_error("save_obj: write failed for " + path);
}

}  // namespace meshcorr
