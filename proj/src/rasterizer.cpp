#include "meshcorr/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace meshcorr {

const char* view_label_name(ViewLabel label) {
  switch (label) {
    case ViewLabel::FrontLeft: return "front_left";
    case ViewLabel::FrontRight: return "front_right";
    case ViewLabel::Back: return "back";
    case ViewLabel::Top: return "top";
  }
  return "unknown";
}

ViewLabel view_label_from_name(const std::string& name) {
  if (name == "front_left") return ViewLabel::FrontLeft;
  if (name == "front_right") return ViewLabel::FrontRight;
  if (name == "back") return ViewLabel::Back;
  if (name == "top") return ViewLabel::Top;
  throw std::invalid_argument("unknown view label: " + name);
}

namespace {

struct CamVertex {
  Vec3 p;  // camera frame
};

struct ScreenVertex {
  double u, v, d;  // projected pixel coords and inverse depth
};

struct PreparedTriangle {
  Vec3 normal_cam;  // camera-frame unit normal of the source triangle
  float area;
  float edge_ratio;
  std::uint64_t id;
};

inline ScreenVertex project(const Vec3& p, const Intrinsics& k) {
  const double inv_z = 1.0 / p.z;
  return {k.fx * p.x * inv_z + k.cx, k.fy * p.y * inv_z + k.cy, inv_z};
}

// Clip a camera-frame triangle against z >= near. Output polygon has at most
// four vertices.
int clip_near(const Vec3 in[3], double near, Vec3 out[4]) {
  int n_out = 0;
  for (int i = 0; i < 3; ++i) {
    const Vec3& a = in[i];
    const Vec3& b = in[(i + 1) % 3];
    const bool a_in = a.z >= near;
    const bool b_in = b.z >= near;
    if (a_in) out[n_out++] = a;
    if (a_in != b_in) {
      const double t = (near - a.z) / (b.z - a.z);
      out[n_out++] = a + t * (b - a);
    }
  }
  return n_out;
}

struct EdgeFn {
  double du, dv, au, av;
  bool top_left;

  void init(const ScreenVertex& a, const ScreenVertex& b) {
    du = b.u - a.u;
    dv = b.v - a.v;
    au = a.u;
    av = a.v;
    // v grows downward; positive-winding triangles have the interior on the
    // E >= 0 side. Top edge: horizontal with du > 0. Left edge: dv < 0.
    top_left = (dv == 0.0 && du > 0.0) || dv < 0.0;
  }

  double eval(double pu, double pv) const { return du * (pv - av) - dv * (pu - au); }
  bool covers(double e) const { return e > 0.0 || (e == 0.0 && top_left); }
};

}  // namespace

MeshFeatureStack rasterize(const TriangleMesh& mesh, const Intrinsics& camera,
                           const RigidTransform& pose) {
  camera.validate();
  const int w = camera.width;
  const int h = camera.height;

  MeshFeatureStack stack;
  stack.camera = camera;
  stack.pose = pose;
  stack.inverse_depth = ImageF(w, h, 0.0f);
  stack.normal_x = ImageF(w, h, 0.0f);
  stack.normal_y = ImageF(w, h, 0.0f);
  stack.normal_z = ImageF(w, h, 0.0f);
  stack.area = ImageF(w, h, 0.0f);
  stack.edge_ratio = ImageF(w, h, 0.0f);
  stack.cam_angle = ImageF(w, h, 0.0f);
  stack.triangle_id = ImageU64(w, h, 0);
  stack.valid = ImageU8(w, h, 0);

  if (mesh.empty()) return stack;

  std::vector<Vec3> cam_verts(mesh.vertices.size());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i)
    cam_verts[i] = pose.apply(mesh.vertices[i]);

  // depth/winner buffers; depth compared in double to keep ties exact
  std::vector<double> depth(static_cast<std::size_t>(w) * h, 0.0);
  std::vector<std::int32_t> winner(static_cast<std::size_t>(w) * h, -1);
  std::vector<std::uint64_t> winner_id(static_cast<std::size_t>(w) * h, 0);

  std::vector<PreparedTriangle> prepared;
  prepared.reserve(mesh.triangles.size());

  for (const auto& tri : mesh.triangles) {
    const Vec3 cv[3] = {cam_verts[tri[0]], cam_verts[tri[1]], cam_verts[tri[2]]};
    if (cv[0].z <= kNearPlane && cv[1].z <= kNearPlane && cv[2].z <= kNearPlane) continue;

    Vec3 poly[4];
    int n_poly;
    if (cv[0].z >= kNearPlane && cv[1].z >= kNearPlane && cv[2].z >= kNearPlane) {
      poly[0] = cv[0];
      poly[1] = cv[1];
      poly[2] = cv[2];
      n_poly = 3;
    } else {
      n_poly = clip_near(cv, kNearPlane, poly);
      if (n_poly < 3) continue;
    }

    const Vec3& w0 = mesh.vertices[tri[0]];
    const Vec3& w1 = mesh.vertices[tri[1]];
    const Vec3& w2 = mesh.vertices[tri[2]];
    PreparedTriangle prep;
    prep.normal_cam = pose.rotation * triangle_normal(w0, w1, w2);
    prep.area = static_cast<float>(triangle_area(w0, w1, w2));
    prep.edge_ratio = static_cast<float>(edge_length_ratio(w0, w1, w2));
    prep.id = triangle_id(w0, w1, w2);
    const std::int32_t prep_index = static_cast<std::int32_t>(prepared.size());
    bool used = false;

    ScreenVertex sv[4];
    for (int i = 0; i < n_poly; ++i) sv[i] = project(poly[i], camera);

    // fan-triangulate the clipped polygon
    for (int f = 1; f + 1 < n_poly; ++f) {
      ScreenVertex s0 = sv[0], s1 = sv[f], s2 = sv[f + 1];
      double area2 = (s1.u - s0.u) * (s2.v - s0.v) - (s1.v - s0.v) * (s2.u - s0.u);
      if (area2 == 0.0) continue;
      if (area2 < 0.0) {
        std::swap(s1, s2);
        area2 = -area2;
      }

      EdgeFn e0, e1, e2;
      e0.init(s1, s2);  // opposite s0
      e1.init(s2, s0);  // opposite s1
      e2.init(s0, s1);  // opposite s2

      const int u_min = std::max(0, static_cast<int>(std::ceil(std::min({s0.u, s1.u, s2.u}))));
      const int u_max = std::min(w - 1, static_cast<int>(std::floor(std::max({s0.u, s1.u, s2.u}))));
      const int v_min = std::max(0, static_cast<int>(std::ceil(std::min({s0.v, s1.v, s2.v}))));
      const int v_max = std::min(h - 1, static_cast<int>(std::floor(std::max({s0.v, s1.v, s2.v}))));
      if (u_min > u_max || v_min > v_max) continue;

      const double inv_area2 = 1.0 / area2;
      for (int pv = v_min; pv <= v_max; ++pv) {
        for (int pu = u_min; pu <= u_max; ++pu) {
          const double pud = pu, pvd = pv;
          const double f0 = e0.eval(pud, pvd);
          if (!e0.covers(f0)) continue;
          const double f1 = e1.eval(pud, pvd);
          if (!e1.covers(f1)) continue;
          const double f2 = e2.eval(pud, pvd);
          if (!e2.covers(f2)) continue;

          const double l0 = f0 * inv_area2;
          const double l1 = f1 * inv_area2;
          const double l2 = f2 * inv_area2;
          const double d = l0 * s0.d + l1 * s1.d + l2 * s2.d;
          if (d <= 0.0) continue;

          const std::size_t px = static_cast<std::size_t>(pv) * w + pu;
          if (d > depth[px] || (d == depth[px] && prep.id < winner_id[px])) {
            depth[px] = d;
            winner[px] = prep_index;
            winner_id[px] = prep.id;
            used = true;
          }
        }
      }
    }
    if (used) prepared.push_back(prep);
    // prep_index slots that never won any pixel are dropped; if a later
    // triangle wins the same slot index the vector stays consistent because
    // we only push when used.
  }

  for (int pv = 0; pv < h; ++pv) {
    for (int pu = 0; pu < w; ++pu) {
      const std::size_t px = static_cast<std::size_t>(pv) * w + pu;
      if (winner[px] < 0) continue;
      const PreparedTriangle& prep = prepared[static_cast<std::size_t>(winner[px])];
      stack.inverse_depth.at(pu, pv) = static_cast<float>(depth[px]);
      stack.normal_x.at(pu, pv) = static_cast<float>(prep.normal_cam.x);
      stack.normal_y.at(pu, pv) = static_cast<float>(prep.normal_cam.y);
      stack.normal_z.at(pu, pv) = static_cast<float>(prep.normal_cam.z);
      stack.area.at(pu, pv) = prep.area;
      stack.edge_ratio.at(pu, pv) = prep.edge_ratio;
      const Vec3 ray = normalized({(pu - camera.cx) / camera.fx, (pv - camera.cy) / camera.fy, 1.0});
      const double c = std::clamp(std::abs(dot(prep.normal_cam, ray)), 0.0, 1.0);
      stack.cam_angle.at(pu, pv) = static_cast<float>(std::acos(c));
      stack.triangle_id.at(pu, pv) = prep.id;
      stack.valid.at(pu, pv) = 1;
    }
  }
  return stack;
}

LabelImage render_label(const MeshFeatureStack& hq, const MeshFeatureStack& lq) {
  require_same_shape(hq.inverse_depth, lq.inverse_depth, "render_label");
  LabelImage label;
  label.g = ImageF(hq.width(), hq.height(), 0.0f);
  label.valid = hq.valid;
  for (int v = 0; v < hq.height(); ++v)
    for (int u = 0; u < hq.width(); ++u)
      label.g.at(u, v) = hq.inverse_depth.at(u, v) - lq.inverse_depth.at(u, v);
  return label;
}

}  // namespace meshcorr
