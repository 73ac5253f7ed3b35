#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "meshcorr/rasterizer.hpp"
#include "meshcorr/rng.hpp"
#include "test_support.hpp"

using namespace meshcorr;
using namespace meshcorr::testing;

TEST_CASE("empty mesh renders all background") {
  const Intrinsics k = test_camera();
  const MeshFeatureStack stack = rasterize(TriangleMesh{}, k, RigidTransform::identity());
  for (int v = 0; v < stack.height(); ++v)
    for (int u = 0; u < stack.width(); ++u) {
      CHECK(stack.inverse_depth.at(u, v) == 0.0f);
      CHECK(stack.triangle_id.at(u, v) == 0);
      CHECK(stack.valid.at(u, v) == 0);
    }
}

TEST_CASE("fronto-parallel square at 2 m covers the frustum with idepth 0.5") {
  const Intrinsics k = test_camera();
  const TriangleMesh mesh = make_mesh(
      {{-20, -20, 2}, {20, -20, 2}, {20, 20, 2}, {-20, 20, 2}}, {{0, 1, 2}, {0, 2, 3}});
  const MeshFeatureStack stack = rasterize(mesh, k, RigidTransform::identity());
  for (int v = 0; v < stack.height(); ++v)
    for (int u = 0; u < stack.width(); ++u) {
      REQUIRE(stack.valid.at(u, v) == 1);
      CHECK(stack.inverse_depth.at(u, v) == doctest::Approx(0.5).epsilon(1e-6));
      // plane normal is (0,0,-1) for this winding; cam_angle uses |n.r|
      const Vec3 ray = normalized({(u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0});
      const double expect = std::acos(std::abs(ray.z));
      CHECK(stack.cam_angle.at(u, v) == doctest::Approx(expect).epsilon(1e-5));
      CHECK(stack.area.at(u, v) == doctest::Approx(0.5 * 40.0 * 40.0).epsilon(1e-6));
    }
}

TEST_CASE("stack invariants: valid <=> idepth > 0 <=> id != 0; unit normals") {
  SplitMix64 rng(101);
  const Intrinsics k = test_camera();
  const TriangleMesh mesh = random_scene(rng, 40);
  const MeshFeatureStack stack = rasterize(mesh, k, RigidTransform::identity());
  int covered = 0;
  for (int v = 0; v < stack.height(); ++v)
    for (int u = 0; u < stack.width(); ++u) {
      const bool valid = stack.valid.at(u, v) != 0;
      CHECK(valid == (stack.inverse_depth.at(u, v) > 0.0f));
      CHECK(valid == (stack.triangle_id.at(u, v) != 0));
      if (valid) {
        ++covered;
        const double n = std::hypot(std::hypot(stack.normal_x.at(u, v), stack.normal_y.at(u, v)),
                                    stack.normal_z.at(u, v));
        CHECK(std::abs(n - 1.0) < 1e-6);
        CHECK(stack.cam_angle.at(u, v) >= 0.0f);
        CHECK(stack.cam_angle.at(u, v) <= doctest::Approx(M_PI / 2.0));
        CHECK(stack.edge_ratio.at(u, v) > 0.0f);
        CHECK(stack.edge_ratio.at(u, v) <= 1.0f);
      }
    }
  CHECK(covered > 1000);
}

TEST_CASE("rasterizer agrees with the ray-cast oracle on random scenes") {
  SplitMix64 rng(7);
  const Intrinsics k = test_camera();
  for (int scene = 0; scene < 4; ++scene) {
    const TriangleMesh mesh = random_scene(rng, 50);
    const MeshFeatureStack stack = rasterize(mesh, k, RigidTransform::identity());
    std::size_t agree = 0, total = 0;
    for (int v = 0; v < stack.height(); ++v)
      for (int u = 0; u < stack.width(); ++u) {
        ++total;
        const RayHit hit = raycast_pixel(mesh, k, RigidTransform::identity(), u, v);
        const bool covered = stack.valid.at(u, v) != 0;
        if (covered != (hit.id != 0)) continue;
        if (!covered) {
          ++agree;
          continue;
        }
        const bool depth_ok = rel_err(stack.inverse_depth.at(u, v), hit.inverse_depth) < 1e-6;
        const bool id_ok = stack.triangle_id.at(u, v) == hit.id;
        if (depth_ok && id_ok) ++agree;
      }
    CHECK(static_cast<double>(agree) / static_cast<double>(total) >= 0.995);
  }
}

TEST_CASE("determinism: identical inputs give bit-identical stacks") {
  SplitMix64 rng(13);
  const Intrinsics k = test_camera();
  const TriangleMesh mesh = random_scene(rng, 30);
  RigidTransform pose;
  pose.rotation = rotation_x(0.1);
  pose.translation = {0.2, -0.1, 0.5};
  const MeshFeatureStack a = rasterize(mesh, k, pose);
  const MeshFeatureStack b = rasterize(mesh, k, pose);
  CHECK(a.inverse_depth == b.inverse_depth);
  CHECK(a.triangle_id == b.triangle_id);
  CHECK(a.normal_x == b.normal_x);
  CHECK(a.cam_angle == b.cam_angle);
}

TEST_CASE("translating camera and mesh together changes only triangle ids") {
  SplitMix64 rng(19);
  const Intrinsics k = test_camera();
  TriangleMesh mesh = random_scene(rng, 25);
  RigidTransform pose = RigidTransform::identity();
  const MeshFeatureStack a = rasterize(mesh, k, pose);

  const Vec3 offset{100.0, -50.0, 25.0};
  TriangleMesh moved = mesh;
  for (Vec3& v : moved.vertices) v += offset;
  // world -> camera pose that cancels the offset: x_cam = x_world - offset
  RigidTransform moved_pose;
  moved_pose.translation = -offset;
  const MeshFeatureStack b = rasterize(moved, k, moved_pose);

  CHECK(a.inverse_depth == b.inverse_depth);
  CHECK(a.normal_x == b.normal_x);
  CHECK(a.normal_y == b.normal_y);
  CHECK(a.normal_z == b.normal_z);
  CHECK(a.area == b.area);
  CHECK(a.cam_angle == b.cam_angle);
  CHECK(a.valid == b.valid);
  bool ids_differ = false;
  for (int v = 0; v < a.height() && !ids_differ; ++v)
    for (int u = 0; u < a.width(); ++u)
      if (a.valid.at(u, v) && a.triangle_id.at(u, v) != b.triangle_id.at(u, v)) {
        ids_differ = true;
        break;
      }
  CHECK(ids_differ);
}

TEST_CASE("near-plane clipping keeps the visible part of straddling triangles") {
  const Intrinsics k = test_camera();
  // triangle crossing the camera plane: one vertex behind, two in front
  const TriangleMesh mesh =
      make_mesh({{0, 0, -1.0}, {-3, 0.5, 4.0}, {3, 0.5, 4.0}}, {{0, 1, 2}});
  const MeshFeatureStack stack = rasterize(mesh, k, RigidTransform::identity());
  int covered = 0;
  for (int v = 0; v < stack.height(); ++v)
    for (int u = 0; u < stack.width(); ++u)
      if (stack.valid.at(u, v)) {
        ++covered;
        CHECK(stack.inverse_depth.at(u, v) <= doctest::Approx(1.0 / kNearPlane));
      }
  CHECK(covered > 0);

  // fully behind: culled
  const TriangleMesh behind = make_mesh({{0, 0, -1}, {1, 0, -2}, {0, 1, -2}}, {{0, 1, 2}});
  const MeshFeatureStack empty = rasterize(behind, k, RigidTransform::identity());
  for (int v = 0; v < empty.height(); ++v)
    for (int u = 0; u < empty.width(); ++u) CHECK(empty.valid.at(u, v) == 0);
}

TEST_CASE("render_label") {
  const Intrinsics k = test_camera(64, 32);
  const TriangleMesh plane_2m = make_mesh(
      {{-20, -20, 2}, {20, -20, 2}, {20, 20, 2}, {-20, 20, 2}}, {{0, 1, 2}, {0, 2, 3}});
  const TriangleMesh plane_25m = make_mesh(
      {{-20, -20, 2.5}, {20, -20, 2.5}, {20, 20, 2.5}, {-20, 20, 2.5}}, {{0, 1, 2}, {0, 2, 3}});
  const MeshFeatureStack hq = rasterize(plane_2m, k, RigidTransform::identity());
  const MeshFeatureStack lq = rasterize(plane_25m, k, RigidTransform::identity());

  SUBCASE("identical stacks give zero labels") {
    const LabelImage label = render_label(hq, hq);
    for (int v = 0; v < label.g.height(); ++v)
      for (int u = 0; u < label.g.width(); ++u) CHECK(label.g.at(u, v) == 0.0f);
  }
  SUBCASE("difference in inverse depth") {
    const LabelImage label = render_label(hq, lq);
    // d_hq = 0.5, d_lq = 0.4 -> g = 0.1
    CHECK(label.g.at(10, 10) == doctest::Approx(0.1f).epsilon(1e-5));
    CHECK(label.valid.at(10, 10) == 1);
  }
  SUBCASE("hq background makes the pixel invalid; g still finite") {
    const MeshFeatureStack none = rasterize(TriangleMesh{}, k, RigidTransform::identity());
    const LabelImage label = render_label(none, lq);
    CHECK(label.valid.at(5, 5) == 0);
    CHECK(label.g.at(5, 5) == doctest::Approx(-0.4f).epsilon(1e-5));
  }
  SUBCASE("shape mismatch throws") {
    const MeshFeatureStack small = rasterize(plane_2m, test_camera(32, 32),
                                             RigidTransform::identity());
    CHECK_THROWS_AS(render_label(hq, small), std::invalid_argument);
  }
}
