#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "meshcorr/datagen.hpp"
#include "meshcorr/io.hpp"
#include "meshcorr/rng.hpp"
#include "test_support.hpp"

using namespace meshcorr;

namespace fs = std::filesystem;

TEST_CASE("generate_scene with zero counts is the ground plane only") {
  SceneSpec spec;
  spec.box_count = 0;
  spec.wall_count = 0;
  spec.extent = 4.0;
  spec.resolution = 0.5;
  const TriangleMesh mesh = generate_scene(spec);
  // 8x8 cells, two triangles each
  CHECK(mesh.triangles.size() == 128);
  for (const Vec3& v : mesh.vertices) CHECK(v.z == 0.0);
}

TEST_CASE("generate_scene is deterministic in the seed") {
  SceneSpec spec;
  spec.seed = 77;
  const TriangleMesh a = generate_scene(spec);
  const TriangleMesh b = generate_scene(spec);
  REQUIRE(a.vertices.size() == b.vertices.size());
  REQUIRE(a.triangles.size() == b.triangles.size());
  for (std::size_t i = 0; i < a.vertices.size(); ++i) {
    CHECK(a.vertices[i].x == b.vertices[i].x);
    CHECK(a.vertices[i].y == b.vertices[i].y);
    CHECK(a.vertices[i].z == b.vertices[i].z);
  }
  spec.seed = 78;
  const TriangleMesh c = generate_scene(spec);
  CHECK(c.vertices.size() != a.vertices.size());
}

TEST_CASE("box of size 2x2x2 at resolution 0.2 has exactly 6 x 200 triangles") {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;
  append_box(vertices, triangles, {0, 0, 0}, 2.0, 2.0, 2.0, 0.3, 0.2);
  CHECK(triangles.size() == 1200);
}

TEST_CASE("corrupt_mesh with an all-zero spec is the identity") {
  SceneSpec sspec;
  sspec.seed = 5;
  const TriangleMesh hq = generate_scene(sspec);
  CorruptionSpec cspec;
  cspec.noise_sigma = 0.0;
  cspec.hole_rate = 0.0;
  cspec.bulge_rate = 0.0;
  cspec.spurious_rate = 0.0;
  const TriangleMesh lq = corrupt_mesh(hq, cspec, 99);
  REQUIRE(lq.vertices.size() == hq.vertices.size());
  REQUIRE(lq.triangles.size() == hq.triangles.size());
  for (std::size_t i = 0; i < hq.vertices.size(); ++i) {
    CHECK(lq.vertices[i].x == hq.vertices[i].x);
    CHECK(lq.vertices[i].z == hq.vertices[i].z);
  }
}

TEST_CASE("vertex noise displacement magnitudes follow the half-normal mean") {
  // flat grid: vertex normals are +z, so displacement = |gaussian| in z
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;
  append_grid_face(vertices, triangles, {0, 0, 0}, {20, 0, 0}, {0, 20, 0}, 0.2);
  const TriangleMesh hq = make_mesh(std::move(vertices), std::move(triangles));
  REQUIRE(hq.vertices.size() >= 10000);

  CorruptionSpec cspec;
  cspec.noise_sigma = 0.1;
  cspec.hole_rate = 0.0;
  cspec.bulge_rate = 0.0;
  cspec.spurious_rate = 0.0;
  const TriangleMesh lq = corrupt_mesh(hq, cspec, 1234);
  double mean = 0.0;
  for (std::size_t i = 0; i < hq.vertices.size(); ++i)
    mean += std::abs(lq.vertices[i].z - hq.vertices[i].z);
  mean /= double(hq.vertices.size());
  const double expect = 0.1 * std::sqrt(2.0 / M_PI);
  CHECK(mean == doctest::Approx(expect).epsilon(0.10));
}

TEST_CASE("hole rate removes the expected fraction of triangles") {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;
  append_grid_face(vertices, triangles, {0, 0, 0}, {15, 0, 0}, {0, 15, 0}, 0.2);
  const TriangleMesh hq = make_mesh(std::move(vertices), std::move(triangles));
  REQUIRE(hq.triangles.size() >= 10000);

  CorruptionSpec cspec;
  cspec.noise_sigma = 0.0;
  cspec.hole_rate = 0.1;
  cspec.bulge_rate = 0.0;
  cspec.spurious_rate = 0.0;
  const TriangleMesh lq = corrupt_mesh(hq, cspec, 4321);
  const double removed = 1.0 - double(lq.triangles.size()) / double(hq.triangles.size());
  CHECK(removed == doctest::Approx(0.1).epsilon(0.1));  // 10% +- 1%
}

TEST_CASE("bulges displace smoothly; spurious surfaces add triangles") {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;
  append_grid_face(vertices, triangles, {0, 0, 0}, {10, 0, 0}, {0, 10, 0}, 0.2);
  const TriangleMesh hq = make_mesh(std::move(vertices), std::move(triangles));

  CorruptionSpec cspec;
  cspec.noise_sigma = 0.0;
  cspec.hole_rate = 0.0;
  cspec.bulge_rate = 1.0;
  cspec.bulge_amplitude = 1.0;
  cspec.spurious_rate = 1.0;
  const TriangleMesh lq = corrupt_mesh(hq, cspec, 31);
  double max_disp = 0.0;
  for (std::size_t i = 0; i < hq.vertices.size(); ++i)
    max_disp = std::max(max_disp, std::abs(lq.vertices[i].z - hq.vertices[i].z));
  CHECK(max_disp > 0.3);
  CHECK(lq.triangles.size() > hq.triangles.size());
}

TEST_CASE("sample_viewpoints construction rules") {
  const std::vector<Vec3> trajectory = {{0, 0, 1.5}, {3, 0, 1.5}};

  SUBCASE("straight 3 m trajectory at 0.3 m spacing gives 11 locations") {
    const auto sets = sample_viewpoints(trajectory, 0.3);
    CHECK(sets.size() == 11);
  }

  SUBCASE("front-right sits 2 m to the right, perpendicular to heading") {
    const auto sets = sample_viewpoints(trajectory, 0.3);
    const RigidTransform fl = sets[0].views[0].pose;
    const RigidTransform fr = sets[0].views[1].pose;
    const Vec3 pos_fl = invert(fl).translation;
    const Vec3 pos_fr = invert(fr).translation;
    const Vec3 baseline = pos_fr - pos_fl;
    CHECK(norm(baseline) == doctest::Approx(2.0));
    CHECK(std::abs(dot(baseline, {1, 0, 0})) < 1e-9);  // heading is +x
    // same heading: identical rotations
    for (int i = 0; i < 9; ++i) CHECK(fl.rotation.m[i] == doctest::Approx(fr.rotation.m[i]));
  }

  SUBCASE("back view reverses the heading at the same position") {
    const auto sets = sample_viewpoints(trajectory, 0.3);
    const RigidTransform fl = sets[3].views[0].pose;
    const RigidTransform back = sets[3].views[2].pose;
    const Vec3 p1 = invert(fl).translation;
    const Vec3 p2 = invert(back).translation;
    CHECK(norm(p1 - p2) < 1e-12);
    // optical axes are antiparallel
    const Vec3 fwd_fl = invert(fl).rotation * Vec3{0, 0, 1};
    const Vec3 fwd_back = invert(back).rotation * Vec3{0, 0, 1};
    CHECK(dot(fwd_fl, fwd_back) == doctest::Approx(-1.0));
  }

  SUBCASE("top view looks straight down from 25 m with heading preserved") {
    const auto sets = sample_viewpoints(trajectory, 0.3);
    const RigidTransform top = sets[0].views[3].pose;
    const Vec3 pos = invert(top).translation;
    CHECK(pos.z == doctest::Approx(1.5 + 25.0));
    CHECK(pos.x == doctest::Approx(0.0));
    const Vec3 axis = invert(top).rotation * Vec3{0, 0, 1};
    CHECK(std::abs(axis.x) < 1e-9);
    CHECK(std::abs(axis.y) < 1e-9);
    CHECK(axis.z == doctest::Approx(-1.0).epsilon(1e-9));
    // image up (-y_cam) points along the heading
    const Vec3 up_image = invert(top).rotation * Vec3{0, -1, 0};
    CHECK(dot(up_image, {1, 0, 0}) == doctest::Approx(1.0));
  }

  SUBCASE("degenerate trajectory throws") {
    CHECK_THROWS_AS(sample_viewpoints({{0, 0, 0}, {0, 0, 0}}, 0.3), std::invalid_argument);
    CHECK_THROWS_AS(sample_viewpoints({{0, 0, 0}}, 0.3), std::invalid_argument);
  }
}

namespace {

RunConfig tiny_config() {
  RunConfig config;
  config.camera = Intrinsics{80.0, 80.0, 48.0, 16.0, 96, 32};
  config.scene.scenes = 1;
  config.scene.extent = 14.0;
  config.scene.boxes = 2;
  config.scene.walls = 1;
  config.scene.resolution = 0.4;
  config.scene.trajectory_length = 2.7;  // 10 locations
  config.seed = 9;
  return config;
}

}  // namespace

TEST_CASE("build_dataset: counts, splits, alignment, determinism") {
  const fs::path dir = fs::temp_directory_path() / "meshcorr_datagen_test";
  fs::remove_all(dir);
  const RunConfig config = tiny_config();

  BuildReport report;
  const DatasetManifest manifest = build_dataset(config, (dir / "a").string(), &report);
  CHECK(report.scenes == 1);
  CHECK(report.groups == 10);
  CHECK(report.samples == 40);
  REQUIRE(manifest.samples.size() == 40);

  // split 8/1/1 groups by location order
  std::map<std::string, std::set<std::string>> split_groups;
  for (const DataSample& s : manifest.samples) split_groups[s.split].insert(s.group_id);
  CHECK(split_groups["train"].size() == 8);
  CHECK(split_groups["val"].size() == 1);
  CHECK(split_groups["test"].size() == 1);
  // groups never straddle splits and are complete
  std::map<std::string, int> group_count;
  for (const DataSample& s : manifest.samples) ++group_count[s.group_id];
  for (const auto& [g, n] : group_count) CHECK(n == 4);

  // lq and hq stacks share camera and pose exactly
  const DataSample& sample = manifest.samples[5];
  const MeshFeatureStack lq = read_stack((dir / "a" / sample.lq_stack).string());
  const MeshFeatureStack hq = read_stack((dir / "a" / sample.hq_stack).string());
  CHECK(lq.camera.fx == hq.camera.fx);
  for (int i = 0; i < 9; ++i) CHECK(lq.pose.rotation.m[i] == hq.pose.rotation.m[i]);
  CHECK(lq.pose.translation.x == hq.pose.translation.x);

  // manifest round trip
  const DatasetManifest reread = read_manifest((dir / "a" / "manifest.tsv").string());
  REQUIRE(reread.samples.size() == manifest.samples.size());
  CHECK(reread.samples[5].group_id == manifest.samples[5].group_id);
  CHECK(reread.samples[5].view == manifest.samples[5].view);

  // byte-identical regeneration
  build_dataset(config, (dir / "b").string(), nullptr);
  for (const char* name : {"manifest.tsv", "scene00_hq.obj", "scene00_lq.obj"})
    CHECK(fnv1a_file_digest((dir / "a" / name).string()) ==
          fnv1a_file_digest((dir / "b" / name).string()));
  for (const DataSample& s : manifest.samples) {
    CHECK(fnv1a_file_digest((dir / "a" / s.lq_stack).string()) ==
          fnv1a_file_digest((dir / "b" / s.lq_stack).string()));
    CHECK(fnv1a_file_digest((dir / "a" / s.label).string()) ==
          fnv1a_file_digest((dir / "b" / s.label).string()));
  }
  fs::remove_all(dir);
}

TEST_CASE("build_dataset with identity corruption gives all-zero labels") {
  const fs::path dir = fs::temp_directory_path() / "meshcorr_datagen_zero";
  fs::remove_all(dir);
  RunConfig config = tiny_config();
  config.corruption.noise_sigma = 0.0;
  config.corruption.hole_rate = 0.0;
  config.corruption.bulge_rate = 0.0;
  config.corruption.spurious_rate = 0.0;

  const DatasetManifest manifest = build_dataset(config, dir.string(), nullptr);
  for (int i = 0; i < 4; ++i) {
    const auto label = read_float_image((dir / manifest.samples[i].label).string());
    const auto valid = read_float_image((dir / manifest.samples[i].valid).string());
    for (int v = 0; v < label[0].height(); ++v)
      for (int u = 0; u < label[0].width(); ++u)
        if (valid[0].at(u, v) > 0.5f) CHECK(label[0].at(u, v) == 0.0f);
  }
  fs::remove_all(dir);
}
