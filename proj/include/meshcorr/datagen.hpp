#pragma once

#include <array>
#include <string>
#include <vector>

#include "meshcorr/config.hpp"
#include "meshcorr/mesh.hpp"
#include "meshcorr/rasterizer.hpp"

namespace meshcorr {

struct SceneSpec {
  std::uint64_t seed = 1;
  double extent = 24.0;
  int box_count = 6;
  double box_min_size = 1.5;
  double box_max_size = 4.5;
  int wall_count = 3;
  double wall_min_len = 3.0;
  double wall_max_len = 8.0;
  double wall_height_min = 2.0;
  double wall_height_max = 4.0;
  double resolution = 0.2;  // target edge length, m

  // camera corridor through the scene center: no boxes or walls are placed
  // within corridor_half_width of the line along corridor_dir (x, y)
  double corridor_dir_x = 0.0;
  double corridor_dir_y = 0.0;
  double corridor_half_width = 0.0;
};

SceneSpec scene_spec_from_config(const SceneConfig& config, std::uint64_t seed);

// Axis grid of one rectangular face: origin + s*e1 + t*e2, triangulated at
// the target edge length. Appends to the vertex/triangle arrays.
void append_grid_face(std::vector<Vec3>& vertices,
                      std::vector<std::array<std::uint32_t, 3>>& triangles, const Vec3& origin,
                      const Vec3& e1, const Vec3& e2, double resolution);

// Closed box (six gridded faces) standing on base_center's plane, rotated by
// yaw. The bottom is sunk by `sink` so it cannot z-fight the ground.
void append_box(std::vector<Vec3>& vertices, std::vector<std::array<std::uint32_t, 3>>& triangles,
                const Vec3& base_center, double sx, double sy, double sz, double yaw,
                double resolution, double sink = 0.01);

// Ground plane with boxes and vertical panels, deterministic in the seed.
TriangleMesh generate_scene(const SceneSpec& spec);

struct CorruptionSpec {
  double noise_sigma = 0.03;
  double hole_rate = 0.08;
  double bulge_rate = 0.6;
  double bulge_amplitude = 1.2;
  double spurious_rate = 0.25;
  double patch_min_area = 1.0;
};

CorruptionSpec corruption_spec_from_config(const CorruptionConfig& config);

// Low-quality mesh: vertex noise along normals, holes punched in large
// planar patches, smooth bulges, spurious floating surfaces.
TriangleMesh corrupt_mesh(const TriangleMesh& hq, const CorruptionSpec& spec, std::uint64_t seed);

struct ViewpointSet {
  Vec3 location;
  std::array<Viewpoint, 4> views;  // FrontLeft, FrontRight, Back, Top
};

// Locations every `spacing` meters of arclength along the polyline (camera
// height included in the polyline), with the four viewpoints per location.
// Throws std::invalid_argument on a zero-length trajectory.
std::vector<ViewpointSet> sample_viewpoints(const std::vector<Vec3>& trajectory,
                                            double spacing = 0.3, double right_offset = 2.0,
                                            double top_height = 25.0);

// World -> camera pose looking along `heading` (horizontal) from `position`,
// image v axis pointing down.
RigidTransform look_pose(const Vec3& position, const Vec3& heading);

struct DataSample {
  int scene_id = 0;
  int location_index = 0;
  ViewLabel view = ViewLabel::FrontLeft;
  std::string group_id;
  std::string split;  // train | val | test
  std::string lq_stack;
  std::string hq_stack;
  std::string label;
  std::string valid;
};

struct DatasetManifest {
  std::vector<DataSample> samples;
  std::string root;  // directory paths are relative to
};

void write_manifest(const std::string& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::string& path);

struct BuildReport {
  int scenes = 0;
  int groups = 0;
  int samples = 0;
  std::size_t hq_triangles = 0;
  std::size_t lq_triangles = 0;
};

// Renders lq and hq stacks for every viewpoint of every scene with the same
// camera and pose, writes labels and the manifest. 80/10/10 split by
// location order within each scene.
DatasetManifest build_dataset(const RunConfig& config, const std::string& out_dir,
                              BuildReport* report = nullptr);

}  // namespace meshcorr
