#include "meshcorr/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include "meshcorr/io.hpp"
#include "meshcorr/rng.hpp"

namespace meshcorr {

namespace fs = std::filesystem;

SceneSpec scene_spec_from_config(const SceneConfig& config, std::uint64_t seed) {
  SceneSpec s;
  s.seed = seed;
  s.extent = config.extent;
  s.box_count = config.boxes;
  s.box_min_size = config.box_min;
  s.box_max_size = config.box_max;
  s.wall_count = config.walls;
  s.wall_min_len = config.wall_min;
  s.wall_max_len = config.wall_max;
  s.wall_height_min = config.wall_height_min;
  s.wall_height_max = config.wall_height_max;
  s.resolution = config.resolution;
  return s;
}

CorruptionSpec corruption_spec_from_config(const CorruptionConfig& config) {
  CorruptionSpec s;
  s.noise_sigma = config.noise_sigma;
  s.hole_rate = config.hole_rate;
  s.bulge_rate = config.bulge_rate;
  s.bulge_amplitude = config.bulge_amplitude;
  s.spurious_rate = config.spurious_rate;
  s.patch_min_area = config.patch_min_area;
  return s;
}

void append_grid_face(std::vector<Vec3>& vertices,
                      std::vector<std::array<std::uint32_t, 3>>& triangles, const Vec3& origin,
                      const Vec3& e1, const Vec3& e2, double resolution) {
  const double len1 = norm(e1);
  const double len2 = norm(e2);
  const int n1 = std::max(1, static_cast<int>(std::llround(len1 / resolution)));
  const int n2 = std::max(1, static_cast<int>(std::llround(len2 / resolution)));
  const std::uint32_t base = static_cast<std::uint32_t>(vertices.size());
  for (int j = 0; j <= n2; ++j)
    for (int i = 0; i <= n1; ++i)
      vertices.push_back(origin + e1 * (static_cast<double>(i) / n1) +
                         e2 * (static_cast<double>(j) / n2));
  const auto idx = [&](int i, int j) {
    return base + static_cast<std::uint32_t>(j * (n1 + 1) + i);
  };
  for (int j = 0; j < n2; ++j)
    for (int i = 0; i < n1; ++i) {
      triangles.push_back({idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)});
      triangles.push_back({idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)});
    }
}

namespace {

}  // namespace

void append_box(std::vector<Vec3>& vertices, std::vector<std::array<std::uint32_t, 3>>& triangles,
                const Vec3& base_center, double sx, double sy, double sz, double yaw,
                double resolution, double sink) {
  const Vec3 ex = {std::cos(yaw), std::sin(yaw), 0.0};
  const Vec3 ey = {-std::sin(yaw), std::cos(yaw), 0.0};
  const Vec3 hx = ex * (sx / 2.0), hy = ey * (sy / 2.0);
  // the bottom is sunk below the base plane so it never z-fights the ground
  const Vec3 b = base_center - hx - hy - Vec3{0.0, 0.0, sink};
  const Vec3 x2 = hx * 2.0, y2 = hy * 2.0, z2 = Vec3{0.0, 0.0, sz + sink};
  append_grid_face(vertices, triangles, b + z2, x2, y2, resolution);              // top
  append_grid_face(vertices, triangles, b, y2, x2, resolution);                   // bottom
  append_grid_face(vertices, triangles, b, y2, z2, resolution);                   // -x side
  append_grid_face(vertices, triangles, b + x2 + y2, y2 * -1.0, z2, resolution);  // +x side
  append_grid_face(vertices, triangles, b + x2, x2 * -1.0, z2, resolution);       // -y side
  append_grid_face(vertices, triangles, b + y2, x2, z2, resolution);              // +y side
}

namespace {

// distance from (x, y) to the corridor line through the origin
double corridor_distance(const SceneSpec& spec, double x, double y) {
  const double len = std::hypot(spec.corridor_dir_x, spec.corridor_dir_y);
  if (len < 1e-9 || spec.corridor_half_width <= 0.0)
    return std::numeric_limits<double>::infinity();
  return std::abs(spec.corridor_dir_x * y - spec.corridor_dir_y * x) / len;
}

}  // namespace

TriangleMesh generate_scene(const SceneSpec& spec) {
  SplitMix64 rng(spec.seed);
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;

  const double half = spec.extent / 2.0;
  append_grid_face(vertices, triangles, {-half, -half, 0.0}, {spec.extent, 0.0, 0.0},
                   {0.0, spec.extent, 0.0}, spec.resolution);

  for (int b = 0; b < spec.box_count; ++b) {
    const double sx = rng.uniform(spec.box_min_size, spec.box_max_size);
    const double sy = rng.uniform(spec.box_min_size, spec.box_max_size);
    const double sz = rng.uniform(spec.box_min_size, spec.box_max_size);
    const double margin = std::max(sx, sy);
    const double radius = 0.5 * std::hypot(sx, sy);
    double cx = 0.0, cy = 0.0;
    for (int attempt = 0; attempt < 64; ++attempt) {
      cx = rng.uniform(-half + margin, half - margin);
      cy = rng.uniform(-half + margin, half - margin);
      if (corridor_distance(spec, cx, cy) >= spec.corridor_half_width + radius) break;
      if (attempt == 63) cx = cy = half;  // give up: park it in the corner
    }
    const double yaw = rng.uniform(0.0, 6.28318530717958647692);
    append_box(vertices, triangles, {cx, cy, 0.0}, sx, sy, sz, yaw, spec.resolution);
  }

  for (int p = 0; p < spec.wall_count; ++p) {
    const double len = rng.uniform(spec.wall_min_len, spec.wall_max_len);
    const double height = rng.uniform(spec.wall_height_min, spec.wall_height_max);
    double cx = 0.0, cy = 0.0;
    for (int attempt = 0; attempt < 64; ++attempt) {
      cx = rng.uniform(-half + len / 2.0, half - len / 2.0);
      cy = rng.uniform(-half + len / 2.0, half - len / 2.0);
      if (corridor_distance(spec, cx, cy) >= spec.corridor_half_width + len / 2.0) break;
      if (attempt == 63) cx = cy = half;
    }
    const double yaw = rng.uniform(0.0, 6.28318530717958647692);
    const Vec3 dir = {std::cos(yaw), std::sin(yaw), 0.0};
    const Vec3 origin = Vec3{cx, cy, 0.0} - dir * (len / 2.0);
    append_grid_face(vertices, triangles, origin, dir * len, {0.0, 0.0, height}, spec.resolution);
  }

  return make_mesh(std::move(vertices), std::move(triangles));
}

namespace {

struct PatchKey {
  std::int32_t nx, ny, nz;
  std::int64_t offset;
  bool operator<(const PatchKey& o) const {
    if (nx != o.nx) return nx < o.nx;
    if (ny != o.ny) return ny < o.ny;
    if (nz != o.nz) return nz < o.nz;
    return offset < o.offset;
  }
};

struct Patch {
  double area = 0.0;
  Vec3 normal;
  std::vector<std::uint32_t> tri_indices;
};

// Triangles grouped by quantized plane (normal to 0.05, offset to 0.05 m);
// large patches stand in for low-texture regions.
std::map<PatchKey, Patch> planar_patches(const TriangleMesh& mesh) {
  std::map<PatchKey, Patch> patches;
  for (std::uint32_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    const Vec3& v0 = mesh.vertices[tri[0]];
    const Vec3& v1 = mesh.vertices[tri[1]];
    const Vec3& v2 = mesh.vertices[tri[2]];
    const Vec3 n = triangle_normal(v0, v1, v2);
    const double offset = dot(n, v0);
    PatchKey key{static_cast<std::int32_t>(std::llround(n.x / 0.05)),
                 static_cast<std::int32_t>(std::llround(n.y / 0.05)),
                 static_cast<std::int32_t>(std::llround(n.z / 0.05)),
                 static_cast<std::int64_t>(std::llround(offset / 0.05))};
    Patch& patch = patches[key];
    patch.area += triangle_area(v0, v1, v2);
    patch.normal = n;
    patch.tri_indices.push_back(t);
  }
  return patches;
}

std::vector<Vec3> vertex_normals(const TriangleMesh& mesh) {
  std::vector<Vec3> normals(mesh.vertices.size());
  for (const auto& tri : mesh.triangles) {
    const Vec3& v0 = mesh.vertices[tri[0]];
    const Vec3& v1 = mesh.vertices[tri[1]];
    const Vec3& v2 = mesh.vertices[tri[2]];
    const Vec3 weighted = cross(v1 - v0, v2 - v0);  // 2*area-weighted normal
    for (std::uint32_t i : tri) normals[i] += weighted;
  }
  for (Vec3& n : normals) {
    const double len = norm(n);
    if (len > 1e-12) n = n * (1.0 / len);
  }
  return normals;
}

}  // namespace

TriangleMesh corrupt_mesh(const TriangleMesh& hq, const CorruptionSpec& spec, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<Vec3> vertices = hq.vertices;
  const std::vector<Vec3> normals = vertex_normals(hq);

  if (spec.noise_sigma > 0.0) {
    for (std::size_t i = 0; i < vertices.size(); ++i)
      vertices[i] += normals[i] * (rng.gaussian() * spec.noise_sigma);
  }

  const auto patches = planar_patches(hq);

  // bulges: smooth low-frequency displacement per eligible patch
  SplitMix64 bulge_rng = rng.fork(1);
  for (const auto& [key, patch] : patches) {
    if (patch.area < spec.patch_min_area) continue;
    if (!bulge_rng.bernoulli(spec.bulge_rate)) continue;
    const std::uint32_t t = patch.tri_indices[bulge_rng.below(patch.tri_indices.size())];
    const auto& tri = hq.triangles[t];
    const Vec3 center =
        (hq.vertices[tri[0]] + hq.vertices[tri[1]] + hq.vertices[tri[2]]) * (1.0 / 3.0);
    const double radius = bulge_rng.uniform(0.15, 0.35) * std::sqrt(patch.area);
    const double amp = bulge_rng.uniform(0.5, 1.0) * spec.bulge_amplitude *
                       (bulge_rng.bernoulli(0.5) ? 1.0 : -1.0);
    const double cutoff = 3.0 * radius;
    for (std::size_t i = 0; i < vertices.size(); ++i) {
      const Vec3 delta = hq.vertices[i] - center;
      const double dist = norm(delta);
      if (dist > cutoff) continue;
      const double weight = std::exp(-0.5 * (dist * dist) / (radius * radius));
      vertices[i] += normals[i] * (amp * weight);
    }
  }

  // holes: iid per-triangle drop within eligible patches
  std::vector<char> keep(hq.triangles.size(), 1);
  SplitMix64 hole_rng = rng.fork(2);
  if (spec.hole_rate > 0.0) {
    for (const auto& [key, patch] : patches) {
      if (patch.area < spec.patch_min_area) continue;
      for (std::uint32_t t : patch.tri_indices)
        if (hole_rng.bernoulli(spec.hole_rate)) keep[t] = 0;
    }
  }

  std::vector<std::array<std::uint32_t, 3>> triangles;
  triangles.reserve(hq.triangles.size());
  for (std::uint32_t t = 0; t < hq.triangles.size(); ++t)
    if (keep[t]) triangles.push_back(hq.triangles[t]);

  // spurious floating surfaces near eligible patches
  SplitMix64 spur_rng = rng.fork(3);
  for (const auto& [key, patch] : patches) {
    if (patch.area < spec.patch_min_area) continue;
    if (!spur_rng.bernoulli(spec.spurious_rate)) continue;
    const std::uint32_t t = patch.tri_indices[spur_rng.below(patch.tri_indices.size())];
    const auto& tri = hq.triangles[t];
    const Vec3 center =
        (hq.vertices[tri[0]] + hq.vertices[tri[1]] + hq.vertices[tri[2]]) * (1.0 / 3.0);
    const Vec3 offset_dir = patch.normal;
    const Vec3 origin = center + offset_dir * spur_rng.uniform(0.3, 1.0);
    const double size = spur_rng.uniform(0.4, 1.2);
    // panel axes orthogonal to a jittered normal
    Vec3 axis = {spur_rng.uniform(-1.0, 1.0), spur_rng.uniform(-1.0, 1.0),
                 spur_rng.uniform(-1.0, 1.0)};
    if (norm(axis) < 1e-6) axis = {1.0, 0.0, 0.0};
    Vec3 e1 = cross(offset_dir, axis);
    if (norm(e1) < 1e-6) e1 = cross(offset_dir, Vec3{0.0, 1.0, 0.0});
    e1 = normalized(e1) * size;
    const Vec3 e2 = normalized(cross(offset_dir, normalized(e1))) * size;
    append_grid_face(vertices, triangles, origin - (e1 + e2) * 0.5, e1, e2, 0.2);
  }

  return make_mesh(std::move(vertices), std::move(triangles));
}

RigidTransform look_pose(const Vec3& position, const Vec3& heading) {
  const Vec3 forward = normalized(heading);
  Vec3 right;
  if (std::abs(forward.z) > 0.999) {
    // straight up/down: derive right from world x to keep the pose defined
    right = normalized(cross(Vec3{1.0, 0.0, 0.0}, Vec3{0.0, 0.0, 1.0}));
  } else {
    right = normalized(cross(forward, Vec3{0.0, 0.0, 1.0}));
  }
  const Vec3 down = cross(forward, right);
  RigidTransform pose;
  pose.rotation = Mat3::from_rows(right, down, forward);
  pose.translation = -(pose.rotation * position);
  return pose;
}

namespace {

RigidTransform top_pose(const Vec3& position, const Vec3& heading) {
  const Vec3 forward = {0.0, 0.0, -1.0};
  const Vec3 right = normalized(cross(normalized(heading), Vec3{0.0, 0.0, 1.0}));
  const Vec3 down = cross(forward, right);
  RigidTransform pose;
  pose.rotation = Mat3::from_rows(right, down, forward);
  pose.translation = -(pose.rotation * position);
  return pose;
}

}  // namespace

std::vector<ViewpointSet> sample_viewpoints(const std::vector<Vec3>& trajectory, double spacing,
                                            double right_offset, double top_height) {
  if (trajectory.size() < 2) throw std::invalid_argument("sample_viewpoints: degenerate trajectory");
  double total = 0.0;
  for (std::size_t i = 1; i < trajectory.size(); ++i) total += norm(trajectory[i] - trajectory[i - 1]);
  if (total < spacing) throw std::invalid_argument("sample_viewpoints: trajectory shorter than spacing");

  std::vector<ViewpointSet> sets;
  const int count = static_cast<int>(std::floor(total / spacing + 1e-9)) + 1;
  std::size_t seg = 1;
  double seg_start = 0.0;
  for (int i = 0; i < count; ++i) {
    const double s = std::min(i * spacing, total);
    while (seg + 1 < trajectory.size() &&
           seg_start + norm(trajectory[seg] - trajectory[seg - 1]) < s) {
      seg_start += norm(trajectory[seg] - trajectory[seg - 1]);
      ++seg;
    }
    const Vec3 a = trajectory[seg - 1];
    const Vec3 b = trajectory[seg];
    const double seg_len = norm(b - a);
    const double t = seg_len > 0.0 ? (s - seg_start) / seg_len : 0.0;
    const Vec3 position = a + (b - a) * t;
    const Vec3 heading = normalized(b - a);
    const Vec3 right = normalized(cross(heading, Vec3{0.0, 0.0, 1.0}));

    ViewpointSet set;
    set.location = position;
    set.views[0] = {look_pose(position, heading), ViewLabel::FrontLeft};
    set.views[1] = {look_pose(position + right * right_offset, heading), ViewLabel::FrontRight};
    set.views[2] = {look_pose(position, -heading), ViewLabel::Back};
    set.views[3] = {top_pose(position + Vec3{0.0, 0.0, top_height}, heading), ViewLabel::Top};
    sets.push_back(set);
  }
  return sets;
}

void write_manifest(const std::string& path, const DatasetManifest& manifest) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest: " + path);
  out << "# meshcorr-manifest-v1\n";
  out << "scene\tlocation\tview\tgroup\tsplit\tlq_stack\thq_stack\tlabel\tvalid\n";
  for (const DataSample& s : manifest.samples) {
    out << s.scene_id << '\t' << s.location_index << '\t' << view_label_name(s.view) << '\t'
        << s.group_id << '\t' << s.split << '\t' << s.lq_stack << '\t' << s.hq_stack << '\t'
        << s.label << '\t' << s.valid << '\n';
  }
  if (!out) throw std::runtime_error("manifest write failed: " + path);
}

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path);
  DatasetManifest manifest;
  manifest.root = fs::path(path).parent_path().string();
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;  // column header
      continue;
    }
    std::vector<std::string> cols;
    std::istringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (cols.size() != 9) throw std::runtime_error("bad manifest row in " + path + ": " + line);
    DataSample s;
    s.scene_id = std::stoi(cols[0]);
    s.location_index = std::stoi(cols[1]);
    s.view = view_label_from_name(cols[2]);
    s.group_id = cols[3];
    s.split = cols[4];
    s.lq_stack = cols[5];
    s.hq_stack = cols[6];
    s.label = cols[7];
    s.valid = cols[8];
    manifest.samples.push_back(s);
  }
  return manifest;
}

DatasetManifest build_dataset(const RunConfig& config, const std::string& out_dir,
                              BuildReport* report) {
  validate_config(config);
  fs::create_directories(out_dir);
  if (!fs::is_directory(out_dir))
    throw std::runtime_error("cannot create output directory: " + out_dir);

  DatasetManifest manifest;
  manifest.root = out_dir;
  BuildReport rep;

  const SceneConfig& sc = config.scene;
  for (int scene = 0; scene < sc.scenes; ++scene) {
    const std::uint64_t scene_seed = config.seed * 1000003ull + static_cast<std::uint64_t>(scene);
    SceneSpec spec = scene_spec_from_config(sc, scene_seed);
    // the trajectory runs through the center; keep its corridor buildable-free
    SplitMix64 heading_rng(scene_seed ^ 0x2545F4914F6CDD1Dull);
    const double theta = heading_rng.uniform(0.0, 6.28318530717958647692);
    spec.corridor_dir_x = std::cos(theta);
    spec.corridor_dir_y = std::sin(theta);
    spec.corridor_half_width = sc.right_offset + 1.0;
    const TriangleMesh hq = generate_scene(spec);
    const TriangleMesh lq =
        corrupt_mesh(hq, corruption_spec_from_config(config.corruption), scene_seed ^ 0x5bd1e995ull);
    rep.hq_triangles += hq.triangles.size();
    rep.lq_triangles += lq.triangles.size();

    char name[64];
    std::snprintf(name, sizeof(name), "scene%02d_hq.obj", scene);
    save_obj((fs::path(out_dir) / name).string(), hq);
    std::snprintf(name, sizeof(name), "scene%02d_lq.obj", scene);
    save_obj((fs::path(out_dir) / name).string(), lq);

    // straight trajectory through the scene center along the corridor
    const Vec3 dir = {spec.corridor_dir_x, spec.corridor_dir_y, 0.0};
    const double half_len = sc.trajectory_length / 2.0;
    const Vec3 start = Vec3{0.0, 0.0, sc.camera_height} - dir * half_len;
    const Vec3 end = Vec3{0.0, 0.0, sc.camera_height} + dir * half_len;
    const auto sets = sample_viewpoints({start, end}, sc.spacing, sc.right_offset, sc.top_height);

    const int n_locations = static_cast<int>(sets.size());
    const int n_train = static_cast<int>(std::floor(0.8 * n_locations));
    const int n_val = static_cast<int>(std::floor(0.1 * n_locations));

    for (int loc = 0; loc < n_locations; ++loc) {
      const char* split = loc < n_train ? "train" : (loc < n_train + n_val ? "val" : "test");
      char group[64];
      std::snprintf(group, sizeof(group), "s%02d_l%03d", scene, loc);
      for (const Viewpoint& view : sets[static_cast<std::size_t>(loc)].views) {
        const MeshFeatureStack hq_stack = rasterize(hq, config.camera, view.pose);
        const MeshFeatureStack lq_stack = rasterize(lq, config.camera, view.pose);
        const LabelImage label = render_label(hq_stack, lq_stack);

        char stem[96];
        std::snprintf(stem, sizeof(stem), "s%02d_l%03d_%s", scene, loc, view_label_name(view.label));
        DataSample sample;
        sample.scene_id = scene;
        sample.location_index = loc;
        sample.view = view.label;
        sample.group_id = group;
        sample.split = split;
        sample.lq_stack = std::string(stem) + "_lq.mcs";
        sample.hq_stack = std::string(stem) + "_hq.mcs";
        sample.label = std::string(stem) + "_label.mci";
        sample.valid = std::string(stem) + "_valid.mci";

        write_stack((fs::path(out_dir) / sample.lq_stack).string(), lq_stack);
        write_stack((fs::path(out_dir) / sample.hq_stack).string(), hq_stack);
        write_float_image((fs::path(out_dir) / sample.label).string(), label.g);
        ImageF valid_f(label.valid.width(), label.valid.height());
        for (int v = 0; v < valid_f.height(); ++v)
          for (int u = 0; u < valid_f.width(); ++u)
            valid_f.at(u, v) = label.valid.at(u, v) ? 1.0f : 0.0f;
        write_float_image((fs::path(out_dir) / sample.valid).string(), valid_f);

        manifest.samples.push_back(sample);
        ++rep.samples;
      }
      ++rep.groups;
    }
    ++rep.scenes;
  }

  write_manifest((fs::path(out_dir) / "manifest.tsv").string(), manifest);
  if (report) *report = rep;
  return manifest;
}

}  // namespace meshcorr
