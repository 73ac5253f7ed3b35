#pragma once

#include <cstdint>

#include "meshcorr/camera.hpp"
#include "meshcorr/image.hpp"
#include "meshcorr/mesh.hpp"

namespace meshcorr {

inline constexpr double kNearPlane = 0.01;  // m

enum class ViewLabel : std::uint8_t { FrontLeft = 0, FrontRight = 1, Back = 2, Top = 3 };

const char* view_label_name(ViewLabel label);
ViewLabel view_label_from_name(const std::string& name);

struct Viewpoint {
  RigidTransform pose;  // world -> camera
  ViewLabel label = ViewLabel::FrontLeft;
};

// Multi-channel rasterized view of a mesh. Background pixels carry
// inverse_depth 0, triangle_id 0, and zeros in every feature channel.
struct MeshFeatureStack {
  ImageF inverse_depth;  // 1/m
  ImageF normal_x, normal_y, normal_z;  // camera-frame unit vectors
  ImageF area;        // m^2, constant per triangle
  ImageF edge_ratio;  // (0, 1]
  ImageF cam_angle;   // radians in [0, pi/2]
  ImageU64 triangle_id;
  ImageU8 valid;
  Intrinsics camera;
  RigidTransform pose;  // world -> camera

  int width() const { return inverse_depth.width(); }
  int height() const { return inverse_depth.height(); }
};

// Software rasterization at pixel centers (integer coordinates). Nearest
// surface wins (largest inverse depth; ties to the smaller triangle id).
// Inverse depth is interpolated linearly in screen space, which is exact on
// planar triangles; all other channels are constant per triangle.
MeshFeatureStack rasterize(const TriangleMesh& mesh, const Intrinsics& camera,
                           const RigidTransform& pose);

struct LabelImage {
  ImageF g;       // d_hq - d_lq
  ImageU8 valid;  // hq.valid
};

// Per-pixel inverse-depth error label. Throws std::invalid_argument on
// mismatched dimensions.
LabelImage render_label(const MeshFeatureStack& hq, const MeshFeatureStack& lq);

}  // namespace meshcorr
