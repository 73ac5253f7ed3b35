#pragma once

#include "meshcorr/geometry.hpp"

namespace meshcorr {

// Guard added to projective divisions, with the sign of the denominator.
inline constexpr double kWarpEpsilon = 1e-6;

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  bool valid() const {
    return fx > 0.0 && fy > 0.0 && width >= 1 && height >= 1 && cx >= 0.0 && cx < width &&
           cy >= 0.0 && cy < height;
  }
  void validate() const;
};

// SE(3) transform x -> rotation * x + translation.
struct RigidTransform {
  Mat3 rotation = Mat3::identity();
  Vec3 translation;

  static RigidTransform identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  bool is_rigid(double tol = 1e-9) const;
};

RigidTransform compose(const RigidTransform& a, const RigidTransform& b);
RigidTransform invert(const RigidTransform& a);

// 4x4 embedding of the pinhole matrix: K in the top-left block, unit
// fourth row/column.
Mat4 lift_intrinsics(const Intrinsics& k);
Mat4 lift_intrinsics_inverse(const Intrinsics& k);

// F_h = K_h * T * K_h^-1, mapping homogeneous pixel points between views.
struct HomographyLift {
  Mat4 matrix = Mat4::identity();

  static HomographyLift from_transform(const Intrinsics& k, const RigidTransform& view_from_view);
  HomographyLift inverse() const;
};

// Homogeneous pixel point (u, v, 1, d) with d the inverse depth in 1/m.
struct HomogeneousPixelPoint {
  double u = 0.0;
  double v = 0.0;
  double w = 1.0;
  double d = 0.0;
};

struct WarpedPoint {
  Vec2 pixel;             // p_n
  double inverse_depth;   // d_{n,t}
  bool front_of_camera;   // third homogeneous component > 0
};

// sign(0) := +1 so the guard is total.
inline double sign_or_positive(double x) { return x < 0.0 ? -1.0 : 1.0; }

WarpedPoint forward_warp_point(const HomogeneousPixelPoint& x_t, const HomographyLift& f,
                               double eps = kWarpEpsilon);

// Partials of the warped pixel and inverse depth with respect to the input
// inverse depth component; used to differentiate through dense warps.
struct WarpedPointJacobian {
  Vec2 dpixel_dd;
  double dinverse_depth_dd = 0.0;
};

WarpedPoint forward_warp_point_with_jacobian(const HomogeneousPixelPoint& x_t,
                                             const HomographyLift& f, double eps,
                                             WarpedPointJacobian* jac);

}  // namespace meshcorr
