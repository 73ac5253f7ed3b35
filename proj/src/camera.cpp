#include "meshcorr/camera.hpp"

#include <cmath>
#include <stdexcept>

namespace meshcorr {

void Intrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw std::invalid_argument("Intrinsics: focal lengths must be > 0");
  if (width < 1 || height < 1) throw std::invalid_argument("Intrinsics: image size must be >= 1");
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height))
    throw std::invalid_argument("Intrinsics: principal point outside image");
}

bool RigidTransform::is_rigid(double tol) const {
  const Mat3 rtr = rotation.transpose() * rotation;
  const Mat3 id = Mat3::identity();
  for (int i = 0; i < 9; ++i)
    if (std::abs(rtr.m[i] - id.m[i]) > tol) return false;
  return std::abs(rotation.det() - 1.0) <= tol;
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  // (a ∘ b)(x) = a(b(x))
  RigidTransform r;
  r.rotation = a.rotation * b.rotation;
  r.translation = a.rotation * b.translation + a.translation;
  return r;
}

RigidTransform invert(const RigidTransform& a) {
  RigidTransform r;
  r.rotation = a.rotation.transpose();
  r.translation = -(r.rotation * a.translation);
  return r;
}

Mat4 lift_intrinsics(const Intrinsics& k) {
  Mat4 kh = Mat4::identity();
  kh(0, 0) = k.fx;
  kh(0, 2) = k.cx;
  kh(1, 1) = k.fy;
  kh(1, 2) = k.cy;
  return kh;
}

Mat4 lift_intrinsics_inverse(const Intrinsics& k) {
  Mat4 inv = Mat4::identity();
  inv(0, 0) = 1.0 / k.fx;
  inv(0, 2) = -k.cx / k.fx;
  inv(1, 1) = 1.0 / k.fy;
  inv(1, 2) = -k.cy / k.fy;
  return inv;
}

HomographyLift HomographyLift::from_transform(const Intrinsics& k,
                                              const RigidTransform& view_from_view) {
  Mat4 t = Mat4::identity();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) t(i, j) = view_from_view.rotation(i, j);
  t(0, 3) = view_from_view.translation.x;
  t(1, 3) = view_from_view.translation.y;
  t(2, 3) = view_from_view.translation.z;
  HomographyLift f;
  f.matrix = lift_intrinsics(k) * t * lift_intrinsics_inverse(k);
  return f;
}

HomographyLift HomographyLift::inverse() const {
  HomographyLift r;
  if (!matrix.invert(&r.matrix)) throw std::invalid_argument("HomographyLift: singular matrix");
  return r;
}

WarpedPoint forward_warp_point(const HomogeneousPixelPoint& x_t, const HomographyLift& f,
                               double eps) {
  const Vec4 x_n = f.matrix * Vec4{x_t.u, x_t.v, x_t.w, x_t.d};
  const double denom = x_n.z + sign_or_positive(x_n.z) * eps;
  WarpedPoint out;
  out.pixel = {x_n.x / denom, x_n.y / denom};
  out.inverse_depth = x_n.w / denom;
  out.front_of_camera = x_n.z > 0.0;
  return out;
}

WarpedPoint forward_warp_point_with_jacobian(const HomogeneousPixelPoint& x_t,
                                             const HomographyLift& f, double eps,
                                             WarpedPointJacobian* jac) {
  const Vec4 x_n = f.matrix * Vec4{x_t.u, x_t.v, x_t.w, x_t.d};
  const double denom = x_n.z + sign_or_positive(x_n.z) * eps;
  WarpedPoint out;
  out.pixel = {x_n.x / denom, x_n.y / denom};
  out.inverse_depth = x_n.w / denom;
  out.front_of_camera = x_n.z > 0.0;
  if (jac) {
    // x_n is affine in d with slope the fourth column of F_h; the sign of
    // the guard is locally constant.
    const Vec4 col = f.matrix.column(3);
    const double inv_denom = 1.0 / denom;
    jac->dpixel_dd = {(col.x - out.pixel.x * col.z) * inv_denom,
                      (col.y - out.pixel.y * col.z) * inv_denom};
    jac->dinverse_depth_dd = (col.w - out.inverse_depth * col.z) * inv_denom;
  }
  return out;
}

}  // namespace meshcorr
