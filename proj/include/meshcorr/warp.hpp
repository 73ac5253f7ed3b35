#pragma once

#include "meshcorr/camera.hpp"
#include "meshcorr/image.hpp"

namespace meshcorr {

// Dense reprojection of a view-t inverse-depth image into view n.
// Pixels with d_t <= 0 (background or non-physical predictions) are
// excluded via in_bounds rather than warped to infinity.
struct Reprojection {
  ImageF d_nt;          // inverse depth of view t expressed in view n's frame
  ImageV2 sample_coords;  // p_n per target pixel
  ImageU8 in_bounds;    // front of camera and inside [0, W-1] x [0, H-1]
};

Reprojection reproject(const ImageF& d_t, const RigidTransform& t_nt, const Intrinsics& k,
                       double eps = kWarpEpsilon);

// Bilinear interpolation over the four nearest integer-coordinate pixels.
// Pixels not in_bounds return 0.
ImageF sample_bilinear(const ImageF& image, const ImageV2& coords, const ImageU8& in_bounds);

// Reverse-mode products for sample_bilinear: accumulates upstream into
// d_image (gradient w.r.t. the four source pixels) and d_coords (gradient
// w.r.t. the sample coordinates). Either output may be null.
void sample_bilinear_vjp(const ImageF& image, const ImageV2& coords, const ImageU8& in_bounds,
                         const ImageF& upstream, ImageF* d_image, ImageV2* d_coords);

// U_n: pixel p is unoccluded iff in_bounds(p), id_t(p) != 0, and id_t(p)
// matches one of the four nearest-neighbor samples of id_n at coords(p).
ImageU8 occlusion_mask(const ImageU64& id_t, const ImageU64& id_n, const ImageV2& coords,
                       const ImageU8& in_bounds);

struct WarpResult {
  ImageF d_nt;
  ImageF d_tilde;  // warped inverse depth sampled from view n
  ImageV2 sample_coords;
  ImageU8 in_bounds;
  ImageU8 unoccluded;
};

WarpResult warp_pair(const ImageF& d_star_t, const ImageF& d_star_n, const ImageU64& id_t,
                     const ImageU64& id_n, const RigidTransform& t_nt, const Intrinsics& k,
                     double eps = kWarpEpsilon);

struct Inconsistency {
  ImageF residual;  // |d_tilde - d_nt| on U_n, 0 elsewhere
  WarpResult warp;
};

Inconsistency inconsistency(const ImageF& d_star_t, const ImageF& d_star_n, const ImageU64& id_t,
                            const ImageU64& id_n, const RigidTransform& t_nt, const Intrinsics& k,
                            double eps = kWarpEpsilon);

}  // namespace meshcorr
