#include "meshcorr/warp.hpp"

#include <algorithm>
#include <cmath>

namespace meshcorr {

Reprojection reproject(const ImageF& d_t, const RigidTransform& t_nt, const Intrinsics& k,
                       double eps) {
  const int w = d_t.width();
  const int h = d_t.height();
  Reprojection out;
  out.d_nt = ImageF(w, h, 0.0f);
  out.sample_coords = ImageV2(w, h);
  out.in_bounds = ImageU8(w, h, 0);

  const HomographyLift f = HomographyLift::from_transform(k, t_nt);
  const double u_max = k.width - 1;
  const double v_max = k.height - 1;

  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const double d = d_t.at(u, v);
      if (d <= 0.0) continue;
      const WarpedPoint p = forward_warp_point({double(u), double(v), 1.0, d}, f, eps);
      out.d_nt.at(u, v) = static_cast<float>(p.inverse_depth);
      out.sample_coords.at(u, v) = {static_cast<float>(p.pixel.x), static_cast<float>(p.pixel.y)};
      const bool inside = p.front_of_camera && p.pixel.x >= 0.0 && p.pixel.x <= u_max &&
                          p.pixel.y >= 0.0 && p.pixel.y <= v_max;
      out.in_bounds.at(u, v) = inside ? 1 : 0;
    }
  }
  return out;
}

namespace {

struct BilinearTaps {
  int u0, v0, u1, v1;
  double fu, fv;
};

inline BilinearTaps taps_at(const Pix2& c, int w, int h) {
  BilinearTaps t;
  const double cu = c.u;
  const double cv = c.v;
  t.u0 = std::clamp(static_cast<int>(std::floor(cu)), 0, w - 1);
  t.v0 = std::clamp(static_cast<int>(std::floor(cv)), 0, h - 1);
  t.u1 = std::min(t.u0 + 1, w - 1);
  t.v1 = std::min(t.v0 + 1, h - 1);
  t.fu = cu - t.u0;
  t.fv = cv - t.v0;
  return t;
}

}  // namespace

ImageF sample_bilinear(const ImageF& image, const ImageV2& coords, const ImageU8& in_bounds) {
  require_same_shape(coords, in_bounds, "sample_bilinear");
  ImageF out(coords.width(), coords.height(), 0.0f);
  const int w = image.width();
  const int h = image.height();
  for (int v = 0; v < coords.height(); ++v) {
    for (int u = 0; u < coords.width(); ++u) {
      if (!in_bounds.at(u, v)) continue;
      const BilinearTaps t = taps_at(coords.at(u, v), w, h);
      const double i00 = image.at(t.u0, t.v0);
      const double i10 = image.at(t.u1, t.v0);
      const double i01 = image.at(t.u0, t.v1);
      const double i11 = image.at(t.u1, t.v1);
      const double val = (1.0 - t.fv) * ((1.0 - t.fu) * i00 + t.fu * i10) +
                         t.fv * ((1.0 - t.fu) * i01 + t.fu * i11);
      out.at(u, v) = static_cast<float>(val);
    }
  }
  return out;
}

void sample_bilinear_vjp(const ImageF& image, const ImageV2& coords, const ImageU8& in_bounds,
                         const ImageF& upstream, ImageF* d_image, ImageV2* d_coords) {
  require_same_shape(coords, in_bounds, "sample_bilinear_vjp");
  require_same_shape(coords, upstream, "sample_bilinear_vjp");
  const int w = image.width();
  const int h = image.height();
  for (int v = 0; v < coords.height(); ++v) {
    for (int u = 0; u < coords.width(); ++u) {
      if (!in_bounds.at(u, v)) continue;
      const double g = upstream.at(u, v);
      if (g == 0.0) continue;
      const BilinearTaps t = taps_at(coords.at(u, v), w, h);
      if (d_image) {
        d_image->at(t.u0, t.v0) += static_cast<float>(g * (1.0 - t.fu) * (1.0 - t.fv));
        d_image->at(t.u1, t.v0) += static_cast<float>(g * t.fu * (1.0 - t.fv));
        d_image->at(t.u0, t.v1) += static_cast<float>(g * (1.0 - t.fu) * t.fv);
        d_image->at(t.u1, t.v1) += static_cast<float>(g * t.fu * t.fv);
      }
      if (d_coords) {
        const double i00 = image.at(t.u0, t.v0);
        const double i10 = image.at(t.u1, t.v0);
        const double i01 = image.at(t.u0, t.v1);
        const double i11 = image.at(t.u1, t.v1);
        const double dval_du = (1.0 - t.fv) * (i10 - i00) + t.fv * (i11 - i01);
        const double dval_dv = (1.0 - t.fu) * (i01 - i00) + t.fu * (i11 - i10);
        Pix2& dc = d_coords->at(u, v);
        dc.u += static_cast<float>(g * dval_du);
        dc.v += static_cast<float>(g * dval_dv);
      }
    }
  }
}

ImageU8 occlusion_mask(const ImageU64& id_t, const ImageU64& id_n, const ImageV2& coords,
                       const ImageU8& in_bounds) {
  require_same_shape(id_t, coords, "occlusion_mask");
  require_same_shape(coords, in_bounds, "occlusion_mask");
  ImageU8 mask(coords.width(), coords.height(), 0);
  const int w = id_n.width();
  const int h = id_n.height();
  for (int v = 0; v < coords.height(); ++v) {
    for (int u = 0; u < coords.width(); ++u) {
      if (!in_bounds.at(u, v)) continue;
      const std::uint64_t id = id_t.at(u, v);
      if (id == 0) continue;
      const BilinearTaps t = taps_at(coords.at(u, v), w, h);
      const bool match = id_n.at(t.u0, t.v0) == id || id_n.at(t.u1, t.v0) == id ||
                         id_n.at(t.u0, t.v1) == id || id_n.at(t.u1, t.v1) == id;
      mask.at(u, v) = match ? 1 : 0;
    }
  }
  return mask;
}

WarpResult warp_pair(const ImageF& d_star_t, const ImageF& d_star_n, const ImageU64& id_t,
                     const ImageU64& id_n, const RigidTransform& t_nt, const Intrinsics& k,
                     double eps) {
  require_same_shape(d_star_t, id_t, "warp_pair");
  require_same_shape(d_star_n, id_n, "warp_pair");
  WarpResult r;
  Reprojection rep = reproject(d_star_t, t_nt, k, eps);
  r.d_nt = std::move(rep.d_nt);
  r.sample_coords = std::move(rep.sample_coords);
  r.in_bounds = std::move(rep.in_bounds);
  r.d_tilde = sample_bilinear(d_star_n, r.sample_coords, r.in_bounds);
  r.unoccluded = occlusion_mask(id_t, id_n, r.sample_coords, r.in_bounds);
  return r;
}

Inconsistency inconsistency(const ImageF& d_star_t, const ImageF& d_star_n, const ImageU64& id_t,
                            const ImageU64& id_n, const RigidTransform& t_nt, const Intrinsics& k,
                            double eps) {
  Inconsistency out;
  out.warp = warp_pair(d_star_t, d_star_n, id_t, id_n, t_nt, k, eps);
  out.residual = ImageF(d_star_t.width(), d_star_t.height(), 0.0f);
  for (int v = 0; v < d_star_t.height(); ++v)
    for (int u = 0; u < d_star_t.width(); ++u)
      if (out.warp.unoccluded.at(u, v))
        out.residual.at(u, v) = std::abs(out.warp.d_tilde.at(u, v) - out.warp.d_nt.at(u, v));
  return out;
}

}  // namespace meshcorr
