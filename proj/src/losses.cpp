#include "meshcorr/losses.hpp"

#include <algorithm>
#include <cmath>

namespace meshcorr {

double berhu(double x, double c) {
  const double a = std::abs(x);
  return a <= c ? a : (x * x + c * c) / (2.0 * c);
}

double berhu_derivative(double x, double c) {
  const double a = std::abs(x);
  if (a <= c) return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
  return x / c;
}

double berhu_threshold(const ImageF& g_star, const ImageF& g, const ImageU8& valid, double factor) {
  require_same_shape(g_star, g, "berhu_threshold");
  require_same_shape(g_star, valid, "berhu_threshold");
  double max_abs = 0.0;
  for (int v = 0; v < g.height(); ++v)
    for (int u = 0; u < g.width(); ++u)
      if (valid.at(u, v))
        max_abs = std::max(max_abs, std::abs(double(g_star.at(u, v)) - double(g.at(u, v))));
  return max_abs > 0.0 ? factor * max_abs : 1.0;
}

ImageF edge_weight_map(const ImageF& g, const ImageU8& valid, const WeightMapParams& params) {
  require_same_shape(g, valid, "edge_weight_map");
  const int w = g.width(), h = g.height();
  const ImageU8 edges = canny_edges(g, valid, params.canny);

  bool any_edge = false;
  for (int v = 0; v < h && !any_edge; ++v)
    for (int u = 0; u < w; ++u)
      if (edges.at(u, v)) {
        any_edge = true;
        break;
      }
  if (!any_edge) return ImageF(w, h, static_cast<float>(params.w_min));

  const ImageF edt = euclidean_distance_transform(edges);
  ImageF logd(w, h);
  double max_d = 0.0;
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      const double d = std::log1p(double(edt.at(u, v)));
      logd.at(u, v) = static_cast<float>(d);
      max_d = std::max(max_d, d);
    }
  if (max_d == 0.0) return ImageF(w, h, static_cast<float>(params.w_max));

  ImageF out(w, h);
  const double span = params.w_max - params.w_min;
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      const double d = logd.at(u, v);
      out.at(u, v) = static_cast<float>(span * (1.0 - d / max_d) + params.w_min);
    }
  return out;
}

ScalarLoss data_loss(const ImageF& g_star, const ImageF& g, const ImageF& w, const ImageU8& valid,
                     double c) {
  require_same_shape(g_star, g, "data_loss");
  require_same_shape(g_star, w, "data_loss");
  require_same_shape(g_star, valid, "data_loss");
  ScalarLoss out;
  out.grad = ImageF(g.width(), g.height(), 0.0f);
  double acc = 0.0;
  for (int v = 0; v < g.height(); ++v)
    for (int u = 0; u < g.width(); ++u) {
      if (!valid.at(u, v)) continue;
      const double e = double(g_star.at(u, v)) - double(g.at(u, v));
      const double weight = w.at(u, v);
      acc += weight * berhu(e, c);
      out.grad.at(u, v) = static_cast<float>(weight * berhu_derivative(e, c));
    }
  out.value = acc;
  return out;
}

namespace {

const int kSx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
const int kSy[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};

inline int clampi(int x, int lo, int hi) { return x < lo ? lo : (x > hi ? hi : x); }

inline double sign0(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

ScalarLoss gradient_loss(const ImageF& g_star, const ImageF& g, const ImageF& w,
                         const ImageU8& valid) {
  require_same_shape(g_star, g, "gradient_loss");
  require_same_shape(g_star, w, "gradient_loss");
  require_same_shape(g_star, valid, "gradient_loss");
  const int width = g.width(), height = g.height();

  ImageF e(width, height);
  for (int v = 0; v < height; ++v)
    for (int u = 0; u < width; ++u)
      e.at(u, v) = g_star.at(u, v) - g.at(u, v);

  ScalarLoss out;
  out.grad = ImageF(width, height, 0.0f);
  double acc = 0.0;
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      if (!valid.at(u, v)) continue;
      bool stencil_valid = true;
      double sx = 0.0, sy = 0.0;
      for (int dv = -1; dv <= 1 && stencil_valid; ++dv)
        for (int du = -1; du <= 1; ++du) {
          const int nu = clampi(u + du, 0, width - 1);
          const int nv = clampi(v + dv, 0, height - 1);
          if (!valid.at(nu, nv)) {
            stencil_valid = false;
            break;
          }
          sx += kSx[dv + 1][du + 1] * double(e.at(nu, nv));
          sy += kSy[dv + 1][du + 1] * double(e.at(nu, nv));
        }
      if (!stencil_valid) continue;
      const double weight = w.at(u, v);
      acc += 0.5 * weight * (std::abs(sx) + std::abs(sy));
      const double cx = 0.5 * weight * sign0(sx);
      const double cy = 0.5 * weight * sign0(sy);
      if (cx == 0.0 && cy == 0.0) continue;
      for (int dv = -1; dv <= 1; ++dv)
        for (int du = -1; du <= 1; ++du) {
          const int nu = clampi(u + du, 0, width - 1);
          const int nv = clampi(v + dv, 0, height - 1);
          out.grad.at(nu, nv) +=
              static_cast<float>(cx * kSx[dv + 1][du + 1] + cy * kSy[dv + 1][du + 1]);
        }
    }
  }
  out.value = acc;
  return out;
}

GcResult gc_loss(const GcView& target, std::span<const GcView> nearby, const Intrinsics& k,
                 const GcOptions& options) {
  const ImageF& d_t = *target.d_star;
  const int w = d_t.width(), h = d_t.height();
  GcResult out;
  out.grad_target = ImageF(w, h, 0.0f);
  out.grad_nearby.reserve(nearby.size());

  const RigidTransform pose_t_inv = invert(target.pose);
  const double u_lim = k.width - 1;
  const double v_lim = k.height - 1;

  for (const GcView& view : nearby) {
    const ImageF& d_n = *view.d_star;
    require_same_shape(d_t, d_n, "gc_loss");
    ImageF grad_n(w, h, 0.0f);

    const RigidTransform t_nt = compose(view.pose, pose_t_inv);
    const HomographyLift f = HomographyLift::from_transform(k, t_nt);

    for (int v = 0; v < h; ++v) {
      for (int u = 0; u < w; ++u) {
        const double d = d_t.at(u, v);
        if (d <= 0.0) continue;
        const std::uint64_t id = target.ids->at(u, v);
        if (id == 0) continue;

        WarpedPointJacobian jac;
        const WarpedPoint p =
            forward_warp_point_with_jacobian({double(u), double(v), 1.0, d}, f, options.eps, &jac);
        if (!p.front_of_camera || p.pixel.x < 0.0 || p.pixel.x > u_lim || p.pixel.y < 0.0 ||
            p.pixel.y > v_lim)
          continue;

        const int u0 = clampi(static_cast<int>(std::floor(p.pixel.x)), 0, w - 1);
        const int v0 = clampi(static_cast<int>(std::floor(p.pixel.y)), 0, h - 1);
        const int u1 = std::min(u0 + 1, w - 1);
        const int v1 = std::min(v0 + 1, h - 1);
        const ImageU64& ids_n = *view.ids;
        if (ids_n.at(u0, v0) != id && ids_n.at(u1, v0) != id && ids_n.at(u0, v1) != id &&
            ids_n.at(u1, v1) != id)
          continue;

        const double fu = p.pixel.x - u0;
        const double fv = p.pixel.y - v0;
        const double i00 = d_n.at(u0, v0);
        const double i10 = d_n.at(u1, v0);
        const double i01 = d_n.at(u0, v1);
        const double i11 = d_n.at(u1, v1);
        const double d_tilde =
            (1.0 - fv) * ((1.0 - fu) * i00 + fu * i10) + fv * ((1.0 - fu) * i01 + fu * i11);

        const double r = d_tilde - p.inverse_depth;
        out.value += std::abs(r);
        ++out.unoccluded_count;
        const double s = sign0(r);
        if (s == 0.0) continue;

        if (options.grad_to_nearby) {
          grad_n.at(u0, v0) += static_cast<float>(s * (1.0 - fu) * (1.0 - fv));
          grad_n.at(u1, v0) += static_cast<float>(s * fu * (1.0 - fv));
          grad_n.at(u0, v1) += static_cast<float>(s * (1.0 - fu) * fv);
          grad_n.at(u1, v1) += static_cast<float>(s * fu * fv);
        }

        const double dtilde_du = (1.0 - fv) * (i10 - i00) + fv * (i11 - i01);
        const double dtilde_dv = (1.0 - fu) * (i01 - i00) + fu * (i11 - i10);
        const double dr_dd = dtilde_du * jac.dpixel_dd.x + dtilde_dv * jac.dpixel_dd.y -
                             jac.dinverse_depth_dd;
        out.grad_target.at(u, v) += static_cast<float>(s * dr_dd);
      }
    }
    out.grad_nearby.push_back(std::move(grad_n));
  }
  return out;
}

double l2_reg(std::span<const float> params) {
  double acc = 0.0;
  for (float p : params) acc += double(p) * double(p);
  return acc;
}

LossReport combine_losses(double data, double grad, double gc, double reg,
                          const LossWeights& weights) {
  LossReport r;
  r.data = data;
  r.grad = grad;
  r.gc = gc;
  r.reg = reg;
  r.total = weights.lambda_data * data + weights.lambda_grad * grad + weights.lambda_gc * gc +
            weights.lambda_reg * reg;
  return r;
}

}  // namespace meshcorr
