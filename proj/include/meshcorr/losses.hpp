#pragma once

#include <span>
#include <vector>

#include "meshcorr/camera.hpp"
#include "meshcorr/filters.hpp"
#include "meshcorr/image.hpp"

namespace meshcorr {

struct LossWeights {
  double lambda_data = 1.0;
  double lambda_grad = 0.1;
  double lambda_gc = 0.1;
  double lambda_reg = 1e-6;
};

// Reverse Huber: |x| up to c, quadratic beyond; C1 at |x| = c.
double berhu(double x, double c);
double berhu_derivative(double x, double c);  // sign(0) := 0

// Per-image threshold c = factor * max |g_star - g| over valid pixels;
// 1 when the maximum is zero.
double berhu_threshold(const ImageF& g_star, const ImageF& g, const ImageU8& valid,
                       double factor = 0.2);

struct WeightMapParams {
  double w_min = 0.1;
  double w_max = 5.0;
  CannyParams canny;
};

// W(p) = (w_max - w_min) * (1 - ln(1 + EDT(p)) / max ln(1 + EDT)) + w_min,
// EDT measured to the Canny edges of the label. No edges: W = w_min
// everywhere. All edges: W = w_max everywhere.
ImageF edge_weight_map(const ImageF& g, const ImageU8& valid, const WeightMapParams& params = {});

struct ScalarLoss {
  double value = 0.0;
  ImageF grad;  // d value / d g_star
};

// sum_{p in V} W(p) * berHu(g_star(p) - g(p), c). Throws on shape mismatch.
ScalarLoss data_loss(const ImageF& g_star, const ImageF& g, const ImageF& w, const ImageU8& valid,
                     double c);

// 1/2 sum_{p in V'} W(p) * (|Sx e| + |Sy e|), e = g_star - g, Sobel with
// replicate borders; V' excludes pixels whose stencil touches an invalid
// pixel.
ScalarLoss gradient_loss(const ImageF& g_star, const ImageF& g, const ImageF& w,
                         const ImageU8& valid);

struct GcView {
  const ImageF* d_star = nullptr;  // corrected inverse depth
  const ImageU64* ids = nullptr;   // reference (high-quality) triangle ids
  RigidTransform pose;             // world -> camera
};

struct GcOptions {
  double eps = kWarpEpsilon;
  bool grad_to_nearby = true;  // propagate into nearby views' predictions
};

struct GcResult {
  double value = 0.0;
  std::size_t unoccluded_count = 0;
  ImageF grad_target;
  std::vector<ImageF> grad_nearby;  // one per nearby view
};

// sum over nearby views n and pixels in U_n of |warped(d*_n) - d*_{n,t}|.
// Gradients flow through the reprojection and sampling chain into the
// target prediction, and into nearby predictions when enabled.
GcResult gc_loss(const GcView& target, std::span<const GcView> nearby, const Intrinsics& k,
                 const GcOptions& options = {});

double l2_reg(std::span<const float> params);

struct LossReport {
  double total = 0.0;
  double data = 0.0;
  double grad = 0.0;
  double gc = 0.0;
  double reg = 0.0;
};

LossReport combine_losses(double data, double grad, double gc, double reg,
                          const LossWeights& weights);

}  // namespace meshcorr
