#include "meshcorr/filters.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace meshcorr {

namespace {

inline int clampi(int x, int lo, int hi) { return x < lo ? lo : (x > hi ? hi : x); }

}  // namespace

ImageF gaussian_blur(const ImageF& image, double sigma) {
  if (sigma <= 0.0) return image;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double w = std::exp(-0.5 * (i * i) / (sigma * sigma));
    kernel[static_cast<std::size_t>(i + radius)] = w;
    sum += w;
  }
  for (double& w : kernel) w /= sum;

  const int w = image.width(), h = image.height();
  ImageF tmp(w, h), out(w, h);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[static_cast<std::size_t>(i + radius)] * image.at(clampi(u + i, 0, w - 1), v);
      tmp.at(u, v) = static_cast<float>(acc);
    }
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[static_cast<std::size_t>(i + radius)] * tmp.at(u, clampi(v + i, 0, h - 1));
      out.at(u, v) = static_cast<float>(acc);
    }
  return out;
}

namespace {

const int kSobelX[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
const int kSobelY[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};

ImageF sobel(const ImageF& image, const int k[3][3]) {
  const int w = image.width(), h = image.height();
  ImageF out(w, h);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      double acc = 0.0;
      for (int dv = -1; dv <= 1; ++dv)
        for (int du = -1; du <= 1; ++du)
          acc += k[dv + 1][du + 1] * image.at(clampi(u + du, 0, w - 1), clampi(v + dv, 0, h - 1));
      out.at(u, v) = static_cast<float>(acc);
    }
  return out;
}

}  // namespace

ImageF sobel_x(const ImageF& image) { return sobel(image, kSobelX); }
ImageF sobel_y(const ImageF& image) { return sobel(image, kSobelY); }

double percentile_nearest_rank(std::vector<float>& values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double rank = std::ceil(q / 100.0 * static_cast<double>(values.size()));
  const std::size_t idx =
      static_cast<std::size_t>(std::clamp<double>(rank - 1.0, 0.0, double(values.size() - 1)));
  return values[idx];
}

ImageU8 canny_edges(const ImageF& image, const ImageU8& valid, const CannyParams& params) {
  require_same_shape(image, valid, "canny_edges");
  const int w = image.width(), h = image.height();

  const ImageF smooth = gaussian_blur(image, params.sigma);
  const ImageF gx = sobel_x(smooth);
  const ImageF gy = sobel_y(smooth);
  ImageF mag(w, h);
  std::vector<float> valid_mags;
  valid_mags.reserve(image.size());
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      const double m = std::hypot(double(gx.at(u, v)), double(gy.at(u, v)));
      mag.at(u, v) = static_cast<float>(m);
      if (valid.at(u, v)) valid_mags.push_back(static_cast<float>(m));
    }
  if (valid_mags.empty()) return ImageU8(w, h, 0);

  const double high = percentile_nearest_rank(valid_mags, params.high_percentile);
  const double low = percentile_nearest_rank(valid_mags, params.low_percentile);

  // non-maximum suppression over 4 quantized directions
  ImageU8 nms(w, h, 0);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      const double m = mag.at(u, v);
      if (m <= 0.0) continue;
      const double dx = gx.at(u, v), dy = gy.at(u, v);
      const double angle = std::atan2(dy, dx);  // [-pi, pi]
      // bin to 0, 45, 90, 135 degrees
      double deg = angle * 180.0 / 3.14159265358979323846;
      if (deg < 0) deg += 180.0;
      int du, dv;
      if (deg < 22.5 || deg >= 157.5) {
        du = 1; dv = 0;
      } else if (deg < 67.5) {
        du = 1; dv = 1;
      } else if (deg < 112.5) {
        du = 0; dv = 1;
      } else {
        du = -1; dv = 1;
      }
      const double m1 = mag.at(clampi(u + du, 0, w - 1), clampi(v + dv, 0, h - 1));
      const double m2 = mag.at(clampi(u - du, 0, w - 1), clampi(v - dv, 0, h - 1));
      if (m >= m1 && m >= m2) nms.at(u, v) = 1;
    }

  // hysteresis: strong seeds, grow through weak (8-connected)
  ImageU8 edges(w, h, 0);
  std::vector<std::pair<int, int>> stack;
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u)
      if (nms.at(u, v) && mag.at(u, v) >= high && high > 0.0) {
        edges.at(u, v) = 1;
        stack.emplace_back(u, v);
      }
  while (!stack.empty()) {
    const auto [u, v] = stack.back();
    stack.pop_back();
    for (int dv = -1; dv <= 1; ++dv)
      for (int du = -1; du <= 1; ++du) {
        if (du == 0 && dv == 0) continue;
        const int nu = u + du, nv = v + dv;
        if (nu < 0 || nu >= w || nv < 0 || nv >= h) continue;
        if (edges.at(nu, nv)) continue;
        if (nms.at(nu, nv) && mag.at(nu, nv) >= low && low > 0.0) {
          edges.at(nu, nv) = 1;
          stack.emplace_back(nu, nv);
        }
      }
  }
  return edges;
}

namespace {

// 1D squared distance transform (Felzenszwalb & Huttenlocher).
void dt_1d(const double* f, int n, double* out, int* v_buf, double* z_buf) {
  int k = 0;
  v_buf[0] = 0;
  z_buf[0] = -std::numeric_limits<double>::infinity();
  z_buf[1] = std::numeric_limits<double>::infinity();
  for (int q = 1; q < n; ++q) {
    if (f[q] == std::numeric_limits<double>::infinity()) continue;
    double s;
    while (true) {
      const int vk = v_buf[k];
      if (f[vk] == std::numeric_limits<double>::infinity()) {
        // drop parabolas rooted at infinity
        if (k == 0) {
          v_buf[0] = q;
          z_buf[0] = -std::numeric_limits<double>::infinity();
          z_buf[1] = std::numeric_limits<double>::infinity();
          s = std::numeric_limits<double>::quiet_NaN();
          break;
        }
        --k;
        continue;
      }
      s = ((f[q] + q * q) - (f[vk] + vk * vk)) / (2.0 * q - 2.0 * vk);
      if (s <= z_buf[k]) {
        --k;
        continue;
      }
      break;
    }
    if (!std::isnan(s)) {
      ++k;
      v_buf[k] = q;
      z_buf[k] = s;
      z_buf[k + 1] = std::numeric_limits<double>::infinity();
    }
  }
  int kk = 0;
  for (int q = 0; q < n; ++q) {
    while (z_buf[kk + 1] < q) ++kk;
    const int vk = v_buf[kk];
    if (f[vk] == std::numeric_limits<double>::infinity())
      out[q] = std::numeric_limits<double>::infinity();
    else
      out[q] = (q - vk) * double(q - vk) + f[vk];
  }
}

}  // namespace

ImageF euclidean_distance_transform(const ImageU8& set_pixels) {
  const int w = set_pixels.width(), h = set_pixels.height();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> sq(static_cast<std::size_t>(w) * h);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u)
      sq[static_cast<std::size_t>(v) * w + u] = set_pixels.at(u, v) ? 0.0 : inf;

  const int n_max = std::max(w, h);
  std::vector<double> f(n_max), dd(n_max), z(n_max + 1);
  std::vector<int> vb(n_max);

  // columns
  for (int u = 0; u < w; ++u) {
    for (int v = 0; v < h; ++v) f[v] = sq[static_cast<std::size_t>(v) * w + u];
    dt_1d(f.data(), h, dd.data(), vb.data(), z.data());
    for (int v = 0; v < h; ++v) sq[static_cast<std::size_t>(v) * w + u] = dd[v];
  }
  // rows
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) f[u] = sq[static_cast<std::size_t>(v) * w + u];
    dt_1d(f.data(), w, dd.data(), vb.data(), z.data());
    for (int u = 0; u < w; ++u) sq[static_cast<std::size_t>(v) * w + u] = dd[u];
  }

  ImageF out(w, h);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      const double d = sq[static_cast<std::size_t>(v) * w + u];
      out.at(u, v) = std::isinf(d) ? std::numeric_limits<float>::infinity()
                                   : static_cast<float>(std::sqrt(d));
    }
  return out;
}

}  // namespace meshcorr
