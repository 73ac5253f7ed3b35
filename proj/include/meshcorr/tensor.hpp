#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace meshcorr {

// CHW float tensor used by the network. T is float in production and double
// in gradient-check builds.
template <typename T>
struct Tensor {
  int c = 0, h = 0, w = 0;
  std::vector<T> v;

  Tensor() = default;
  Tensor(int c_, int h_, int w_, T fill = T(0))
      : c(c_), h(h_), w(w_), v(static_cast<std::size_t>(c_) * h_ * w_, fill) {}

  std::size_t numel() const { return v.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }

  T* channel(int ci) { return v.data() + static_cast<std::size_t>(ci) * plane(); }
  const T* channel(int ci) const { return v.data() + static_cast<std::size_t>(ci) * plane(); }

  T& at(int ci, int y, int x) { return v[(static_cast<std::size_t>(ci) * h + y) * w + x]; }
  const T& at(int ci, int y, int x) const {
    return v[(static_cast<std::size_t>(ci) * h + y) * w + x];
  }

  bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }

  void zero() { std::fill(v.begin(), v.end(), T(0)); }
};

// ---------------------------------------------------------------------------
// Convolution with replicate padding k/2.
//
// Two execution paths: a row-blocked direct scheme for large planes, and a
// channel-vectorized im2col GEMM for small planes (where rows are too short
// to vectorize).

inline int conv_out_dim(int in, int k, int stride) { return (in + 2 * (k / 2) - k) / stride + 1; }

template <typename T>
struct ConvWork {
  std::vector<T> pad;    // replicate-padded input planes
  std::vector<T> dpad;   // padded gradient scratch
  std::vector<T> col;    // im2col, pixel-major
  std::vector<T> wt;     // weights transposed to [k][oc]
  std::vector<T> gemm;   // pixel-major output / dy
};

inline constexpr int kSmallPlaneGemm = 2048;

namespace detail {

// Reduction loops use fixed 16-wide partial-sum lanes: the lane update is an
// elementwise loop the vectorizer handles without reassociating the sum, and
// the final fold has a fixed order (deterministic results).
inline constexpr int kDotLanes = 16;

template <typename T>
void ensure(std::vector<T>& v, std::size_t n) {
  if (v.size() < n) v.resize(n);
}

// replicate-pad one channel into dst (ph x pw)
template <typename T>
void pad_channel(const T* src, int h, int w, int pad, T* dst) {
  const int pw = w + 2 * pad;
  for (int y = 0; y < h + 2 * pad; ++y) {
    const int sy = std::clamp(y - pad, 0, h - 1);
    const T* s = src + static_cast<std::size_t>(sy) * w;
    T* d = dst + static_cast<std::size_t>(y) * pw;
    for (int x = 0; x < pw; ++x) d[x] = s[std::clamp(x - pad, 0, w - 1)];
  }
}

// col[px][K] with K = in_c*k*k, px = oh*ow (stride 1 only)
template <typename T>
void im2col_pixel_major(const T* padded, int in_c, int ph, int pw, int k, int oh, int ow, T* col) {
  const std::size_t K = static_cast<std::size_t>(in_c) * k * k;
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      T* dst = col + (static_cast<std::size_t>(oy) * ow + ox) * K;
      std::size_t idx = 0;
      for (int ic = 0; ic < in_c; ++ic) {
        const T* plane = padded + static_cast<std::size_t>(ic) * ph * pw;
        for (int ky = 0; ky < k; ++ky) {
          const T* row = plane + static_cast<std::size_t>(oy + ky) * pw + ox;
          for (int kx = 0; kx < k; ++kx) dst[idx++] = row[kx];
        }
      }
    }
  }
}

// Inner GEMM kernels kept out-of-line: gcc vectorizes them reliably as
// standalone restrict-qualified loops but not inside the surrounding nests.
template <typename T>
[[gnu::noinline]] void kernel_out4(T* __restrict o0, T* __restrict o1, T* __restrict o2,
                                   T* __restrict o3, const T* __restrict w, T v0, T v1, T v2, T v3,
                                   int n) {
  for (int i = 0; i < n; ++i) {
    const T wv = w[i];
    o0[i] += v0 * wv;
    o1[i] += v1 * wv;
    o2[i] += v2 * wv;
    o3[i] += v3 * wv;
  }
}

template <typename T>
[[gnu::noinline]] void kernel_axpy(T* __restrict o, const T* __restrict w, T v, int n) {
  for (int i = 0; i < n; ++i) o[i] += v * w[i];
}

template <typename T>
[[gnu::noinline]] void kernel_acc4(T* __restrict w, const T* __restrict d0, const T* __restrict d1,
                                   const T* __restrict d2, const T* __restrict d3, T v0, T v1,
                                   T v2, T v3, int n) {
  for (int i = 0; i < n; ++i)
    w[i] += v0 * d0[i] + v1 * d1[i] + v2 * d2[i] + v3 * d3[i];
}

template <typename T>
[[gnu::noinline]] T kernel_dot(const T* __restrict a, const T* __restrict b, int n) {
  T lanes[kDotLanes] = {};
  int i = 0;
  for (; i + kDotLanes <= n; i += kDotLanes)
    for (int l = 0; l < kDotLanes; ++l) lanes[l] += a[i + l] * b[i + l];
  T acc = T(0);
  for (int l = 0; l < kDotLanes; ++l) acc += lanes[l];
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

// 8 consecutive wt rows (stride wstride) accumulate against 4 dy rows:
// w[j][oc] += sum_p c[j*4+p] * d_p[oc]
template <typename T>
[[gnu::noinline]] void kernel_acc_8x4(T* __restrict wbase, std::size_t wstride,
                                      const T* __restrict cvals, const T* __restrict d0,
                                      const T* __restrict d1, const T* __restrict d2,
                                      const T* __restrict d3, int n) {
  for (int j = 0; j < 8; ++j) {
    T* __restrict w = wbase + static_cast<std::size_t>(j) * wstride;
    const T c0 = cvals[j * 4 + 0], c1 = cvals[j * 4 + 1], c2 = cvals[j * 4 + 2],
            c3 = cvals[j * 4 + 3];
    for (int i = 0; i < n; ++i) w[i] += c0 * d0[i] + c1 * d1[i] + c2 * d2[i] + c3 * d3[i];
  }
}

template <typename T>
[[gnu::noinline]] void kernel_dot4_lanes(const T* __restrict w, const T* __restrict d0,
                                         const T* __restrict d1, const T* __restrict d2,
                                         const T* __restrict d3, T* __restrict out, int n) {
  T l0[kDotLanes] = {}, l1[kDotLanes] = {}, l2[kDotLanes] = {}, l3[kDotLanes] = {};
  int i = 0;
  for (; i + kDotLanes <= n; i += kDotLanes) {
    for (int l = 0; l < kDotLanes; ++l) {
      const T wv = w[i + l];
      l0[l] += wv * d0[i + l];
      l1[l] += wv * d1[i + l];
      l2[l] += wv * d2[i + l];
      l3[l] += wv * d3[i + l];
    }
  }
  T a0 = T(0), a1 = T(0), a2 = T(0), a3 = T(0);
  for (int l = 0; l < kDotLanes; ++l) {
    a0 += l0[l];
    a1 += l1[l];
    a2 += l2[l];
    a3 += l3[l];
  }
  for (; i < n; ++i) {
    const T wv = w[i];
    a0 += wv * d0[i];
    a1 += wv * d1[i];
    a2 += wv * d2[i];
    a3 += wv * d3[i];
  }
  out[0] = a0;
  out[1] = a1;
  out[2] = a2;
  out[3] = a3;
}

// out[j*4+p] = dot(w_j, d_p) for 8 wt rows x 4 dy rows
template <typename T>
[[gnu::noinline]] void kernel_dot_8x4(const T* __restrict wbase, std::size_t wstride,
                                      const T* __restrict d0, const T* __restrict d1,
                                      const T* __restrict d2, const T* __restrict d3,
                                      T* __restrict out, int n) {
  for (int j = 0; j < 8; ++j)
    kernel_dot4_lanes(wbase + static_cast<std::size_t>(j) * wstride, d0, d1, d2, d3, out + j * 4,
                      n);
}

// dst[b][a] = src[a][b], 32x32 tiles
template <typename T>
void transpose_tiled(const T* src, int a_dim, int b_dim, T* dst) {
  constexpr int TILE = 32;
  for (int a0 = 0; a0 < a_dim; a0 += TILE)
    for (int b0 = 0; b0 < b_dim; b0 += TILE) {
      const int a1 = std::min(a0 + TILE, a_dim);
      const int b1 = std::min(b0 + TILE, b_dim);
      for (int a = a0; a < a1; ++a)
        for (int b = b0; b < b1; ++b)
          dst[static_cast<std::size_t>(b) * a_dim + a] = src[static_cast<std::size_t>(a) * b_dim + b];
    }
}

// dst[b][a] += src[a][b]
template <typename T>
void transpose_add_tiled(const T* src, int a_dim, int b_dim, T* dst) {
  constexpr int TILE = 32;
  for (int a0 = 0; a0 < a_dim; a0 += TILE)
    for (int b0 = 0; b0 < b_dim; b0 += TILE) {
      const int a1 = std::min(a0 + TILE, a_dim);
      const int b1 = std::min(b0 + TILE, b_dim);
      for (int a = a0; a < a1; ++a)
        for (int b = b0; b < b1; ++b)
          dst[static_cast<std::size_t>(b) * a_dim + a] += src[static_cast<std::size_t>(a) * b_dim + b];
    }
}

// col_k[kk][px], kk-major (stride-1 only)
template <typename T>
void im2col_k_major(const T* padded, int in_c, int ph, int pw, int k, int oh, int ow, T* col) {
  std::size_t kk = 0;
  for (int ic = 0; ic < in_c; ++ic) {
    const T* plane = padded + static_cast<std::size_t>(ic) * ph * pw;
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx, ++kk) {
        T* dst = col + kk * static_cast<std::size_t>(oh) * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const T* row = plane + static_cast<std::size_t>(oy + ky) * pw + kx;
          T* d = dst + static_cast<std::size_t>(oy) * ow;
          for (int ox = 0; ox < ow; ++ox) d[ox] = row[ox];
        }
      }
  }
}

}  // namespace detail

// y[oc] = bias[oc] + sum_{ic,ky,kx} w[oc][ic][ky][kx] * xpad[ic][oy*s+ky][ox*s+kx]
template <typename T>
void conv2d_forward(const Tensor<T>& x, const T* weights, const T* bias, int out_c, int k,
                    int stride, Tensor<T>& y, ConvWork<T>& ws) {
  const int in_c = x.c;
  const int pad = k / 2;
  const int oh = conv_out_dim(x.h, k, stride);
  const int ow = conv_out_dim(x.w, k, stride);
  if (y.c != out_c || y.h != oh || y.w != ow) y = Tensor<T>(out_c, oh, ow);
  const int ph = x.h + 2 * pad, pw = x.w + 2 * pad;
  detail::ensure(ws.pad, static_cast<std::size_t>(in_c) * ph * pw);
  for (int ic = 0; ic < in_c; ++ic)
    detail::pad_channel(x.channel(ic), x.h, x.w, pad, ws.pad.data() + static_cast<std::size_t>(ic) * ph * pw);
  const T* xp = ws.pad.data();
  const std::size_t ksq = static_cast<std::size_t>(k) * k;
  const std::size_t K = static_cast<std::size_t>(in_c) * ksq;
  const std::size_t plane = static_cast<std::size_t>(oh) * ow;

  if (stride == 1 && static_cast<int>(plane) <= kSmallPlaneGemm) {
    // pixel-major GEMM: out_t[px][oc] += col[px][kk] * wt[kk][oc]
    detail::ensure(ws.col, plane * K);
    detail::ensure(ws.wt, K * static_cast<std::size_t>(out_c));
    detail::ensure(ws.gemm, plane * static_cast<std::size_t>(out_c));
    detail::im2col_pixel_major(xp, in_c, ph, pw, k, oh, ow, ws.col.data());
    detail::transpose_tiled(weights, out_c, static_cast<int>(K), ws.wt.data());
    std::size_t px = 0;
    for (; px + 4 <= plane; px += 4) {
      T* __restrict o0 = ws.gemm.data() + (px + 0) * out_c;
      T* __restrict o1 = ws.gemm.data() + (px + 1) * out_c;
      T* __restrict o2 = ws.gemm.data() + (px + 2) * out_c;
      T* __restrict o3 = ws.gemm.data() + (px + 3) * out_c;
      for (int oc = 0; oc < out_c; ++oc) o0[oc] = o1[oc] = o2[oc] = o3[oc] = bias[oc];
      const T* c0 = ws.col.data() + (px + 0) * K;
      const T* c1 = ws.col.data() + (px + 1) * K;
      const T* c2 = ws.col.data() + (px + 2) * K;
      const T* c3 = ws.col.data() + (px + 3) * K;
      for (std::size_t kk = 0; kk < K; ++kk)
        detail::kernel_out4(o0, o1, o2, o3, ws.wt.data() + kk * out_c, c0[kk], c1[kk], c2[kk],
                            c3[kk], out_c);
    }
    for (; px < plane; ++px) {
      T* out_row = ws.gemm.data() + px * out_c;
      for (int oc = 0; oc < out_c; ++oc) out_row[oc] = bias[oc];
      const T* col_row = ws.col.data() + px * K;
      for (std::size_t kk = 0; kk < K; ++kk)
        detail::kernel_axpy(out_row, ws.wt.data() + kk * out_c, col_row[kk], out_c);
    }
    detail::transpose_tiled(ws.gemm.data(), static_cast<int>(plane), out_c, y.v.data());
    return;
  }

  // row-blocked direct scheme
  int ocb = 0;
  for (; ocb + 4 <= out_c; ocb += 4) {
    for (int oy = 0; oy < oh; ++oy) {
      T* r0 = y.channel(ocb + 0) + static_cast<std::size_t>(oy) * ow;
      T* r1 = y.channel(ocb + 1) + static_cast<std::size_t>(oy) * ow;
      T* r2 = y.channel(ocb + 2) + static_cast<std::size_t>(oy) * ow;
      T* r3 = y.channel(ocb + 3) + static_cast<std::size_t>(oy) * ow;
      for (int ox = 0; ox < ow; ++ox) {
        r0[ox] = bias[ocb + 0];
        r1[ox] = bias[ocb + 1];
        r2[ox] = bias[ocb + 2];
        r3[ox] = bias[ocb + 3];
      }
      for (int ic = 0; ic < in_c; ++ic) {
        const T* plane_in = xp + static_cast<std::size_t>(ic) * ph * pw;
        for (int ky = 0; ky < k; ++ky) {
          const T* in_row = plane_in + static_cast<std::size_t>(oy * stride + ky) * pw;
          const T* w0 = weights + ((static_cast<std::size_t>(ocb + 0) * in_c + ic) * ksq) + ky * k;
          const T* w1 = weights + ((static_cast<std::size_t>(ocb + 1) * in_c + ic) * ksq) + ky * k;
          const T* w2 = weights + ((static_cast<std::size_t>(ocb + 2) * in_c + ic) * ksq) + ky * k;
          const T* w3 = weights + ((static_cast<std::size_t>(ocb + 3) * in_c + ic) * ksq) + ky * k;
          for (int kx = 0; kx < k; ++kx) {
            const T a = w0[kx], b = w1[kx], c = w2[kx], d = w3[kx];
            const T* __restrict p = in_row + kx;
            if (stride == 1) {
              for (int ox = 0; ox < ow; ++ox) {
                const T val = p[ox];
                r0[ox] += a * val;
                r1[ox] += b * val;
                r2[ox] += c * val;
                r3[ox] += d * val;
              }
            } else {
              for (int ox = 0; ox < ow; ++ox) {
                const T val = p[ox * stride];
                r0[ox] += a * val;
                r1[ox] += b * val;
                r2[ox] += c * val;
                r3[ox] += d * val;
              }
            }
          }
        }
      }
    }
  }
  for (; ocb < out_c; ++ocb) {
    for (int oy = 0; oy < oh; ++oy) {
      T* r0 = y.channel(ocb) + static_cast<std::size_t>(oy) * ow;
      for (int ox = 0; ox < ow; ++ox) r0[ox] = bias[ocb];
      for (int ic = 0; ic < in_c; ++ic) {
        const T* plane_in = xp + static_cast<std::size_t>(ic) * ph * pw;
        for (int ky = 0; ky < k; ++ky) {
          const T* in_row = plane_in + static_cast<std::size_t>(oy * stride + ky) * pw;
          const T* wr = weights + ((static_cast<std::size_t>(ocb) * in_c + ic) * ksq) + ky * k;
          for (int kx = 0; kx < k; ++kx) {
            const T a = wr[kx];
            const T* p = in_row + kx;
            for (int ox = 0; ox < ow; ++ox) r0[ox] += a * p[ox * stride];
          }
        }
      }
    }
  }
}

// Accumulates dw/db; writes dx (if non-null). x must be the forward input.
template <typename T>
void conv2d_backward(const Tensor<T>& x, const T* weights, int out_c, int k, int stride,
                     const Tensor<T>& dy, Tensor<T>* dx, T* dweights, T* dbias, ConvWork<T>& ws) {
  const int in_c = x.c;
  const int pad = k / 2;
  const int oh = dy.h, ow = dy.w;
  const std::size_t ksq = static_cast<std::size_t>(k) * k;
  const std::size_t K = static_cast<std::size_t>(in_c) * ksq;
  const std::size_t plane = static_cast<std::size_t>(oh) * ow;
  const int ph = x.h + 2 * pad, pw = x.w + 2 * pad;

  for (int oc = 0; oc < out_c; ++oc) {
    T acc = T(0);
    const T* dyc = dy.channel(oc);
    for (std::size_t i = 0; i < plane; ++i) acc += dyc[i];
    dbias[oc] += acc;
  }

  detail::ensure(ws.pad, static_cast<std::size_t>(in_c) * ph * pw);
  for (int ic = 0; ic < in_c; ++ic)
    detail::pad_channel(x.channel(ic), x.h, x.w, pad, ws.pad.data() + static_cast<std::size_t>(ic) * ph * pw);
  const T* xp = ws.pad.data();

  if (stride == 1 && static_cast<int>(plane) <= kSmallPlaneGemm) {
    detail::ensure(ws.col, plane * K);
    detail::ensure(ws.gemm, plane * static_cast<std::size_t>(out_c));
    detail::ensure(ws.wt, K * static_cast<std::size_t>(out_c));
    detail::im2col_k_major(xp, in_c, ph, pw, k, oh, ow, ws.col.data());
    // dy transposed to pixel-major
    detail::transpose_tiled(dy.v.data(), out_c, static_cast<int>(plane), ws.gemm.data());

    // dW_t[kk][oc] = sum_px col_k[kk][px] * dy_t[px][oc]; the wt row stays
    // cached while dy_t streams
    std::fill(ws.wt.begin(), ws.wt.begin() + static_cast<std::ptrdiff_t>(K * out_c), T(0));
    {
      T cvals[32];
      std::size_t kk = 0;
      for (; kk + 8 <= K; kk += 8) {
        T* wbase = ws.wt.data() + kk * out_c;
        std::size_t px = 0;
        for (; px + 4 <= plane; px += 4) {
          for (int j = 0; j < 8; ++j)
            for (int p = 0; p < 4; ++p)
              cvals[j * 4 + p] = ws.col[(kk + j) * plane + px + p];
          detail::kernel_acc_8x4(wbase, static_cast<std::size_t>(out_c), cvals,
                                 ws.gemm.data() + (px + 0) * out_c,
                                 ws.gemm.data() + (px + 1) * out_c,
                                 ws.gemm.data() + (px + 2) * out_c,
                                 ws.gemm.data() + (px + 3) * out_c, out_c);
        }
        for (; px < plane; ++px)
          for (int j = 0; j < 8; ++j)
            detail::kernel_axpy(wbase + static_cast<std::size_t>(j) * out_c,
                                ws.gemm.data() + px * out_c, ws.col[(kk + j) * plane + px], out_c);
      }
      for (; kk < K; ++kk) {
        T* wrow = ws.wt.data() + kk * out_c;
        const T* ck = ws.col.data() + kk * plane;
        for (std::size_t px = 0; px < plane; ++px)
          detail::kernel_axpy(wrow, ws.gemm.data() + px * out_c, ck[px], out_c);
      }
    }
    detail::transpose_add_tiled(ws.wt.data(), static_cast<int>(K), out_c, dweights);

    if (!dx) return;
    // dcol_k[kk][px] = sum_oc dy_t[px][oc] * w_t[kk][oc]
    detail::transpose_tiled(weights, out_c, static_cast<int>(K), ws.wt.data());
    {
      T acc[32];
      std::size_t kk = 0;
      for (; kk + 8 <= K; kk += 8) {
        const T* wbase = ws.wt.data() + kk * out_c;
        std::size_t px = 0;
        for (; px + 4 <= plane; px += 4) {
          detail::kernel_dot_8x4(wbase, static_cast<std::size_t>(out_c),
                                 ws.gemm.data() + (px + 0) * out_c,
                                 ws.gemm.data() + (px + 1) * out_c,
                                 ws.gemm.data() + (px + 2) * out_c,
                                 ws.gemm.data() + (px + 3) * out_c, acc, out_c);
          for (int j = 0; j < 8; ++j)
            for (int p = 0; p < 4; ++p) ws.col[(kk + j) * plane + px + p] = acc[j * 4 + p];
        }
        for (; px < plane; ++px)
          for (int j = 0; j < 8; ++j)
            ws.col[(kk + j) * plane + px] = detail::kernel_dot(
                wbase + static_cast<std::size_t>(j) * out_c, ws.gemm.data() + px * out_c, out_c);
      }
      for (; kk < K; ++kk) {
        const T* wrow = ws.wt.data() + kk * out_c;
        T* qk = ws.col.data() + kk * plane;
        for (std::size_t px = 0; px < plane; ++px)
          qk[px] = detail::kernel_dot(wrow, ws.gemm.data() + px * out_c, out_c);
      }
    }
    // col2im: scatter kk rows into the padded gradient, then fold padding
    detail::ensure(ws.dpad, static_cast<std::size_t>(in_c) * ph * pw);
    std::fill(ws.dpad.begin(), ws.dpad.begin() + static_cast<std::ptrdiff_t>(
        static_cast<std::size_t>(in_c) * ph * pw), T(0));
    {
      std::size_t kk = 0;
      for (int ic = 0; ic < in_c; ++ic) {
        T* plane_g = ws.dpad.data() + static_cast<std::size_t>(ic) * ph * pw;
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx, ++kk) {
            const T* qk = ws.col.data() + kk * plane;
            for (int oy = 0; oy < oh; ++oy) {
              T* row = plane_g + static_cast<std::size_t>(oy + ky) * pw + kx;
              const T* q = qk + static_cast<std::size_t>(oy) * ow;
              for (int ox = 0; ox < ow; ++ox) row[ox] += q[ox];
            }
          }
      }
    }
    if (dx->c != in_c || dx->h != x.h || dx->w != x.w) *dx = Tensor<T>(in_c, x.h, x.w);
    dx->zero();
    for (int ic = 0; ic < in_c; ++ic) {
      const T* plane_g = ws.dpad.data() + static_cast<std::size_t>(ic) * ph * pw;
      for (int y = 0; y < ph; ++y) {
        const int sy = std::clamp(y - pad, 0, x.h - 1);
        const T* src = plane_g + static_cast<std::size_t>(y) * pw;
        T* dst = dx->channel(ic) + static_cast<std::size_t>(sy) * x.w;
        for (int xx = 0; xx < pw; ++xx) dst[std::clamp(xx - pad, 0, x.w - 1)] += src[xx];
      }
    }
    return;
  }

  // row scheme, out channels blocked by 4
  {
    int ocb = 0;
    for (; ocb + 4 <= out_c; ocb += 4) {
      for (int ic = 0; ic < in_c; ++ic) {
        const T* plane_in = xp + static_cast<std::size_t>(ic) * ph * pw;
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            T a0 = T(0), a1 = T(0), a2 = T(0), a3 = T(0);
            T row_acc[4];
            for (int oy = 0; oy < oh; ++oy) {
              const T* __restrict xr = plane_in + static_cast<std::size_t>(oy * stride + ky) * pw + kx;
              const T* __restrict d0 = dy.channel(ocb + 0) + static_cast<std::size_t>(oy) * ow;
              const T* __restrict d1 = dy.channel(ocb + 1) + static_cast<std::size_t>(oy) * ow;
              const T* __restrict d2 = dy.channel(ocb + 2) + static_cast<std::size_t>(oy) * ow;
              const T* __restrict d3 = dy.channel(ocb + 3) + static_cast<std::size_t>(oy) * ow;
              if (stride == 1) {
                detail::kernel_dot4_lanes(xr, d0, d1, d2, d3, row_acc, ow);
                a0 += row_acc[0];
                a1 += row_acc[1];
                a2 += row_acc[2];
                a3 += row_acc[3];
              } else {
                for (int ox = 0; ox < ow; ++ox) {
                  const T xv = xr[ox * stride];
                  a0 += d0[ox] * xv;
                  a1 += d1[ox] * xv;
                  a2 += d2[ox] * xv;
                  a3 += d3[ox] * xv;
                }
              }
            }
            const std::size_t base = ky * static_cast<std::size_t>(k) + kx;
            dweights[((static_cast<std::size_t>(ocb + 0) * in_c + ic) * ksq) + base] += a0;
            dweights[((static_cast<std::size_t>(ocb + 1) * in_c + ic) * ksq) + base] += a1;
            dweights[((static_cast<std::size_t>(ocb + 2) * in_c + ic) * ksq) + base] += a2;
            dweights[((static_cast<std::size_t>(ocb + 3) * in_c + ic) * ksq) + base] += a3;
          }
        }
      }
    }
    for (; ocb < out_c; ++ocb) {
      for (int ic = 0; ic < in_c; ++ic) {
        const T* plane_in = xp + static_cast<std::size_t>(ic) * ph * pw;
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            T acc = T(0);
            for (int oy = 0; oy < oh; ++oy) {
              const T* dyr = dy.channel(ocb) + static_cast<std::size_t>(oy) * ow;
              const T* xr = plane_in + static_cast<std::size_t>(oy * stride + ky) * pw + kx;
              for (int ox = 0; ox < ow; ++ox) acc += dyr[ox] * xr[ox * stride];
            }
            dweights[((static_cast<std::size_t>(ocb) * in_c + ic) * ksq) + ky * k + kx] += acc;
          }
        }
      }
    }
  }

  if (!dx) return;
  if (dx->c != in_c || dx->h != x.h || dx->w != x.w) *dx = Tensor<T>(in_c, x.h, x.w);
  dx->zero();
  detail::ensure(ws.dpad, static_cast<std::size_t>(in_c) * ph * pw);

  for (int ic = 0; ic < in_c; ++ic) {
    T* plane_g = ws.dpad.data() + static_cast<std::size_t>(ic) * ph * pw;
    std::fill(plane_g, plane_g + static_cast<std::size_t>(ph) * pw, T(0));
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const std::size_t base = ky * static_cast<std::size_t>(k) + kx;
        int ocb = 0;
        for (; ocb + 4 <= out_c; ocb += 4) {
          const T w0 = weights[((static_cast<std::size_t>(ocb + 0) * in_c + ic) * ksq) + base];
          const T w1 = weights[((static_cast<std::size_t>(ocb + 1) * in_c + ic) * ksq) + base];
          const T w2 = weights[((static_cast<std::size_t>(ocb + 2) * in_c + ic) * ksq) + base];
          const T w3 = weights[((static_cast<std::size_t>(ocb + 3) * in_c + ic) * ksq) + base];
          for (int oy = 0; oy < oh; ++oy) {
            T* __restrict dpr = plane_g + static_cast<std::size_t>(oy * stride + ky) * pw + kx;
            const T* __restrict d0 = dy.channel(ocb + 0) + static_cast<std::size_t>(oy) * ow;
            const T* __restrict d1 = dy.channel(ocb + 1) + static_cast<std::size_t>(oy) * ow;
            const T* __restrict d2 = dy.channel(ocb + 2) + static_cast<std::size_t>(oy) * ow;
            const T* __restrict d3 = dy.channel(ocb + 3) + static_cast<std::size_t>(oy) * ow;
            if (stride == 1) {
              for (int ox = 0; ox < ow; ++ox)
                dpr[ox] += w0 * d0[ox] + w1 * d1[ox] + w2 * d2[ox] + w3 * d3[ox];
            } else {
              for (int ox = 0; ox < ow; ++ox)
                dpr[ox * stride] += w0 * d0[ox] + w1 * d1[ox] + w2 * d2[ox] + w3 * d3[ox];
            }
          }
        }
        for (; ocb < out_c; ++ocb) {
          const T wv = weights[((static_cast<std::size_t>(ocb) * in_c + ic) * ksq) + base];
          if (wv == T(0)) continue;
          for (int oy = 0; oy < oh; ++oy) {
            T* dpr = plane_g + static_cast<std::size_t>(oy * stride + ky) * pw + kx;
            const T* dyr = dy.channel(ocb) + static_cast<std::size_t>(oy) * ow;
            for (int ox = 0; ox < ow; ++ox) dpr[ox * stride] += wv * dyr[ox];
          }
        }
      }
    }
    // fold replicate padding back onto clamped source pixels
    for (int y = 0; y < ph; ++y) {
      const int sy = std::clamp(y - pad, 0, x.h - 1);
      const T* src = plane_g + static_cast<std::size_t>(y) * pw;
      T* dst = dx->channel(ic) + static_cast<std::size_t>(sy) * x.w;
      for (int xx = 0; xx < pw; ++xx) dst[std::clamp(xx - pad, 0, x.w - 1)] += src[xx];
    }
  }
}

// ---------------------------------------------------------------------------

template <typename T>
void relu_forward(const Tensor<T>& x, Tensor<T>& y) {
  if (!y.same_shape(x)) y = Tensor<T>(x.c, x.h, x.w);
  for (std::size_t i = 0; i < x.numel(); ++i) y.v[i] = x.v[i] > T(0) ? x.v[i] : T(0);
}

// dx += dy * (y > 0); y is the forward output.
template <typename T>
void relu_backward_add(const Tensor<T>& y, const Tensor<T>& dy, Tensor<T>& dx) {
  for (std::size_t i = 0; i < y.numel(); ++i)
    if (y.v[i] > T(0)) dx.v[i] += dy.v[i];
}

template <typename T>
void relu_backward_mask(const Tensor<T>& y, Tensor<T>& dy_inplace) {
  for (std::size_t i = 0; i < y.numel(); ++i)
    if (!(y.v[i] > T(0))) dy_inplace.v[i] = T(0);
}

// 3x3 max pool, stride 2, window clamped at borders (equivalent to replicate
// padding for max). Ties resolved to the first element in scan order.
template <typename T>
void maxpool3x3s2_forward(const Tensor<T>& x, Tensor<T>& y, std::vector<std::int32_t>& argmax) {
  const int oh = conv_out_dim(x.h, 3, 2), ow = conv_out_dim(x.w, 3, 2);
  if (y.c != x.c || y.h != oh || y.w != ow) y = Tensor<T>(x.c, oh, ow);
  argmax.assign(y.numel(), 0);
  std::size_t oi = 0;
  for (int ci = 0; ci < x.c; ++ci) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox, ++oi) {
        const int y0 = std::max(0, oy * 2 - 1), y1 = std::min(x.h - 1, oy * 2 + 1);
        const int x0 = std::max(0, ox * 2 - 1), x1 = std::min(x.w - 1, ox * 2 + 1);
        T best = x.at(ci, y0, x0);
        std::int32_t best_idx = static_cast<std::int32_t>(y0 * x.w + x0);
        for (int yy = y0; yy <= y1; ++yy)
          for (int xx = x0; xx <= x1; ++xx) {
            const T val = x.at(ci, yy, xx);
            if (val > best) {
              best = val;
              best_idx = static_cast<std::int32_t>(yy * x.w + xx);
            }
          }
        y.v[oi] = best;
        argmax[oi] = best_idx;
      }
    }
  }
}

template <typename T>
void maxpool3x3s2_backward(const Tensor<T>& x, const Tensor<T>& dy,
                           const std::vector<std::int32_t>& argmax, Tensor<T>& dx) {
  if (!dx.same_shape(x)) dx = Tensor<T>(x.c, x.h, x.w);
  dx.zero();
  std::size_t oi = 0;
  for (int ci = 0; ci < dy.c; ++ci) {
    T* dxc = dx.channel(ci);
    const T* dyc = dy.channel(ci);
    for (std::size_t i = 0; i < dy.plane(); ++i, ++oi) dxc[argmax[oi]] += dyc[i];
  }
}

// Channel-to-space, factor 2: out(c, 2y+dy, 2x+dx) = in(4c + 2*dy + dx, y, x).
template <typename T>
void pixel_shuffle2_forward(const Tensor<T>& x, Tensor<T>& y) {
  if (x.c % 4 != 0) throw std::invalid_argument("pixel_shuffle2: channels not divisible by 4");
  const int oc = x.c / 4, oh = x.h * 2, ow = x.w * 2;
  if (y.c != oc || y.h != oh || y.w != ow) y = Tensor<T>(oc, oh, ow);
  for (int c = 0; c < oc; ++c)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        const T* src = x.channel(4 * c + 2 * dy + dx);
        for (int yy = 0; yy < x.h; ++yy) {
          T* dst = y.channel(c) + static_cast<std::size_t>(2 * yy + dy) * ow + dx;
          const T* s = src + static_cast<std::size_t>(yy) * x.w;
          for (int xx = 0; xx < x.w; ++xx) dst[2 * xx] = s[xx];
        }
      }
}

template <typename T>
void pixel_shuffle2_backward(const Tensor<T>& dy, Tensor<T>& dx) {
  const int ic = dy.c * 4, ih = dy.h / 2, iw = dy.w / 2;
  if (dx.c != ic || dx.h != ih || dx.w != iw) dx = Tensor<T>(ic, ih, iw);
  for (int c = 0; c < dy.c; ++c)
    for (int d = 0; d < 2; ++d)
      for (int e = 0; e < 2; ++e) {
        T* dst = dx.channel(4 * c + 2 * d + e);
        for (int yy = 0; yy < ih; ++yy) {
          const T* s = dy.channel(c) + static_cast<std::size_t>(2 * yy + d) * dy.w + e;
          T* drow = dst + static_cast<std::size_t>(yy) * iw;
          for (int xx = 0; xx < iw; ++xx) drow[xx] = s[2 * xx];
        }
      }
}

template <typename T>
void concat_forward(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& y) {
  if (a.h != b.h || a.w != b.w) throw std::invalid_argument("concat: spatial mismatch");
  if (y.c != a.c + b.c || y.h != a.h || y.w != a.w) y = Tensor<T>(a.c + b.c, a.h, a.w);
  std::copy(a.v.begin(), a.v.end(), y.v.begin());
  std::copy(b.v.begin(), b.v.end(), y.v.begin() + static_cast<std::ptrdiff_t>(a.numel()));
}

template <typename T>
void concat_backward(const Tensor<T>& dy, int a_channels, Tensor<T>& da, Tensor<T>& db) {
  const int b_channels = dy.c - a_channels;
  if (da.c != a_channels || da.h != dy.h || da.w != dy.w) da = Tensor<T>(a_channels, dy.h, dy.w);
  if (db.c != b_channels || db.h != dy.h || db.w != dy.w) db = Tensor<T>(b_channels, dy.h, dy.w);
  std::copy(dy.v.begin(), dy.v.begin() + static_cast<std::ptrdiff_t>(da.numel()), da.v.begin());
  std::copy(dy.v.begin() + static_cast<std::ptrdiff_t>(da.numel()), dy.v.end(), db.v.begin());
}

template <typename T>
void add_inplace(Tensor<T>& dst, const Tensor<T>& src) {
  for (std::size_t i = 0; i < dst.numel(); ++i) dst.v[i] += src.v[i];
}

}  // namespace meshcorr
