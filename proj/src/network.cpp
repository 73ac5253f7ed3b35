#include "meshcorr/network.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace meshcorr {

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = kFnvOffset;
  for (unsigned char c : s) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

int scaled(int full, int multiplier) { return std::max(full / multiplier, 1); }

}  // namespace

template <typename T>
ConvSpec CorrectionNet<T>::register_conv(const std::string& name, int in_c, int out_c, int k,
                                         int stride) {
  ConvSpec cs;
  cs.in_c = in_c;
  cs.out_c = out_c;
  cs.k = k;
  cs.stride = stride;
  cs.w_off = params_.size();
  params_.resize(params_.size() + cs.weight_count());
  cs.b_off = params_.size();
  params_.resize(params_.size() + static_cast<std::size_t>(out_c));
  blocks_.push_back({name, cs});
  spec_ += name + ":" + std::to_string(in_c) + "," + std::to_string(out_c) + "," +
           std::to_string(k) + "," + std::to_string(stride) + ";";
  return cs;
}

template <typename T>
typename CorrectionNet<T>::Residual CorrectionNet<T>::register_residual(const std::string& name,
                                                                        int ch) {
  Residual r;
  r.c1 = register_conv(name + ".c1", ch, ch, 3, 1);
  r.c2 = register_conv(name + ".c2", ch, ch, 3, 1);
  return r;
}

template <typename T>
typename CorrectionNet<T>::Projection CorrectionNet<T>::register_projection(
    const std::string& name, int in_c, int out_c, int stride) {
  Projection p;
  p.main1 = register_conv(name + ".m1", in_c, out_c, 3, stride);
  p.main2 = register_conv(name + ".m2", out_c, out_c, 3, 1);
  p.skip = register_conv(name + ".skip", in_c, out_c, 1, stride);
  return p;
}

template <typename T>
typename CorrectionNet<T>::UpProj CorrectionNet<T>::register_upproj(const std::string& name,
                                                                    int in_c, int out_c) {
  UpProj u;
  u.a = register_conv(name + ".a", in_c, out_c * 4, 3, 1);
  u.b = register_conv(name + ".b", out_c, out_c, 3, 1);
  return u;
}

template <typename T>
CorrectionNet<T>::CorrectionNet(const NetConfig& config) : config_(config) {
  if (config.height % 32 != 0 || config.width % 32 != 0)
    throw std::invalid_argument("CorrectionNet: height and width must be divisible by 32");
  const int m = config.multiplier;
  c0_ = scaled(64, m);
  s1_ = scaled(256, m);
  s2_ = scaled(512, m);
  s3_ = scaled(1024, m);
  cb_ = scaled(2048, m);
  u1_ = scaled(1024, m);
  u2_ = scaled(512, m);
  u3_ = scaled(256, m);
  u4_ = scaled(128, m);
  u5_ = scaled(32, m);

  spec_ = "meshcorr-net-v1|m=" + std::to_string(m) + "|in=" + std::to_string(config.in_channels) +
          "|h=" + std::to_string(config.height) + "|w=" + std::to_string(config.width) + "|";

  enc0c_ = register_conv("enc0.conv", config.in_channels, c0_, 3, 1);
  enc0r_ = register_residual("enc0.res", c0_);
  enc1c_ = register_conv("enc1.conv", c0_, c0_, 5, 2);
  spec_ += "pool:3,2;";
  e2p_ = register_projection("enc2.proj", c0_, s1_, 2);
  e2r_ = register_residual("enc2.res", s1_);
  e3p_ = register_projection("enc3.proj", s1_, s2_, 2);
  e3r_ = register_residual("enc3.res", s2_);
  e4p_ = register_projection("enc4.proj", s2_, s3_, 2);
  e4r_ = register_residual("enc4.res", s3_);
  bp_ = register_projection("bott.proj", s3_, cb_, 1);
  br_ = register_residual("bott.res", cb_);
  d1_ = register_upproj("dec1.up", cb_, u1_);
  d2_ = register_upproj("dec2.up", u1_ + s2_, u2_);
  d3_ = register_upproj("dec3.up", u2_ + s1_, u3_);
  d4_ = register_upproj("dec4.up", u3_ + c0_, u4_);
  d5_ = register_upproj("dec5.up", u4_ + c0_, u5_);
  fin_ = register_residual("final.res", u5_);
  head_ = register_conv("head.conv", u5_, 2, 3, 1);

  digest_ = fnv1a(spec_);
}

template <typename T>
void CorrectionNet<T>::initialize_he(std::uint64_t seed) {
  SplitMix64 rng(seed);
  for (const ParamBlock& block : blocks_) {
    const ConvSpec& cs = block.spec;
    const double fan_in = static_cast<double>(cs.in_c) * cs.k * cs.k;
    const double stddev = std::sqrt(2.0 / fan_in);
    for (std::size_t i = 0; i < cs.weight_count(); ++i)
      params_[cs.w_off + i] = static_cast<T>(rng.gaussian() * stddev);
    for (int i = 0; i < cs.out_c; ++i) params_[cs.b_off + i] = T(0);
  }
}

template <typename T>
void CorrectionNet<T>::set_params(std::span<const T> p) {
  if (p.size() != params_.size()) throw std::invalid_argument("set_params: size mismatch");
  std::copy(p.begin(), p.end(), params_.begin());
}

template <typename T>
void CorrectionNet<T>::conv_fwd(const ConvSpec& cs, const Tensor<T>& x, Tensor<T>& y,
                                Workspace ws) const {
  conv2d_forward(x, params_.data() + cs.w_off, params_.data() + cs.b_off, cs.out_c, cs.k,
                 cs.stride, y, ws);
}

template <typename T>
void CorrectionNet<T>::conv_bwd(const ConvSpec& cs, const Tensor<T>& x, const Tensor<T>& dy,
                                Tensor<T>* dx, std::span<T> grads, Workspace ws) const {
  conv2d_backward(x, params_.data() + cs.w_off, cs.out_c, cs.k, cs.stride, dy, dx,
                  grads.data() + cs.w_off, grads.data() + cs.b_off, ws);
}

template <typename T>
void CorrectionNet<T>::residual_fwd(const Residual& rs, const Tensor<T>& x,
                                    ResidualCache<T>& cache, Workspace ws) const {
  Tensor<T> a1;
  conv_fwd(rs.c1, x, a1, ws);
  relu_forward(a1, cache.r);
  Tensor<T> a2;
  conv_fwd(rs.c2, cache.r, a2, ws);
  add_inplace(a2, x);
  relu_forward(a2, cache.y);
}

template <typename T>
void CorrectionNet<T>::residual_bwd(const Residual& rs, const Tensor<T>& x,
                                    const ResidualCache<T>& cache, const Tensor<T>& dy,
                                    Tensor<T>& dx, std::span<T> grads, Workspace ws) const {
  Tensor<T> g = dy;
  relu_backward_mask(cache.y, g);
  Tensor<T> dr;
  conv_bwd(rs.c2, cache.r, g, &dr, grads, ws);
  relu_backward_mask(cache.r, dr);
  conv_bwd(rs.c1, x, dr, &dx, grads, ws);
  add_inplace(dx, g);
}

template <typename T>
void CorrectionNet<T>::projection_fwd(const Projection& ps, const Tensor<T>& x,
                                      ProjectionCache<T>& cache, Workspace ws) const {
  Tensor<T> a1;
  conv_fwd(ps.main1, x, a1, ws);
  relu_forward(a1, cache.r);
  Tensor<T> a2;
  conv_fwd(ps.main2, cache.r, a2, ws);
  Tensor<T> sk;
  conv_fwd(ps.skip, x, sk, ws);
  add_inplace(a2, sk);
  relu_forward(a2, cache.y);
}

template <typename T>
void CorrectionNet<T>::projection_bwd(const Projection& ps, const Tensor<T>& x,
                                      const ProjectionCache<T>& cache, const Tensor<T>& dy,
                                      Tensor<T>& dx, std::span<T> grads, Workspace ws) const {
  Tensor<T> g = dy;
  relu_backward_mask(cache.y, g);
  Tensor<T> dr;
  conv_bwd(ps.main2, cache.r, g, &dr, grads, ws);
  relu_backward_mask(cache.r, dr);
  conv_bwd(ps.main1, x, dr, &dx, grads, ws);
  Tensor<T> dx_skip;
  conv_bwd(ps.skip, x, g, &dx_skip, grads, ws);
  add_inplace(dx, dx_skip);
}

template <typename T>
void CorrectionNet<T>::upproj_fwd(const UpProj& us, const Tensor<T>& x, UpProjCache<T>& cache,
                                  Workspace ws) const {
  Tensor<T> a;
  conv_fwd(us.a, x, a, ws);
  pixel_shuffle2_forward(a, cache.t);
  Tensor<T> b;
  conv_fwd(us.b, cache.t, b, ws);
  add_inplace(b, cache.t);
  relu_forward(b, cache.y);
}

template <typename T>
void CorrectionNet<T>::upproj_bwd(const UpProj& us, const Tensor<T>& x,
                                  const UpProjCache<T>& cache, const Tensor<T>& dy, Tensor<T>& dx,
                                  std::span<T> grads, Workspace ws) const {
  Tensor<T> g = dy;
  relu_backward_mask(cache.y, g);
  Tensor<T> dt;
  conv_bwd(us.b, cache.t, g, &dt, grads, ws);
  add_inplace(dt, g);
  Tensor<T> da;
  pixel_shuffle2_backward(dt, da);
  conv_bwd(us.a, x, da, &dx, grads, ws);
}

template <typename T>
void CorrectionNet<T>::forward(const Tensor<T>& input, NetCache<T>& cache) const {
  if (input.c != config_.in_channels || input.h != config_.height || input.w != config_.width)
    throw std::invalid_argument("CorrectionNet::forward: input shape mismatch");

  cache.input = input;
  Workspace ws = cache.work;
  conv_fwd(enc0c_, cache.input, cache.enc0c, ws);
  residual_fwd(enc0r_, cache.enc0c, cache.enc0, ws);
  conv_fwd(enc1c_, cache.enc0.y, cache.enc1c, ws);
  maxpool3x3s2_forward(cache.enc1c, cache.pool_y, cache.pool_argmax);
  projection_fwd(e2p_, cache.pool_y, cache.e2p, ws);
  residual_fwd(e2r_, cache.e2p.y, cache.e2r, ws);
  projection_fwd(e3p_, cache.e2r.y, cache.e3p, ws);
  residual_fwd(e3r_, cache.e3p.y, cache.e3r, ws);
  projection_fwd(e4p_, cache.e3r.y, cache.e4p, ws);
  residual_fwd(e4r_, cache.e4p.y, cache.e4r, ws);
  projection_fwd(bp_, cache.e4r.y, cache.bp, ws);
  residual_fwd(br_, cache.bp.y, cache.br, ws);

  upproj_fwd(d1_, cache.br.y, cache.d1, ws);
  concat_forward(cache.d1.y, cache.e3r.y, cache.cat1);
  upproj_fwd(d2_, cache.cat1, cache.d2, ws);
  concat_forward(cache.d2.y, cache.e2r.y, cache.cat2);
  upproj_fwd(d3_, cache.cat2, cache.d3, ws);
  concat_forward(cache.d3.y, cache.pool_y, cache.cat3);
  upproj_fwd(d4_, cache.cat3, cache.d4, ws);
  concat_forward(cache.d4.y, cache.enc1c, cache.cat4);
  upproj_fwd(d5_, cache.cat4, cache.d5, ws);
  residual_fwd(fin_, cache.d5.y, cache.fin, ws);
  conv_fwd(head_, cache.fin.y, cache.head, ws);

  cache.attention = Tensor<T>(1, cache.head.h, cache.head.w);
  const T* logit = cache.head.channel(1);
  T* att = cache.attention.channel(0);
  for (std::size_t i = 0; i < cache.attention.plane(); ++i)
    att[i] = T(1) / (T(1) + std::exp(-logit[i]));
}

template <typename T>
void CorrectionNet<T>::backward(NetCache<T>& cache, const Tensor<T>& d_g_star,
                                const Tensor<T>& d_attention, std::span<T> grads) const {
  if (grads.size() != params_.size())
    throw std::invalid_argument("CorrectionNet::backward: gradient size mismatch");
  if (cache.head.h != config_.height || cache.head.w != config_.width)
    throw std::invalid_argument("CorrectionNet::backward: cache mismatch");

  Tensor<T> dhead(2, cache.head.h, cache.head.w);
  const T* att = cache.attention.channel(0);
  const T* dg = d_g_star.channel(0);
  const T* da = d_attention.channel(0);
  T* dh0 = dhead.channel(0);
  T* dh1 = dhead.channel(1);
  for (std::size_t i = 0; i < dhead.plane(); ++i) {
    dh0[i] = dg[i];
    dh1[i] = da[i] * att[i] * (T(1) - att[i]);
  }

  Workspace ws = cache.work;
  Tensor<T> d_finy;
  conv_bwd(head_, cache.fin.y, dhead, &d_finy, grads, ws);
  Tensor<T> d_d5y;
  residual_bwd(fin_, cache.d5.y, cache.fin, d_finy, d_d5y, grads, ws);

  Tensor<T> d_cat4;
  upproj_bwd(d5_, cache.cat4, cache.d5, d_d5y, d_cat4, grads, ws);
  Tensor<T> d_d4y, d_enc1c_skip;
  concat_backward(d_cat4, cache.d4.y.c, d_d4y, d_enc1c_skip);

  Tensor<T> d_cat3;
  upproj_bwd(d4_, cache.cat3, cache.d4, d_d4y, d_cat3, grads, ws);
  Tensor<T> d_d3y, d_pool_skip;
  concat_backward(d_cat3, cache.d3.y.c, d_d3y, d_pool_skip);

  Tensor<T> d_cat2;
  upproj_bwd(d3_, cache.cat2, cache.d3, d_d3y, d_cat2, grads, ws);
  Tensor<T> d_d2y, d_e2r_skip;
  concat_backward(d_cat2, cache.d2.y.c, d_d2y, d_e2r_skip);

  Tensor<T> d_cat1;
  upproj_bwd(d2_, cache.cat1, cache.d2, d_d2y, d_cat1, grads, ws);
  Tensor<T> d_d1y, d_e3r_skip;
  concat_backward(d_cat1, cache.d1.y.c, d_d1y, d_e3r_skip);

  Tensor<T> d_bry;
  upproj_bwd(d1_, cache.br.y, cache.d1, d_d1y, d_bry, grads, ws);

  Tensor<T> d_bpy;
  residual_bwd(br_, cache.bp.y, cache.br, d_bry, d_bpy, grads, ws);
  Tensor<T> d_e4ry;
  projection_bwd(bp_, cache.e4r.y, cache.bp, d_bpy, d_e4ry, grads, ws);
  Tensor<T> d_e4py;
  residual_bwd(e4r_, cache.e4p.y, cache.e4r, d_e4ry, d_e4py, grads, ws);
  Tensor<T> d_e3ry;
  projection_bwd(e4p_, cache.e3r.y, cache.e4p, d_e4py, d_e3ry, grads, ws);
  add_inplace(d_e3ry, d_e3r_skip);

  Tensor<T> d_e3py;
  residual_bwd(e3r_, cache.e3p.y, cache.e3r, d_e3ry, d_e3py, grads, ws);
  Tensor<T> d_e2ry;
  projection_bwd(e3p_, cache.e2r.y, cache.e3p, d_e3py, d_e2ry, grads, ws);
  add_inplace(d_e2ry, d_e2r_skip);

  Tensor<T> d_e2py;
  residual_bwd(e2r_, cache.e2p.y, cache.e2r, d_e2ry, d_e2py, grads, ws);
  Tensor<T> d_pooly;
  projection_bwd(e2p_, cache.pool_y, cache.e2p, d_e2py, d_pooly, grads, ws);
  add_inplace(d_pooly, d_pool_skip);

  Tensor<T> d_enc1c;
  maxpool3x3s2_backward(cache.enc1c, d_pooly, cache.pool_argmax, d_enc1c);
  add_inplace(d_enc1c, d_enc1c_skip);

  Tensor<T> d_enc0ry;
  conv_bwd(enc1c_, cache.enc0.y, d_enc1c, &d_enc0ry, grads, ws);
  Tensor<T> d_enc0c;
  residual_bwd(enc0r_, cache.enc0c, cache.enc0, d_enc0ry, d_enc0c, grads, ws);
  conv_bwd(enc0c_, cache.input, d_enc0c, nullptr, grads, ws);
}

template <typename T>
NetOutput CorrectionNet<T>::split_output(const NetCache<T>& cache) {
  NetOutput out;
  out.g_star = ImageF(cache.head.w, cache.head.h);
  out.attention = ImageF(cache.head.w, cache.head.h);
  const T* g = cache.head.channel(0);
  const T* a = cache.attention.channel(0);
  for (int v = 0; v < cache.head.h; ++v)
    for (int u = 0; u < cache.head.w; ++u) {
      out.g_star.at(u, v) = static_cast<float>(g[static_cast<std::size_t>(v) * cache.head.w + u]);
      out.attention.at(u, v) =
          static_cast<float>(a[static_cast<std::size_t>(v) * cache.head.w + u]);
    }
  return out;
}

template class CorrectionNet<float>;
template class CorrectionNet<double>;

Tensor<float> stack_to_input(const MeshFeatureStack& stack) {
  const int h = stack.height(), w = stack.width();
  Tensor<float> input(7, h, w);
  constexpr double kHalfPi = 1.57079632679489661923;
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const std::size_t i = static_cast<std::size_t>(v) * w + u;
      input.channel(0)[i] = stack.inverse_depth.at(u, v);
      input.channel(1)[i] = stack.normal_x.at(u, v);
      input.channel(2)[i] = stack.normal_y.at(u, v);
      input.channel(3)[i] = stack.normal_z.at(u, v);
      input.channel(4)[i] = std::log1p(stack.area.at(u, v));
      input.channel(5)[i] = stack.edge_ratio.at(u, v);
      input.channel(6)[i] = static_cast<float>(stack.cam_angle.at(u, v) / kHalfPi);
    }
  }
  return input;
}

double learning_rate(const TrainConfig& config, std::int64_t step) {
  const std::int64_t s = std::min(step, config.t_max);
  return config.eta_max -
         (config.eta_max - config.eta_min) * static_cast<double>(s) / static_cast<double>(config.t_max);
}

double clip_global_norm(std::span<float> grads, double clip_norm) {
  double sq = 0.0;
  for (float g : grads) sq += double(g) * double(g);
  const double norm = std::sqrt(sq);
  if (norm > clip_norm && norm > 0.0) {
    const double scale = clip_norm / norm;
    for (float& g : grads) g = static_cast<float>(g * scale);
  }
  return norm;
}

void adam_update(std::span<float> params, std::span<const float> grads, AdamState& state,
                 double eta, double beta1, double beta2, double eps) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw std::invalid_argument("adam_update: size mismatch");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
    const double mh = state.m[i] / bc1;
    const double vh = state.v[i] / bc2;
    params[i] = static_cast<float>(params[i] - eta * mh / (std::sqrt(vh) + eps));
  }
}

}  // namespace meshcorr
