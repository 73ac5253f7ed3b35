#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "meshcorr/image.hpp"
#include "meshcorr/rasterizer.hpp"
#include "meshcorr/rng.hpp"
#include "meshcorr/tensor.hpp"

namespace meshcorr {

// Desk-scale analog of the full-size encoder-decoder: channel counts are the
// full-scale ones divided by `multiplier`.
struct NetConfig {
  int multiplier = 8;
  int in_channels = 7;
  int height = 96;
  int width = 288;
  std::uint64_t init_seed = 42;
};

struct ConvSpec {
  int in_c = 0, out_c = 0, k = 3, stride = 1;
  std::size_t w_off = 0, b_off = 0;
  std::size_t weight_count() const {
    return static_cast<std::size_t>(out_c) * in_c * k * k;
  }
};

template <typename T>
struct ResidualCache {
  Tensor<T> r;  // relu(conv1(x))
  Tensor<T> y;  // relu(x + conv2(r))
};

template <typename T>
struct ProjectionCache {
  Tensor<T> r;  // relu(conv1(x))
  Tensor<T> y;  // relu(conv2(r) + skip(x))
};

template <typename T>
struct UpProjCache {
  Tensor<T> t;  // pixel_shuffle2(convA(x))
  Tensor<T> y;  // relu(t + convB(t))
};

template <typename T>
struct NetCache {
  Tensor<T> input;
  Tensor<T> enc0c;
  ResidualCache<T> enc0;
  Tensor<T> enc1c;
  Tensor<T> pool_y;
  std::vector<std::int32_t> pool_argmax;
  ProjectionCache<T> e2p;
  ResidualCache<T> e2r;
  ProjectionCache<T> e3p;
  ResidualCache<T> e3r;
  ProjectionCache<T> e4p;
  ResidualCache<T> e4r;
  ProjectionCache<T> bp;
  ResidualCache<T> br;
  UpProjCache<T> d1;
  Tensor<T> cat1;
  UpProjCache<T> d2;
  Tensor<T> cat2;
  UpProjCache<T> d3;
  Tensor<T> cat3;
  UpProjCache<T> d4;
  Tensor<T> cat4;
  UpProjCache<T> d5;
  ResidualCache<T> fin;
  Tensor<T> head;       // 2 x H x W, channel 1 is the attention logit
  Tensor<T> attention;  // sigmoid of channel 1

  // per-cache conv workspace so concurrent forwards never share scratch
  ConvWork<T> work;
};

struct NetOutput {
  ImageF g_star;
  ImageF attention;
};

template <typename T>
class CorrectionNet {
 public:
  explicit CorrectionNet(const NetConfig& config);

  const NetConfig& config() const { return config_; }
  std::span<const T> params() const { return params_; }
  std::span<T> params() { return params_; }
  std::size_t param_count() const { return params_.size(); }

  // FNV-1a of the layer descriptor string; checkpoints refuse to load when
  // it differs.
  std::uint64_t spec_digest() const { return digest_; }
  const std::string& spec_string() const { return spec_; }

  void initialize_he(std::uint64_t seed);
  void set_params(std::span<const T> p);

  void forward(const Tensor<T>& input, NetCache<T>& cache) const;

  // d_g_star / d_attention are gradients w.r.t. the g* channel and the
  // post-sigmoid attention. Parameter gradients are accumulated into grads
  // (sized like params). Non-const cache: its workspaces are reused.
  void backward(NetCache<T>& cache, const Tensor<T>& d_g_star, const Tensor<T>& d_attention,
                std::span<T> grads) const;

  static NetOutput split_output(const NetCache<T>& cache);

  // layer table, in parameter-layout order
  struct ParamBlock {
    std::string name;
    ConvSpec spec;
  };
  const std::vector<ParamBlock>& blocks() const { return blocks_; }

 private:
  struct Residual {
    ConvSpec c1, c2;
  };
  struct Projection {
    ConvSpec main1, main2, skip;
  };
  struct UpProj {
    ConvSpec a, b;
  };

  ConvSpec register_conv(const std::string& name, int in_c, int out_c, int k, int stride);
  Residual register_residual(const std::string& name, int ch);
  Projection register_projection(const std::string& name, int in_c, int out_c, int stride);
  UpProj register_upproj(const std::string& name, int in_c, int out_c);

  using Workspace = ConvWork<T>&;

  void conv_fwd(const ConvSpec& cs, const Tensor<T>& x, Tensor<T>& y, Workspace ws) const;
  void conv_bwd(const ConvSpec& cs, const Tensor<T>& x, const Tensor<T>& dy, Tensor<T>* dx,
                std::span<T> grads, Workspace ws) const;

  void residual_fwd(const Residual& rs, const Tensor<T>& x, ResidualCache<T>& cache,
                    Workspace ws) const;
  void residual_bwd(const Residual& rs, const Tensor<T>& x, const ResidualCache<T>& cache,
                    const Tensor<T>& dy, Tensor<T>& dx, std::span<T> grads, Workspace ws) const;
  void projection_fwd(const Projection& ps, const Tensor<T>& x, ProjectionCache<T>& cache,
                      Workspace ws) const;
  void projection_bwd(const Projection& ps, const Tensor<T>& x, const ProjectionCache<T>& cache,
                      const Tensor<T>& dy, Tensor<T>& dx, std::span<T> grads, Workspace ws) const;
  void upproj_fwd(const UpProj& us, const Tensor<T>& x, UpProjCache<T>& cache, Workspace ws) const;
  void upproj_bwd(const UpProj& us, const Tensor<T>& x, const UpProjCache<T>& cache,
                  const Tensor<T>& dy, Tensor<T>& dx, std::span<T> grads, Workspace ws) const;

  NetConfig config_;
  std::vector<T> params_;
  std::vector<ParamBlock> blocks_;
  std::string spec_;
  std::uint64_t digest_ = 0;

  ConvSpec enc0c_;
  Residual enc0r_;
  ConvSpec enc1c_;
  Projection e2p_;
  Residual e2r_;
  Projection e3p_;
  Residual e3r_;
  Projection e4p_;
  Residual e4r_;
  Projection bp_;
  Residual br_;
  UpProj d1_, d2_, d3_, d4_, d5_;
  Residual fin_;
  ConvSpec head_;

  int c0_, s1_, s2_, s3_, cb_, u1_, u2_, u3_, u4_, u5_;
};

using CorrectionNetF = CorrectionNet<float>;

// Normalized 7-channel network input: inverse depth, camera-frame normals,
// log(1 + area), edge ratio, angle / (pi/2).
Tensor<float> stack_to_input(const MeshFeatureStack& stack);

// ---------------------------------------------------------------------------
// Optimizer.

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;

  void resize(std::size_t n) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
    step = 0;
  }
};

struct TrainConfig {
  double eta_max = 1e-4;
  double eta_min = 5e-6;
  std::int64_t t_max = 120000;
  double clip_norm = 80.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 16;       // images per step (full-scale value)
  std::int64_t total_steps = 500000;
};

// eta_max - (eta_max - eta_min) * min(step, t_max) / t_max
double learning_rate(const TrainConfig& config, std::int64_t step);

// Scales grads so the global L2 norm is at most clip_norm; returns the
// pre-clip norm.
double clip_global_norm(std::span<float> grads, double clip_norm);

void adam_update(std::span<float> params, std::span<const float> grads, AdamState& state,
                 double eta, double beta1, double beta2, double eps);

}  // namespace meshcorr
