#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "meshcorr/io.hpp"
#include "meshcorr/network.hpp"
#include "meshcorr/rng.hpp"
#include "test_support.hpp"

using namespace meshcorr;
using namespace meshcorr::testing;

namespace {

template <typename T>
Tensor<T> random_tensor(SplitMix64& rng, int c, int h, int w, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(c, h, w);
  for (auto& v : t.v) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <typename T>
double weighted_sum(const Tensor<T>& y, const Tensor<T>& u) {
  double acc = 0.0;
  for (std::size_t i = 0; i < y.numel(); ++i) acc += double(y.v[i]) * double(u.v[i]);
  return acc;
}

// finite-difference check of conv2d_backward for a given shape
template <typename T>
void check_conv_gradients(int in_c, int out_c, int k, int stride, int h, int w, double h_step,
                          double tol, std::uint64_t seed) {
  SplitMix64 rng(seed);
  Tensor<T> x = random_tensor<T>(rng, in_c, h, w);
  std::vector<T> weights(static_cast<std::size_t>(out_c) * in_c * k * k);
  std::vector<T> bias(static_cast<std::size_t>(out_c));
  for (auto& wv : weights) wv = static_cast<T>(rng.uniform(-0.5, 0.5));
  for (auto& b : bias) b = static_cast<T>(rng.uniform(-0.1, 0.1));

  ConvWork<T> ws;
  Tensor<T> y;
  conv2d_forward(x, weights.data(), bias.data(), out_c, k, stride, y, ws);
  Tensor<T> upstream = random_tensor<T>(rng, y.c, y.h, y.w);

  std::vector<T> dw(weights.size(), T(0)), db(bias.size(), T(0));
  Tensor<T> dx;
  conv2d_backward(x, weights.data(), out_c, k, stride, upstream, &dx, dw.data(), db.data(), ws);

  const auto loss = [&](const Tensor<T>& xv, const std::vector<T>& wv, const std::vector<T>& bv) {
    ConvWork<T> ws2;
    Tensor<T> out;
    conv2d_forward(xv, wv.data(), bv.data(), out_c, k, stride, out, ws2);
    return weighted_sum(out, upstream);
  };

  // sample of weight entries
  for (int trial = 0; trial < 24; ++trial) {
    const std::size_t i = rng.below(weights.size());
    std::vector<T> plus = weights, minus = weights;
    plus[i] += static_cast<T>(h_step);
    minus[i] -= static_cast<T>(h_step);
    const double fd = (loss(x, plus, bias) - loss(x, minus, bias)) / (2 * h_step);
    CHECK(rel_err(fd, double(dw[i])) < tol);
  }
  // bias entries
  for (int oc = 0; oc < out_c; ++oc) {
    std::vector<T> plus = bias, minus = bias;
    plus[static_cast<std::size_t>(oc)] += static_cast<T>(h_step);
    minus[static_cast<std::size_t>(oc)] -= static_cast<T>(h_step);
    const double fd = (loss(x, weights, plus) - loss(x, weights, minus)) / (2 * h_step);
    CHECK(rel_err(fd, double(db[static_cast<std::size_t>(oc)])) < tol);
  }
  // input pixels
  for (int trial = 0; trial < 24; ++trial) {
    const std::size_t i = rng.below(x.numel());
    Tensor<T> plus = x, minus = x;
    plus.v[i] += static_cast<T>(h_step);
    minus.v[i] -= static_cast<T>(h_step);
    const double fd = (loss(plus, weights, bias) - loss(minus, weights, bias)) / (2 * h_step);
    CHECK(rel_err(fd, double(dx.v[i])) < tol);
  }
}

}  // namespace

TEST_CASE("conv2d identity-delta kernel reproduces the input") {
  SplitMix64 rng(83);
  Tensor<float> x = random_tensor<float>(rng, 2, 6, 9);
  std::vector<float> weights(2 * 2 * 9, 0.0f);
  // out channel c copies in channel c through the center tap
  weights[(0 * 2 + 0) * 9 + 4] = 1.0f;
  weights[(1 * 2 + 1) * 9 + 4] = 1.0f;
  std::vector<float> bias(2, 0.0f);
  ConvWork<float> ws;
  Tensor<float> y;
  conv2d_forward(x, weights.data(), bias.data(), 2, 3, 1, y, ws);
  REQUIRE(y.numel() == x.numel());
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.v[i] == x.v[i]);
}

TEST_CASE("conv2d replicate padding at borders") {
  // a kernel tap reaching outside reads the clamped edge pixel
  Tensor<float> x(1, 1, 3);
  x.v = {1.0f, 2.0f, 3.0f};
  std::vector<float> weights(9, 0.0f);
  weights[3] = 1.0f;  // left tap of the middle row
  std::vector<float> bias(1, 0.0f);
  ConvWork<float> ws;
  Tensor<float> y;
  conv2d_forward(x, weights.data(), bias.data(), 1, 3, 1, y, ws);
  CHECK(y.v[0] == 1.0f);  // clamped to the left edge
  CHECK(y.v[1] == 1.0f);
  CHECK(y.v[2] == 2.0f);
}

TEST_CASE("conv gradients: 3x3 stride 1 (GEMM path) in float and double") {
  check_conv_gradients<double>(3, 4, 3, 1, 8, 16, 1e-6, 1e-6, 89);
  check_conv_gradients<float>(3, 4, 3, 1, 8, 16, 1e-2, 1e-3, 97);
}

TEST_CASE("conv gradients: large plane (row path)") {
  check_conv_gradients<double>(2, 5, 3, 1, 34, 70, 1e-6, 1e-6, 101);
}

TEST_CASE("conv gradients: 5x5 stride 2") {
  check_conv_gradients<double>(3, 4, 5, 2, 12, 20, 1e-6, 1e-6, 103);
}

TEST_CASE("conv gradients: 1x1 stride 2 projection") {
  check_conv_gradients<double>(4, 6, 1, 2, 10, 14, 1e-6, 1e-6, 107);
}

TEST_CASE("conv gradients: 3x3 stride 2") {
  check_conv_gradients<double>(3, 5, 3, 2, 10, 18, 1e-6, 1e-6, 109);
}

TEST_CASE("maxpool forward/backward") {
  SplitMix64 rng(113);
  Tensor<float> x = random_tensor<float>(rng, 2, 8, 12);
  Tensor<float> y;
  std::vector<std::int32_t> argmax;
  maxpool3x3s2_forward(x, y, argmax);
  CHECK(y.h == 4);
  CHECK(y.w == 6);

  SUBCASE("constant image pools to the constant") {
    Tensor<float> c(1, 8, 12, 0.7f);
    Tensor<float> yc;
    std::vector<std::int32_t> am;
    maxpool3x3s2_forward(c, yc, am);
    for (auto v : yc.v) CHECK(v == 0.7f);
  }
  SUBCASE("backward routes gradient to the argmax") {
    Tensor<float> dy(y.c, y.h, y.w, 1.0f);
    Tensor<float> dx;
    maxpool3x3s2_backward(x, dy, argmax, dx);
    double sum = 0.0;
    for (auto v : dx.v) sum += v;
    CHECK(sum == doctest::Approx(double(y.numel())));
    // gradient sits on maxima only
    for (int ci = 0; ci < x.c; ++ci)
      for (int oy = 0; oy < y.h; ++oy)
        for (int ox = 0; ox < y.w; ++ox) {
          const std::int32_t am = argmax[(static_cast<std::size_t>(ci) * y.h + oy) * y.w + ox];
          CHECK(x.channel(ci)[am] == y.at(ci, oy, ox));
        }
  }
}

TEST_CASE("pixel_shuffle2 matches the brute-force index map and round-trips") {
  SplitMix64 rng(127);
  Tensor<float> x = random_tensor<float>(rng, 4, 2, 3);
  Tensor<float> y;
  pixel_shuffle2_forward(x, y);
  REQUIRE(y.c == 1);
  REQUIRE(y.h == 4);
  REQUIRE(y.w == 6);
  for (int c = 0; c < 1; ++c)
    for (int yy = 0; yy < 2; ++yy)
      for (int xx = 0; xx < 3; ++xx)
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx)
            CHECK(y.at(c, 2 * yy + dy, 2 * xx + dx) == x.at(4 * c + 2 * dy + dx, yy, xx));

  Tensor<float> back;
  pixel_shuffle2_backward(y, back);
  REQUIRE(back.numel() == x.numel());
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(back.v[i] == x.v[i]);

  CHECK_THROWS_AS(pixel_shuffle2_forward(random_tensor<float>(rng, 3, 2, 2), y),
                  std::invalid_argument);
}

TEST_CASE("miniature two-conv net: backward matches finite differences") {
  // conv3x3 -> relu -> conv3x3 on an 8x16 input; double build tolerance 1e-6,
  // float build tolerance 1e-3
  // In the float variant the step must dominate float rounding, so weights
  // and inputs are kept positive: relu pre-activations sit away from their
  // kink and central differences stay exact.
  const auto run = [](auto tag, double h_step, double tol, std::uint64_t seed, bool positive) {
    using T = decltype(tag);
    SplitMix64 rng(seed);
    const int c0 = 2, c1 = 3, c2 = 2, H = 8, W = 16;
    const double lo_w = positive ? 0.02 : -0.5, hi_w = positive ? 0.3 : 0.5;
    Tensor<T> x = random_tensor<T>(rng, c0, H, W, positive ? 0.1 : -1.0, 1.0);
    std::vector<T> w1(static_cast<std::size_t>(c1) * c0 * 9), b1(c1);
    std::vector<T> w2(static_cast<std::size_t>(c2) * c1 * 9), b2(c2);
    for (auto& v : w1) v = static_cast<T>(rng.uniform(lo_w, hi_w));
    for (auto& v : w2) v = static_cast<T>(rng.uniform(lo_w, hi_w));
    for (auto& v : b1) v = static_cast<T>(rng.uniform(0.05, 0.1));
    for (auto& v : b2) v = static_cast<T>(rng.uniform(0.05, 0.1));

    ConvWork<T> ws;
    const auto forward = [&](const std::vector<T>& w1v, const std::vector<T>& w2v) {
      Tensor<T> a, r, y;
      conv2d_forward(x, w1v.data(), b1.data(), c1, 3, 1, a, ws);
      relu_forward(a, r);
      conv2d_forward(r, w2v.data(), b2.data(), c2, 3, 1, y, ws);
      return y;
    };

    Tensor<T> a, r, y;
    conv2d_forward(x, w1.data(), b1.data(), c1, 3, 1, a, ws);
    relu_forward(a, r);
    conv2d_forward(r, w2.data(), b2.data(), c2, 3, 1, y, ws);
    Tensor<T> upstream = random_tensor<T>(rng, y.c, y.h, y.w);

    std::vector<T> dw1(w1.size(), T(0)), db1(b1.size(), T(0));
    std::vector<T> dw2(w2.size(), T(0)), db2(b2.size(), T(0));
    Tensor<T> dr;
    conv2d_backward(r, w2.data(), c2, 3, 1, upstream, &dr, dw2.data(), db2.data(), ws);
    relu_backward_mask(r, dr);
    conv2d_backward(x, w1.data(), c1, 3, 1, dr, static_cast<Tensor<T>*>(nullptr), dw1.data(), db1.data(), ws);

    double max_rel = 0.0;
    for (int trial = 0; trial < 40; ++trial) {
      const std::size_t i = rng.below(w1.size());
      std::vector<T> plus = w1, minus = w1;
      plus[i] += static_cast<T>(h_step);
      minus[i] -= static_cast<T>(h_step);
      const double fd =
          (weighted_sum(forward(plus, w2), upstream) - weighted_sum(forward(minus, w2), upstream)) /
          (2 * h_step);
      max_rel = std::max(max_rel, rel_err(fd, double(dw1[i])));
    }
    for (int trial = 0; trial < 40; ++trial) {
      const std::size_t i = rng.below(w2.size());
      std::vector<T> plus = w2, minus = w2;
      plus[i] += static_cast<T>(h_step);
      minus[i] -= static_cast<T>(h_step);
      const double fd =
          (weighted_sum(forward(w1, plus), upstream) - weighted_sum(forward(w1, minus), upstream)) /
          (2 * h_step);
      max_rel = std::max(max_rel, rel_err(fd, double(dw2[i])));
    }
    CHECK(max_rel < tol);
  };
  run(double{}, 1e-6, 1e-6, 131, false);
  run(float{}, 5e-3, 1e-3, 137, true);
}

TEST_CASE("zero-parameter network predicts zero error and 0.5 attention") {
  NetConfig config{16, 7, 32, 64, 1};
  CorrectionNet<float> net(config);
  std::vector<float> zeros(net.param_count(), 0.0f);
  net.set_params(zeros);

  SplitMix64 rng(139);
  Tensor<float> input = random_tensor<float>(rng, 7, 32, 64, 0.0, 1.0);
  NetCache<float> cache;
  net.forward(input, cache);
  const NetOutput out = CorrectionNetF::split_output(cache);
  for (int v = 0; v < 32; ++v)
    for (int u = 0; u < 64; ++u) {
      CHECK(out.g_star.at(u, v) == 0.0f);
      CHECK(out.attention.at(u, v) == 0.5f);
    }
}

TEST_CASE("attention stays in (0, 1) and forward is deterministic") {
  NetConfig config{16, 7, 32, 64, 7};
  CorrectionNet<float> net(config);
  net.initialize_he(7);
  SplitMix64 rng(149);
  Tensor<float> input = random_tensor<float>(rng, 7, 32, 64, 0.0, 1.0);
  NetCache<float> cache1, cache2;
  net.forward(input, cache1);
  net.forward(input, cache2);
  const NetOutput a = CorrectionNetF::split_output(cache1);
  const NetOutput b = CorrectionNetF::split_output(cache2);
  for (int v = 0; v < 32; ++v)
    for (int u = 0; u < 64; ++u) {
      CHECK(a.attention.at(u, v) >= 0.0f);
      CHECK(a.attention.at(u, v) <= 1.0f);
      CHECK(a.g_star.at(u, v) == b.g_star.at(u, v));
      CHECK(a.attention.at(u, v) == b.attention.at(u, v));
    }
}

TEST_CASE("full network backward matches finite differences (double)") {
  NetConfig config{64, 7, 32, 64, 3};
  CorrectionNet<double> net(config);
  net.initialize_he(3);

  SplitMix64 rng(151);
  Tensor<double> input = random_tensor<double>(rng, 7, 32, 64, 0.0, 1.0);
  NetCache<double> cache;
  net.forward(input, cache);

  Tensor<double> d_g = random_tensor<double>(rng, 1, 32, 64);
  Tensor<double> d_a = random_tensor<double>(rng, 1, 32, 64);
  std::vector<double> grads(net.param_count(), 0.0);
  net.backward(cache, d_g, d_a, grads);

  const auto loss = [&]() {
    NetCache<double> c2;
    net.forward(input, c2);
    double acc = 0.0;
    const double* g = c2.head.channel(0);
    const double* a = c2.attention.channel(0);
    for (std::size_t i = 0; i < c2.attention.plane(); ++i)
      acc += g[i] * d_g.v[i] + a[i] * d_a.v[i];
    return acc;
  };

  const double h = 1e-6;
  int checked = 0;
  double max_rel = 0.0;
  for (int trial = 0; trial < 400 && checked < 30; ++trial) {
    const std::size_t i = rng.below(net.param_count());
    auto params = net.params();
    const double original = params[i];
    params[i] = original + h;
    const double plus = loss();
    params[i] = original - h;
    const double minus = loss();
    params[i] = original;
    const double fd = (plus - minus) / (2 * h);
    if (std::abs(fd) < 1e-8 && std::abs(grads[i]) < 1e-8) continue;
    max_rel = std::max(max_rel, rel_err(fd, grads[i]));
    ++checked;
  }
  CHECK(checked >= 30);
  CHECK(max_rel < 1e-5);
}

TEST_CASE("learning rate schedule endpoints and midpoint") {
  TrainConfig config;  // published defaults
  CHECK(learning_rate(config, 0) == doctest::Approx(1e-4));
  CHECK(learning_rate(config, 120000) == doctest::Approx(5e-6));
  CHECK(learning_rate(config, 500000) == doctest::Approx(5e-6));
  CHECK(learning_rate(config, 60000) == doctest::Approx((1e-4 + 5e-6) / 2.0));
}

TEST_CASE("gradient clipping scales by clip/norm") {
  std::vector<float> grads = {120.0f, 0.0f, 160.0f, 0.0f};  // norm 200
  const double norm = clip_global_norm(grads, 80.0);
  CHECK(norm == doctest::Approx(200.0));
  CHECK(grads[0] == doctest::Approx(120.0f * 0.4));
  CHECK(grads[2] == doctest::Approx(160.0f * 0.4));
  // norm 160 -> scaled by 0.5 at clip 80
  std::vector<float> g2 = {160.0f};
  clip_global_norm(g2, 80.0);
  CHECK(g2[0] == doctest::Approx(80.0f));
  std::vector<float> small = {1.0f, 2.0f};
  clip_global_norm(small, 80.0);
  CHECK(small[0] == 1.0f);
}

TEST_CASE("adam update moves against the gradient with bias correction") {
  std::vector<float> params = {1.0f};
  std::vector<float> grads = {0.5f};
  AdamState state;
  state.resize(1);
  adam_update(params, grads, state, 1e-2, 0.9, 0.999, 1e-8);
  // first step: mh = g, vh = g^2 -> update ~ -eta * sign(g)
  CHECK(params[0] == doctest::Approx(1.0 - 1e-2).epsilon(1e-4));
  CHECK(state.step == 1);
}

TEST_CASE("checkpoint save/load round-trips parameters bit-exactly") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "meshcorr_ckpt_test";
  fs::create_directories(dir);
  const std::string path = (dir / "net.mcp").string();

  NetConfig config{16, 7, 32, 64, 21};
  CorrectionNetF net(config);
  net.initialize_he(21);
  AdamState adam;
  adam.resize(net.param_count());
  adam.step = 17;
  SplitMix64 rng(157);
  for (auto& m : adam.m) m = rng.uniform(-1, 1);
  for (auto& v : adam.v) v = rng.uniform(0, 1);
  save_checkpoint(path, net, &adam, 1234);

  CorrectionNetF loaded(config);
  AdamState adam2;
  const std::int64_t step = load_checkpoint(path, loaded, &adam2);
  CHECK(step == 1234);
  CHECK(adam2.step == 17);
  for (std::size_t i = 0; i < net.param_count(); ++i) CHECK(loaded.params()[i] == net.params()[i]);
  for (std::size_t i = 0; i < adam.m.size(); ++i) {
    CHECK(adam2.m[i] == adam.m[i]);
    CHECK(adam2.v[i] == adam.v[i]);
  }

  // digest mismatch refused
  CorrectionNetF other(NetConfig{32, 7, 32, 64, 21});
  CHECK_THROWS_AS(load_checkpoint(path, other, nullptr), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("stack_to_input normalization") {
  const Intrinsics k = test_camera(64, 32);
  const TriangleMesh mesh = make_mesh(
      {{-30, -30, 2}, {30, -30, 2}, {30, 30, 2}, {-30, 30, 2}}, {{0, 1, 2}, {0, 2, 3}});
  const MeshFeatureStack stack = rasterize(mesh, k, RigidTransform::identity());
  const Tensor<float> input = stack_to_input(stack);
  REQUIRE(input.c == 7);
  const std::size_t center = static_cast<std::size_t>(16) * 64 + 32;
  CHECK(input.channel(0)[center] == doctest::Approx(0.5));
  CHECK(input.channel(4)[center] ==
        doctest::Approx(std::log1p(stack.area.at(32, 16))));
  CHECK(input.channel(6)[center] ==
        doctest::Approx(stack.cam_angle.at(32, 16) / (M_PI / 2.0)));
}
