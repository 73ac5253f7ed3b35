#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "meshcorr/metrics.hpp"
#include "meshcorr/rng.hpp"
#include "test_support.hpp"

using namespace meshcorr;
using namespace meshcorr::testing;

TEST_CASE("thresholded accuracy examples") {
  SUBCASE("perfect prediction is 1 at every threshold") {
    ImageF d(8, 8, 0.4f);
    ImageU8 valid(8, 8, 1);
    for (double thr : default_metric_thresholds())
      CHECK(thresholded_accuracy(d, d, valid, thr) == 1.0);
  }
  SUBCASE("single pixel with ratio 1.2") {
    ImageF d_star(1, 1, 1.2f), d_hq(1, 1, 1.0f);
    ImageU8 valid(1, 1, 1);
    CHECK(thresholded_accuracy(d_star, d_hq, valid, 1.25) == 1.0);
    CHECK(thresholded_accuracy(d_star, d_hq, valid, 1.15) == 0.0);
    CHECK(thresholded_accuracy(d_star, d_hq, valid, 1.05) == 0.0);
  }
  SUBCASE("four pixels with known ratios") {
    const double ratios[4] = {1.01, 1.1, 1.3, 2.1};
    ImageF d_star(4, 1), d_hq(4, 1, 1.0f);
    ImageU8 valid(4, 1, 1);
    for (int u = 0; u < 4; ++u) d_star.at(u, 0) = static_cast<float>(ratios[u]);
    CHECK(thresholded_accuracy(d_star, d_hq, valid, 1.25) == doctest::Approx(0.5));
    CHECK(thresholded_accuracy(d_star, d_hq, valid, 1.25 * 1.25 * 1.25) == doctest::Approx(0.75));
  }
  SUBCASE("empty evaluation set returns vacuous 1") {
    ImageF d(2, 2, 0.0f);
    ImageU8 valid(2, 2, 0);
    CHECK(thresholded_accuracy(d, d, valid, 1.25) == 1.0);
  }
}

TEST_CASE("imae and irmse") {
  SUBCASE("perfect prediction") {
    ImageF d(4, 4, 0.5f);
    ImageU8 valid(4, 4, 1);
    const ImaeIrmse r = imae_irmse(d, d, valid);
    CHECK(r.imae == 0.0);
    CHECK(r.irmse == 0.0);
  }
  SUBCASE("two-pixel example") {
    ImageF d_star(2, 1), d_hq(2, 1, 1.0f);
    ImageU8 valid(2, 1, 1);
    d_star.at(0, 0) = 1.1f;
    d_star.at(1, 0) = 0.7f;
    const ImaeIrmse r = imae_irmse(d_star, d_hq, valid);
    CHECK(r.imae == doctest::Approx(0.2).epsilon(1e-5));
    CHECK(r.irmse == doctest::Approx(std::sqrt(0.05)).epsilon(1e-5));
  }
  SUBCASE("constant error makes them equal") {
    ImageF d_star(4, 4, 0.8f), d_hq(4, 4, 0.5f);
    ImageU8 valid(4, 4, 1);
    const ImaeIrmse r = imae_irmse(d_star, d_hq, valid);
    CHECK(r.imae == doctest::Approx(0.3).epsilon(1e-5));
    CHECK(r.irmse == doctest::Approx(r.imae).epsilon(1e-5));
  }
  SUBCASE("empty set throws") {
    ImageF d(2, 2, 0.0f);
    ImageU8 valid(2, 2, 1);
    CHECK_THROWS_AS(imae_irmse(d, d, valid), std::runtime_error);
  }
}

TEST_CASE("gross error counts") {
  SUBCASE("perfect correction removes all input errors") {
    ImageF d_lq(4, 1), d_hq(4, 1, 1.0f);
    ImageU8 valid(4, 1, 1);
    for (int u = 0; u < 4; ++u) d_lq.at(u, 0) = 2.0f;
    const auto counts = gross_error_counts(d_lq, d_hq, d_hq, valid);
    for (const auto& [thr, g] : counts) {
      CHECK(g.input_incorrect == 4);
      CHECK(g.corrected_incorrect == 0);
      CHECK(g.reduction() == doctest::Approx(1.0));
    }
  }
  SUBCASE("identity correction has zero reduction") {
    ImageF d_lq(4, 1), d_hq(4, 1, 1.0f);
    ImageU8 valid(4, 1, 1);
    for (int u = 0; u < 4; ++u) d_lq.at(u, 0) = 1.4f;
    const auto counts = gross_error_counts(d_lq, d_lq, d_hq, valid);
    for (const auto& [thr, g] : counts) CHECK(g.reduction() == doctest::Approx(0.0));
  }
  SUBCASE("hand-built three-pixel case at thr 1.25") {
    ImageF d_lq(3, 1), d_star(3, 1), d_hq(3, 1, 1.0f);
    ImageU8 valid(3, 1, 1);
    d_lq.at(0, 0) = 1.3f;
    d_lq.at(1, 0) = 1.3f;
    d_lq.at(2, 0) = 1.01f;
    d_star.at(0, 0) = 1.3f;
    d_star.at(1, 0) = 1.1f;
    d_star.at(2, 0) = 1.01f;
    const auto counts = gross_error_counts(d_lq, d_star, d_hq, valid, {1.25});
    CHECK(counts.at(1.25).input_incorrect == 2);
    CHECK(counts.at(1.25).corrected_incorrect == 1);
    CHECK(counts.at(1.25).reduction() == doctest::Approx(0.5));
  }
}

TEST_CASE("metrics match brute-force computation on random images") {
  SplitMix64 rng(163);
  for (int trial = 0; trial < 100; ++trial) {
    ImageF d_star(8, 8), d_hq(8, 8), d_lq(8, 8);
    ImageU8 valid(8, 8);
    for (int v = 0; v < 8; ++v)
      for (int u = 0; u < 8; ++u) {
        d_star.at(u, v) = static_cast<float>(rng.uniform(-0.1, 2.0));
        d_hq.at(u, v) = rng.bernoulli(0.8) ? static_cast<float>(rng.uniform(0.05, 2.0)) : 0.0f;
        d_lq.at(u, v) = static_cast<float>(rng.uniform(0.0, 2.0));
        valid.at(u, v) = rng.bernoulli(0.9) ? 1 : 0;
      }

    for (double thr : default_metric_thresholds()) {
      std::size_t n = 0, correct = 0;
      for (int v = 0; v < 8; ++v)
        for (int u = 0; u < 8; ++u) {
          if (!valid.at(u, v) || d_hq.at(u, v) <= 0.0f || d_star.at(u, v) <= 0.0f) continue;
          ++n;
          const double ratio = std::max(double(d_hq.at(u, v)) / d_star.at(u, v),
                                        double(d_star.at(u, v)) / d_hq.at(u, v));
          if (ratio < thr) ++correct;
        }
      const double expect = n == 0 ? 1.0 : double(correct) / double(n);
      CHECK(thresholded_accuracy(d_star, d_hq, valid, thr) == doctest::Approx(expect));

      // gross counts tie out to n * (1 - delta)
      const auto counts = gross_error_counts(d_lq, d_star, d_hq, valid, {thr});
      CHECK(counts.at(thr).corrected_incorrect == n - correct);
    }

    double abs_sum = 0, sq_sum = 0;
    std::size_t n = 0;
    for (int v = 0; v < 8; ++v)
      for (int u = 0; u < 8; ++u) {
        if (!valid.at(u, v) || d_hq.at(u, v) <= 0.0f || d_star.at(u, v) <= 0.0f) continue;
        const double err = double(d_star.at(u, v)) - double(d_hq.at(u, v));
        abs_sum += std::abs(err);
        sq_sum += err * err;
        ++n;
      }
    if (n > 0) {
      const ImaeIrmse r = imae_irmse(d_star, d_hq, valid);
      CHECK(r.imae == doctest::Approx(abs_sum / double(n)));
      CHECK(r.irmse == doctest::Approx(std::sqrt(sq_sum / double(n))));
      CHECK(r.irmse >= r.imae - 1e-12);
    }
  }
}

TEST_CASE("delta is monotone in the threshold") {
  SplitMix64 rng(167);
  ImageF d_star(16, 16), d_hq(16, 16);
  ImageU8 valid(16, 16, 1);
  for (int v = 0; v < 16; ++v)
    for (int u = 0; u < 16; ++u) {
      d_star.at(u, v) = static_cast<float>(rng.uniform(0.05, 2.0));
      d_hq.at(u, v) = static_cast<float>(rng.uniform(0.05, 2.0));
    }
  double last = 0.0;
  for (double thr : default_metric_thresholds()) {
    const double delta = thresholded_accuracy(d_star, d_hq, valid, thr);
    CHECK(delta >= last);
    last = delta;
  }
}

TEST_CASE("metrics are invariant to pixel permutation") {
  SplitMix64 rng(173);
  ImageF d_star(8, 4), d_hq(8, 4), ps(8, 4), ph(8, 4);
  ImageU8 valid(8, 4, 1);
  std::vector<int> perm(32);
  for (int i = 0; i < 32; ++i) perm[i] = i;
  for (int i = 31; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
  for (int i = 0; i < 32; ++i) {
    d_star.data()[i] = static_cast<float>(rng.uniform(0.05, 2.0));
    d_hq.data()[i] = static_cast<float>(rng.uniform(0.05, 2.0));
  }
  for (int i = 0; i < 32; ++i) {
    ps.data()[i] = d_star.data()[perm[i]];
    ph.data()[i] = d_hq.data()[perm[i]];
  }
  for (double thr : default_metric_thresholds())
    CHECK(thresholded_accuracy(d_star, d_hq, valid, thr) ==
          thresholded_accuracy(ps, ph, valid, thr));
  const ImaeIrmse a = imae_irmse(d_star, d_hq, valid);
  const ImaeIrmse b = imae_irmse(ps, ph, valid);
  CHECK(a.imae == doctest::Approx(b.imae));
  CHECK(a.irmse == doctest::Approx(b.irmse));
}

TEST_CASE("accumulator pools pixels across images and serializes") {
  ImageF a_star(2, 1), a_hq(2, 1, 1.0f), a_lq(2, 1, 1.0f);
  ImageU8 valid(2, 1, 1);
  a_star.at(0, 0) = 1.0f;
  a_star.at(1, 0) = 2.0f;
  MetricAccumulator acc;
  acc.add(a_lq, a_star, a_hq, valid);
  acc.add(a_lq, a_star, a_hq, valid);
  const MetricReport report = acc.report();
  CHECK(report.n_valid == 4);
  CHECK(report.delta.at(1.25) == doctest::Approx(0.5));
  CHECK(report.gross_error_counts.at(1.25).corrected_incorrect == 2);
  CHECK(report.irmse >= report.imae);

  const std::string text = metric_report_to_text(report);
  CHECK(text.find("imae") != std::string::npos);
  const std::string csv = metric_report_to_csv(report);
  // header + one row per threshold
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
}
