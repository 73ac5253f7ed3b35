#include "meshcorr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace meshcorr {

std::vector<double> default_metric_thresholds() {
  return {1.05, 1.15, 1.25, 1.25 * 1.25, 1.25 * 1.25 * 1.25};
}

namespace {

inline bool ratio_correct(double d_star, double d_hq, double thr) {
  const double r = std::max(d_hq / d_star, d_star / d_hq);
  return r < thr;
}

}  // namespace

MetricAccumulator::MetricAccumulator(std::vector<double> thresholds)
    : thresholds_(std::move(thresholds)),
      star_incorrect_(thresholds_.size(), 0),
      input_incorrect_(thresholds_.size(), 0) {}

void MetricAccumulator::add(const ImageF& d_lq, const ImageF& d_star, const ImageF& d_hq,
                            const ImageU8& valid) {
  require_same_shape(d_lq, d_star, "MetricAccumulator");
  require_same_shape(d_lq, d_hq, "MetricAccumulator");
  require_same_shape(d_lq, valid, "MetricAccumulator");
  for (int v = 0; v < d_hq.height(); ++v) {
    for (int u = 0; u < d_hq.width(); ++u) {
      if (!valid.at(u, v)) continue;
      const double hq = d_hq.at(u, v);
      const double star = d_star.at(u, v);
      const double lq = d_lq.at(u, v);
      if (hq <= 0.0) {
        ++n_excluded_;
        continue;
      }
      if (star > 0.0) {
        ++n_star_;
        const double err = star - hq;
        abs_sum_ += std::abs(err);
        sq_sum_ += err * err;
        for (std::size_t t = 0; t < thresholds_.size(); ++t)
          if (!ratio_correct(star, hq, thresholds_[t])) ++star_incorrect_[t];
      } else {
        ++n_excluded_;
      }
      if (lq > 0.0) {
        ++n_input_;
        for (std::size_t t = 0; t < thresholds_.size(); ++t)
          if (!ratio_correct(lq, hq, thresholds_[t])) ++input_incorrect_[t];
      }
    }
  }
}

MetricReport MetricAccumulator::report() const {
  if (n_star_ == 0) throw std::runtime_error("MetricAccumulator: empty evaluation set");
  MetricReport r;
  r.n_valid = n_star_;
  r.n_excluded = n_excluded_;
  r.imae = abs_sum_ / static_cast<double>(n_star_);
  r.irmse = std::sqrt(sq_sum_ / static_cast<double>(n_star_));
  for (std::size_t t = 0; t < thresholds_.size(); ++t) {
    r.delta[thresholds_[t]] =
        1.0 - static_cast<double>(star_incorrect_[t]) / static_cast<double>(n_star_);
    GrossErrorCount g;
    g.input_incorrect = input_incorrect_[t];
    g.corrected_incorrect = star_incorrect_[t];
    r.gross_error_counts[thresholds_[t]] = g;
  }
  return r;
}

double thresholded_accuracy(const ImageF& d_star, const ImageF& d_hq, const ImageU8& valid,
                            double thr) {
  require_same_shape(d_star, d_hq, "thresholded_accuracy");
  require_same_shape(d_star, valid, "thresholded_accuracy");
  std::size_t n = 0, correct = 0;
  for (int v = 0; v < d_hq.height(); ++v)
    for (int u = 0; u < d_hq.width(); ++u) {
      if (!valid.at(u, v)) continue;
      const double hq = d_hq.at(u, v);
      const double star = d_star.at(u, v);
      if (hq <= 0.0 || star <= 0.0) continue;
      ++n;
      if (ratio_correct(star, hq, thr)) ++correct;
    }
  if (n == 0) return 1.0;
  return static_cast<double>(correct) / static_cast<double>(n);
}

ImaeIrmse imae_irmse(const ImageF& d_star, const ImageF& d_hq, const ImageU8& valid) {
  require_same_shape(d_star, d_hq, "imae_irmse");
  require_same_shape(d_star, valid, "imae_irmse");
  std::size_t n = 0;
  double abs_sum = 0.0, sq_sum = 0.0;
  for (int v = 0; v < d_hq.height(); ++v)
    for (int u = 0; u < d_hq.width(); ++u) {
      if (!valid.at(u, v)) continue;
      const double hq = d_hq.at(u, v);
      const double star = d_star.at(u, v);
      if (hq <= 0.0 || star <= 0.0) continue;
      ++n;
      const double err = star - hq;
      abs_sum += std::abs(err);
      sq_sum += err * err;
    }
  if (n == 0) throw std::runtime_error("imae_irmse: empty evaluation set");
  return {abs_sum / static_cast<double>(n), std::sqrt(sq_sum / static_cast<double>(n))};
}

std::map<double, GrossErrorCount> gross_error_counts(const ImageF& d_lq, const ImageF& d_star,
                                                     const ImageF& d_hq, const ImageU8& valid,
                                                     const std::vector<double>& thresholds) {
  require_same_shape(d_lq, d_star, "gross_error_counts");
  require_same_shape(d_lq, d_hq, "gross_error_counts");
  require_same_shape(d_lq, valid, "gross_error_counts");
  std::map<double, GrossErrorCount> out;
  for (double thr : thresholds) {
    GrossErrorCount g;
    for (int v = 0; v < d_hq.height(); ++v)
      for (int u = 0; u < d_hq.width(); ++u) {
        if (!valid.at(u, v)) continue;
        const double hq = d_hq.at(u, v);
        if (hq <= 0.0) continue;
        const double lq = d_lq.at(u, v);
        const double star = d_star.at(u, v);
        if (lq > 0.0 && !ratio_correct(lq, hq, thr)) ++g.input_incorrect;
        if (star > 0.0 && !ratio_correct(star, hq, thr)) ++g.corrected_incorrect;
      }
    out[thr] = g;
  }
  return out;
}

std::string metric_report_to_text(const MetricReport& report) {
  std::string out;
  char buf[160];
  for (const auto& [thr, acc] : report.delta) {
    std::snprintf(buf, sizeof(buf), "delta_%.6g %.10g\n", thr, acc);
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "imae %.10g\nirmse %.10g\nn_valid %zu\nn_excluded %zu\n",
                report.imae, report.irmse, report.n_valid, report.n_excluded);
  out += buf;
  for (const auto& [thr, g] : report.gross_error_counts) {
    std::snprintf(buf, sizeof(buf), "gross_input_%.6g %zu\ngross_corrected_%.6g %zu\n", thr,
                  g.input_incorrect, thr, g.corrected_incorrect);
    out += buf;
  }
  return out;
}

std::string metric_report_to_csv(const MetricReport& report) {
  std::string out = "threshold,delta,input_incorrect,corrected_incorrect,reduction\n";
  char buf[160];
  for (const auto& [thr, g] : report.gross_error_counts) {
    const double delta = report.delta.count(thr) ? report.delta.at(thr) : 0.0;
    std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%zu,%zu,%.10g\n", thr, delta, g.input_incorrect,
                  g.corrected_incorrect, g.reduction());
    out += buf;
  }
  return out;
}

}  // namespace meshcorr
