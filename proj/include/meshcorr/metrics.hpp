#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "meshcorr/image.hpp"

namespace meshcorr {

// thr in {1.05, 1.15, 1.25, 1.25^2, 1.25^3}
std::vector<double> default_metric_thresholds();

struct GrossErrorCount {
  std::size_t input_incorrect = 0;
  std::size_t corrected_incorrect = 0;
  double reduction() const {
    return input_incorrect == 0
               ? 0.0
               : 1.0 - static_cast<double>(corrected_incorrect) / static_cast<double>(input_incorrect);
  }
};

struct MetricReport {
  std::map<double, double> delta;  // threshold -> accuracy
  double imae = 0.0;
  double irmse = 0.0;
  std::size_t n_valid = 0;    // |V'| for the prediction
  std::size_t n_excluded = 0; // valid pixels dropped because d_hq <= 0 or d_star <= 0
  std::map<double, GrossErrorCount> gross_error_counts;
};

// Pixel-pooled accumulator so a single V' spans a whole test set.
class MetricAccumulator {
 public:
  explicit MetricAccumulator(std::vector<double> thresholds = default_metric_thresholds());

  void add(const ImageF& d_lq, const ImageF& d_star, const ImageF& d_hq, const ImageU8& valid);
  MetricReport report() const;  // throws std::runtime_error if V' is empty

 private:
  std::vector<double> thresholds_;
  std::vector<std::size_t> star_incorrect_;
  std::vector<std::size_t> input_incorrect_;
  double abs_sum_ = 0.0;
  double sq_sum_ = 0.0;
  std::size_t n_star_ = 0;   // |V'| for d_star
  std::size_t n_input_ = 0;  // |V'| for d_lq
  std::size_t n_excluded_ = 0;
};

// Fraction of V' = valid & d_hq > 0 & d_star > 0 whose two-sided ratio is
// below thr. Returns 1 when V' is empty (vacuous truth).
double thresholded_accuracy(const ImageF& d_star, const ImageF& d_hq, const ImageU8& valid,
                            double thr);

struct ImaeIrmse {
  double imae = 0.0;
  double irmse = 0.0;
};

// Throws std::runtime_error when V' is empty.
ImaeIrmse imae_irmse(const ImageF& d_star, const ImageF& d_hq, const ImageU8& valid);

std::map<double, GrossErrorCount> gross_error_counts(
    const ImageF& d_lq, const ImageF& d_star, const ImageF& d_hq, const ImageU8& valid,
    const std::vector<double>& thresholds = default_metric_thresholds());

// Flat key-value text serialization.
std::string metric_report_to_text(const MetricReport& report);
// CSV with one row per threshold: thr,delta,input_incorrect,corrected_incorrect,reduction
std::string metric_report_to_csv(const MetricReport& report);

}  // namespace meshcorr
