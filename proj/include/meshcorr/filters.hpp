#pragma once

#include "meshcorr/image.hpp"

namespace meshcorr {

// Separable Gaussian blur, replicate borders, kernel radius ceil(3*sigma).
ImageF gaussian_blur(const ImageF& image, double sigma);

// 3x3 Sobel, replicate borders. x is along width (u), y along height (v).
ImageF sobel_x(const ImageF& image);
ImageF sobel_y(const ImageF& image);

struct CannyParams {
  double sigma = 1.0;
  double low_percentile = 70.0;   // of Sobel magnitude over valid pixels
  double high_percentile = 90.0;
};

// Canny edges of a float image: Gaussian smoothing, Sobel gradients,
// non-maximum suppression, hysteresis with percentile thresholds computed
// over the valid pixels of the smoothed image's gradient magnitude.
ImageU8 canny_edges(const ImageF& image, const ImageU8& valid, const CannyParams& params = {});

// Exact Euclidean distance (in pixels) to the nearest set pixel, via the
// two-pass squared-distance transform on parabolas. Pixels of the set get 0.
// If the set is empty every pixel gets +inf.
ImageF euclidean_distance_transform(const ImageU8& set_pixels);

// Nearest-rank percentile (q in [0, 100]) of the given values; values may be
// reordered. Returns 0 for an empty vector.
double percentile_nearest_rank(std::vector<float>& values, double q);

}  // namespace meshcorr
