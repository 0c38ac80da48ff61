#pragma once

#include "dan/image.hpp"

namespace dan {

// PSNR reported for identical images, and the ceiling for all others.
inline constexpr double kPsnrCap = 99.0;

struct MetricReport {
  double psnr = 0;  // dB
  double ssim = 0;  // [-1, 1]
  double ie = 0;    // mean absolute error, 0–255 scale
};

double psnr(const ImageU8& a, const ImageU8& b);

// Mean SSIM over all valid 11×11 Gaussian windows (σ = 1.5, K1 = 0.01,
// K2 = 0.03, L = 255). Both images must be at least 11×11.
double ssim(const ImageU8& a, const ImageU8& b);

// Interpolation error: mean absolute pixel difference.
double interp_error(const ImageU8& a, const ImageU8& b);

MetricReport evaluate(const ImageU8& prediction, const ImageU8& truth);

}  // namespace dan
