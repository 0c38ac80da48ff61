#include "dan/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace dan {

namespace {

constexpr std::size_t kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = (0.01 * 255) * (0.01 * 255);
constexpr double kC2 = (0.03 * 255) * (0.03 * 255);

void require_same_size(const ImageU8& a, const ImageU8& b, const char* what) {
  if (!a.same_size(b))
    throw DimensionError(std::string(what) + ": image sizes differ (" + std::to_string(a.width) + "x" +
                         std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                         std::to_string(b.height) + ")");
  if (a.pixels.empty()) throw DimensionError(std::string(what) + ": empty image");
}

std::array<double, kWindow> gaussian_taps() {
  std::array<double, kWindow> taps{};
  double total = 0;
  for (std::size_t i = 0; i < kWindow; ++i) {
    const double x = static_cast<double>(i) - (kWindow - 1) / 2.0;
    taps[i] = std::exp(-x * x / (2 * kSigma * kSigma));
    total += taps[i];
  }
  for (auto& t : taps) t /= total;
  return taps;
}

// Separable 'valid' Gaussian filtering of a w×h plane.
std::vector<double> filter_valid(const std::vector<double>& plane, std::size_t w, std::size_t h,
                                 const std::array<double, kWindow>& taps) {
  const std::size_t ow = w - kWindow + 1, oh = h - kWindow + 1;
  std::vector<double> rows(ow * h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0;
      for (std::size_t t = 0; t < kWindow; ++t) acc += taps[t] * plane[y * w + x + t];
      rows[y * ow + x] = acc;
    }
  std::vector<double> out(ow * oh);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0;
      for (std::size_t t = 0; t < kWindow; ++t) acc += taps[t] * rows[(y + t) * ow + x];
      out[y * ow + x] = acc;
    }
  return out;
}

}  // namespace

double psnr(const ImageU8& a, const ImageU8& b) {
  require_same_size(a, b, "psnr");
  double sq = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = static_cast<double>(a.pixels[i]) - b.pixels[i];
    sq += d * d;
  }
  const double mse = sq / static_cast<double>(a.pixels.size());
  if (mse == 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / mse));
}

double ssim(const ImageU8& a, const ImageU8& b) {
  require_same_size(a, b, "ssim");
  if (a.width < kWindow || a.height < kWindow)
    throw DimensionError("ssim needs images of at least 11x11, got " + std::to_string(a.width) + "x" +
                         std::to_string(a.height));
  const std::size_t w = a.width, h = a.height, n = w * h;
  std::vector<double> pa(n), pb(n), aa(n), bb(n), ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    pa[i] = a.pixels[i];
    pb[i] = b.pixels[i];
    aa[i] = pa[i] * pa[i];
    bb[i] = pb[i] * pb[i];
    ab[i] = pa[i] * pb[i];
  }
  const auto taps = gaussian_taps();
  const auto mu_a = filter_valid(pa, w, h, taps);
  const auto mu_b = filter_valid(pb, w, h, taps);
  const auto e_aa = filter_valid(aa, w, h, taps);
  const auto e_bb = filter_valid(bb, w, h, taps);
  const auto e_ab = filter_valid(ab, w, h, taps);
  double total = 0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = e_aa[i] - ma * ma, vb = e_bb[i] - mb * mb, cov = e_ab[i] - ma * mb;
    total += ((2 * ma * mb + kC1) * (2 * cov + kC2)) / ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
  }
  return std::clamp(total / static_cast<double>(mu_a.size()), -1.0, 1.0);
}

double interp_error(const ImageU8& a, const ImageU8& b) {
  require_same_size(a, b, "interp_error");
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i)
    total += static_cast<std::uint64_t>(std::abs(static_cast<int>(a.pixels[i]) - static_cast<int>(b.pixels[i])));
  return static_cast<double>(total) / static_cast<double>(a.pixels.size());
}

MetricReport evaluate(const ImageU8& prediction, const ImageU8& truth) {
  return {psnr(prediction, truth), ssim(prediction, truth), interp_error(prediction, truth)};
}

}  // namespace dan
