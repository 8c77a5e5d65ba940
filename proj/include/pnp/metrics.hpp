#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "pnp/forward_model.hpp"
#include "pnp/image.hpp"

namespace pnp {

struct QualityReport {
  double rsnr_db = 0.0;
  double ssim = 0.0;
  double residual_sq = 0.0;
  double discrepancy_ratio = 0.0;
};

// ||y - A x||^2
inline double residual_norm_sq(const ForwardOperator& op, const KSpaceData& y,
                               const ComplexImage& x) {
  const KSpaceData ax = apply_forward(op, x);
  double s = 0.0;
  for (std::size_t i = 0; i < y.data.size(); ++i)
    s += std::norm(y.data[i] - ax.data[i]);
  return s;
}

// Recovery SNR 10*log10(||x||^2 / ||xhat - x||^2); +inf on exact recovery.
inline double rsnr_db(const ComplexImage& x_true, const ComplexImage& x_hat) {
  if (!x_true.same_shape(x_hat))
    throw std::invalid_argument("rsnr_db: dimension mismatch");
  const double ref = norm_sq(x_true);
  if (ref == 0.0) throw std::invalid_argument("rsnr_db: reference image is zero");
  double err = 0.0;
  for (std::size_t i = 0; i < x_true.data.size(); ++i)
    err += std::norm(x_hat.data[i] - x_true.data[i]);
  if (err == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(ref / err);
}

namespace detail {

// separable 'valid' filter with a normalized kernel, rows then columns
inline std::vector<double> filter_valid(const std::vector<double>& img, int w,
                                        int h, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int ow = w - n + 1, oh = h - n + 1;
  std::vector<double> rows(static_cast<std::size_t>(ow) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i)
        s += k[i] * img[static_cast<std::size_t>(y) * w + x + i];
      rows[static_cast<std::size_t>(y) * ow + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i)
        s += k[i] * rows[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  return out;
}

}  // namespace detail

// Mean SSIM over valid 11x11 Gaussian windows (sigma 1.5), K1=0.01,
// K2=0.03, dynamic range = max of the reference image (1 if it is blank).
inline double ssim(const RealImage& ref, const RealImage& img) {
  if (!ref.same_shape(img)) throw std::invalid_argument("ssim: dimension mismatch");
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5;
  if (ref.width < kWin || ref.height < kWin)
    throw std::invalid_argument("ssim: image smaller than the 11x11 window");
  std::vector<double> kern(kWin);
  double ksum = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - (kWin - 1) / 2.0;
    kern[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    ksum += kern[i];
  }
  for (double& v : kern) v /= ksum;

  double range = 0.0;
  for (double v : ref.data) range = std::max(range, v);
  if (range <= 0.0) range = 1.0;
  const double c1 = (0.01 * range) * (0.01 * range);
  const double c2 = (0.03 * range) * (0.03 * range);

  const int w = ref.width, h = ref.height;
  std::vector<double> aa(ref.data.size()), bb(ref.data.size()), ab(ref.data.size());
  for (std::size_t i = 0; i < ref.data.size(); ++i) {
    aa[i] = ref.data[i] * ref.data[i];
    bb[i] = img.data[i] * img.data[i];
    ab[i] = ref.data[i] * img.data[i];
  }
  const auto mu1 = detail::filter_valid(ref.data, w, h, kern);
  const auto mu2 = detail::filter_valid(img.data, w, h, kern);
  const auto m11 = detail::filter_valid(aa, w, h, kern);
  const auto m22 = detail::filter_valid(bb, w, h, kern);
  const auto m12 = detail::filter_valid(ab, w, h, kern);

  double acc = 0.0;
  for (std::size_t i = 0; i < mu1.size(); ++i) {
    const double s11 = m11[i] - mu1[i] * mu1[i];
    const double s22 = m22[i] - mu2[i] * mu2[i];
    const double s12 = m12[i] - mu1[i] * mu2[i];
    acc += ((2.0 * mu1[i] * mu2[i] + c1) * (2.0 * s12 + c2)) /
           ((mu1[i] * mu1[i] + mu2[i] * mu2[i] + c1) * (s11 + s22 + c2));
  }
  return acc / static_cast<double>(mu1.size());
}

// ||y - A x||^2 / (beta * C * M * sigma^2)
inline double discrepancy_ratio(const KSpaceData& y, const ForwardOperator& op,
                                const ComplexImage& x, double beta) {
  if (y.sigma_sq <= 0.0)
    throw std::invalid_argument("discrepancy_ratio: sigma_sq must be positive");
  if (beta <= 0.0) throw std::invalid_argument("discrepancy_ratio: beta must be positive");
  return residual_norm_sq(op, y, x) /
         (beta * static_cast<double>(op.total_samples()) * y.sigma_sq);
}

}  // namespace pnp
