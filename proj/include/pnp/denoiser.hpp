#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "pnp/fft.hpp"
#include "pnp/image.hpp"
#include "pnp/wavelet.hpp"

namespace pnp {

// Pluggable denoiser f(.) of the PnP iteration. Implementations must be
// deterministic, immutable after construction, and preserve dimensions.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual ComplexImage denoise(const ComplexImage& s) const = 0;
  virtual std::string descriptor() const = 0;
};

class IdentityDenoiser final : public Denoiser {
 public:
  ComplexImage denoise(const ComplexImage& s) const override { return s; }
  std::string descriptor() const override { return "identity"; }
};

// f = F^H diag(g) F with gains g in (0,1], indexed in the centered DFT
// layout of fft.hpp. Linear, nonexpansive; its closed-form fixed points
// make it the workhorse of the solver oracles.
class LinearDiagonalDenoiser final : public Denoiser {
 public:
  explicit LinearDiagonalDenoiser(RealImage gains) : gains_(std::move(gains)) {
    for (double g : gains_.data)
      if (!(g > 0.0 && g <= 1.0))
        throw std::invalid_argument("LinearDiagonalDenoiser: gains must be in (0,1]");
  }

  ComplexImage denoise(const ComplexImage& s) const override {
    if (s.width != gains_.width || s.height != gains_.height)
      throw std::invalid_argument("LinearDiagonalDenoiser: dimension mismatch");
    ComplexImage X = fft2_centered(s);
    for (std::size_t i = 0; i < X.data.size(); ++i) X.data[i] *= gains_.data[i];
    return ifft2_centered(X);
  }

  std::string descriptor() const override { return "linear-diagonal"; }

  const RealImage& gains() const { return gains_; }

 private:
  RealImage gains_;
};

// Exact proximal map of tau*||W x||_1 for the orthonormal 2-D Haar frame W,
// applied to real and imaginary parts independently: transform, shrink every
// coefficient by tau, transform back.
class WaveletSoftThresholdDenoiser final : public Denoiser {
 public:
  WaveletSoftThresholdDenoiser(double threshold, int levels)
      : tau_(threshold), levels_(levels) {
    if (!(tau_ >= 0.0))
      throw std::invalid_argument("WaveletSoftThresholdDenoiser: threshold must be >= 0");
    if (levels_ < 1)
      throw std::invalid_argument("WaveletSoftThresholdDenoiser: levels must be >= 1");
  }

  ComplexImage denoise(const ComplexImage& s) const override {
    check_haar_dims(s.width, s.height, levels_);
    std::vector<double> re(s.size()), im(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      re[i] = s.data[i].real();
      im[i] = s.data[i].imag();
    }
    shrink_part(re, s.width, s.height);
    shrink_part(im, s.width, s.height);
    ComplexImage out(s.width, s.height);
    for (std::size_t i = 0; i < s.size(); ++i) out.data[i] = cplx(re[i], im[i]);
    return out;
  }

  std::string descriptor() const override {
    return "wavelet-soft-threshold(tau=" + std::to_string(tau_) +
           ", levels=" + std::to_string(levels_) + ")";
  }

  double threshold() const { return tau_; }
  int levels() const { return levels_; }

 private:
  void shrink_part(std::vector<double>& part, int w, int h) const {
    haar2_forward(part, w, h, levels_);
    for (double& c : part) {
      const double m = std::abs(c) - tau_;
      c = m > 0.0 ? (c < 0.0 ? -m : m) : 0.0;
    }
    haar2_inverse(part, w, h, levels_);
  }

  double tau_;
  int levels_;
};

}  // namespace pnp
