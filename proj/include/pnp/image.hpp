#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace pnp {

using cplx = std::complex<double>;

// Row-major complex image; data[y*width + x].
struct ComplexImage {
  int width = 0;
  int height = 0;
  std::vector<cplx> data;

  ComplexImage() = default;
  ComplexImage(int w, int h) : width(w), height(h) {
    if (w <= 0 || h <= 0)
      throw std::invalid_argument("ComplexImage: dimensions must be positive");
    data.assign(static_cast<std::size_t>(w) * h, cplx{});
  }

  std::size_t size() const { return data.size(); }
  cplx& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  const cplx& at(int x, int y) const {
    return data[static_cast<std::size_t>(y) * width + x];
  }
  bool same_shape(const ComplexImage& o) const {
    return width == o.width && height == o.height;
  }

  ComplexImage& operator+=(const ComplexImage& o) {
    for (std::size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
    return *this;
  }
  ComplexImage& operator-=(const ComplexImage& o) {
    for (std::size_t i = 0; i < data.size(); ++i) data[i] -= o.data[i];
    return *this;
  }
  ComplexImage& operator*=(double s) {
    for (auto& v : data) v *= s;
    return *this;
  }
};

inline ComplexImage operator+(ComplexImage a, const ComplexImage& b) { return a += b; }
inline ComplexImage operator-(ComplexImage a, const ComplexImage& b) { return a -= b; }
inline ComplexImage operator*(double s, ComplexImage a) { return a *= s; }

// Row-major real image (magnitudes, metrics inputs).
struct RealImage {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  RealImage() = default;
  RealImage(int w, int h) : width(w), height(h) {
    if (w <= 0 || h <= 0)
      throw std::invalid_argument("RealImage: dimensions must be positive");
    data.assign(static_cast<std::size_t>(w) * h, 0.0);
  }
  double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  const double& at(int x, int y) const {
    return data[static_cast<std::size_t>(y) * width + x];
  }
  bool same_shape(const RealImage& o) const {
    return width == o.width && height == o.height;
  }
};

inline double norm_sq(const std::vector<cplx>& v) {
  double s = 0.0;
  for (const auto& z : v) s += std::norm(z);
  return s;
}

// <a,b> = sum conj(a_i) b_i
inline cplx dot(const std::vector<cplx>& a, const std::vector<cplx>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
  cplx s{};
  for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
  return s;
}

inline bool all_finite(const std::vector<cplx>& v) {
  for (const auto& z : v)
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
  return true;
}

inline double norm_sq(const ComplexImage& x) { return norm_sq(x.data); }
inline double norm_sq(const RealImage& x) {
  double s = 0.0;
  for (double v : x.data) s += v * v;
  return s;
}

inline RealImage magnitude(const ComplexImage& x) {
  RealImage m(x.width, x.height);
  for (std::size_t i = 0; i < x.data.size(); ++i) m.data[i] = std::abs(x.data[i]);
  return m;
}

}  // namespace pnp
