#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "pnp/image.hpp"

namespace pnp {
namespace detail {

constexpr double kPi = 3.141592653589793238462643383279502884;

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t next_pow2(std::size_t n) {
  std::size_t m = 1;
  while (m < n) m <<= 1;
  return m;
}

// In-place iterative radix-2 Cooley-Tukey, unnormalized.
// inverse=true uses the e^{+2*pi*i} kernel (no 1/n scaling).
inline void fft_pow2(std::vector<cplx>& a, bool inverse) {
  const std::size_t n = a.size();
  if (n <= 1) return;
  // bit-reversal permutation
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * kPi / static_cast<double>(len);
    const cplx wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      cplx w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const cplx u = a[i + k];
        const cplx v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

// Bluestein chirp-z for arbitrary length, unnormalized forward DFT.
inline void dft_bluestein(std::vector<cplx>& a) {
  const std::size_t n = a.size();
  const std::size_t m = next_pow2(2 * n - 1);
  // chirp[k] = exp(-i*pi*k^2/n); k^2 mod 2n keeps the argument exact
  std::vector<cplx> chirp(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t k2 = (k * k) % (2 * n);
    const double ang = -kPi * static_cast<double>(k2) / static_cast<double>(n);
    chirp[k] = cplx(std::cos(ang), std::sin(ang));
  }
  std::vector<cplx> u(m, cplx{}), v(m, cplx{});
  for (std::size_t k = 0; k < n; ++k) u[k] = a[k] * chirp[k];
  v[0] = std::conj(chirp[0]);
  for (std::size_t k = 1; k < n; ++k) {
    v[k] = std::conj(chirp[k]);
    v[m - k] = std::conj(chirp[k]);
  }
  fft_pow2(u, false);
  fft_pow2(v, false);
  for (std::size_t i = 0; i < m; ++i) u[i] *= v[i];
  fft_pow2(u, true);
  const double scale = 1.0 / static_cast<double>(m);
  for (std::size_t k = 0; k < n; ++k) a[k] = u[k] * scale * chirp[k];
}

// Unnormalized 1-D DFT of any length.
inline void dft_1d(std::vector<cplx>& a, bool inverse) {
  if (is_pow2(a.size())) {
    fft_pow2(a, inverse);
    return;
  }
  if (!inverse) {
    dft_bluestein(a);
  } else {
    // unnormalized inverse = conj o forward o conj
    for (auto& z : a) z = std::conj(z);
    dft_bluestein(a);
    for (auto& z : a) z = std::conj(z);
  }
}

// fftshift axis map: bin 0 (DC) lands on bin floor(n/2). Used as the
// scatter destination in the forward transform and the gather source in
// the inverse, which makes the two exact inverses of each other.
inline std::size_t shift_index(std::size_t i, std::size_t n) {
  return (i + n / 2) % n;
}

}  // namespace detail

// Unitary centered 2-D DFT. Forward output has DC at (width/2, height/2);
// ifft2_centered is the exact inverse and the adjoint. Any image size is
// supported (radix-2 fast path, Bluestein otherwise).
inline ComplexImage fft2_centered(const ComplexImage& x) {
  const int w = x.width, h = x.height;
  ComplexImage out(w, h);
  std::vector<cplx> row(static_cast<std::size_t>(w));
  ComplexImage tmp(w, h);
  for (int y = 0; y < h; ++y) {
    for (int i = 0; i < w; ++i) row[i] = x.at(i, y);
    detail::dft_1d(row, false);
    for (int i = 0; i < w; ++i) tmp.at(i, y) = row[i];
  }
  std::vector<cplx> col(static_cast<std::size_t>(h));
  for (int i = 0; i < w; ++i) {
    for (int y = 0; y < h; ++y) col[y] = tmp.at(i, y);
    detail::dft_1d(col, false);
    for (int y = 0; y < h; ++y) tmp.at(i, y) = col[y];
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(w) * h);
  for (int y = 0; y < h; ++y) {
    const std::size_t ys = detail::shift_index(static_cast<std::size_t>(y), h);
    for (int i = 0; i < w; ++i) {
      const std::size_t is = detail::shift_index(static_cast<std::size_t>(i), w);
      out.at(static_cast<int>(is), static_cast<int>(ys)) = tmp.at(i, y) * scale;
    }
  }
  return out;
}

inline ComplexImage ifft2_centered(const ComplexImage& X) {
  const int w = X.width, h = X.height;
  ComplexImage tmp(w, h);
  for (int y = 0; y < h; ++y) {
    const std::size_t ys = detail::shift_index(static_cast<std::size_t>(y), h);
    for (int i = 0; i < w; ++i) {
      const std::size_t is = detail::shift_index(static_cast<std::size_t>(i), w);
      tmp.at(i, y) = X.at(static_cast<int>(is), static_cast<int>(ys));
    }
  }
  std::vector<cplx> row(static_cast<std::size_t>(w));
  for (int y = 0; y < h; ++y) {
    for (int i = 0; i < w; ++i) row[i] = tmp.at(i, y);
    detail::dft_1d(row, true);
    for (int i = 0; i < w; ++i) tmp.at(i, y) = row[i];
  }
  std::vector<cplx> col(static_cast<std::size_t>(h));
  for (int i = 0; i < w; ++i) {
    for (int y = 0; y < h; ++y) col[y] = tmp.at(i, y);
    detail::dft_1d(col, true);
    for (int y = 0; y < h; ++y) tmp.at(i, y) = col[y];
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(w) * h);
  tmp *= scale;
  return tmp;
}

}  // namespace pnp
