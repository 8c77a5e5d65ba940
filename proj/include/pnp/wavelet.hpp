#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace pnp {

// Orthonormal 2-D Haar transform, multi-level, in place on a row-major
// real array. Each level splits the current low-pass block into quadrants;
// level l requires width and height divisible by 2^l.

namespace detail {

const double kInvSqrt2 = 0.70710678118654752440084436210485;

inline void haar_rows(std::vector<double>& a, int width, int bw, int bh) {
  std::vector<double> tmp(bw);
  for (int y = 0; y < bh; ++y) {
    double* row = a.data() + static_cast<std::size_t>(y) * width;
    const int half = bw / 2;
    for (int i = 0; i < half; ++i) {
      tmp[i] = (row[2 * i] + row[2 * i + 1]) * kInvSqrt2;
      tmp[half + i] = (row[2 * i] - row[2 * i + 1]) * kInvSqrt2;
    }
    for (int i = 0; i < bw; ++i) row[i] = tmp[i];
  }
}

inline void haar_rows_inv(std::vector<double>& a, int width, int bw, int bh) {
  std::vector<double> tmp(bw);
  for (int y = 0; y < bh; ++y) {
    double* row = a.data() + static_cast<std::size_t>(y) * width;
    const int half = bw / 2;
    for (int i = 0; i < half; ++i) {
      tmp[2 * i] = (row[i] + row[half + i]) * kInvSqrt2;
      tmp[2 * i + 1] = (row[i] - row[half + i]) * kInvSqrt2;
    }
    for (int i = 0; i < bw; ++i) row[i] = tmp[i];
  }
}

inline void haar_cols(std::vector<double>& a, int width, int bw, int bh) {
  std::vector<double> tmp(bh);
  for (int x = 0; x < bw; ++x) {
    const int half = bh / 2;
    for (int i = 0; i < half; ++i) {
      const double p = a[static_cast<std::size_t>(2 * i) * width + x];
      const double q = a[static_cast<std::size_t>(2 * i + 1) * width + x];
      tmp[i] = (p + q) * kInvSqrt2;
      tmp[half + i] = (p - q) * kInvSqrt2;
    }
    for (int i = 0; i < bh; ++i) a[static_cast<std::size_t>(i) * width + x] = tmp[i];
  }
}

inline void haar_cols_inv(std::vector<double>& a, int width, int bw, int bh) {
  std::vector<double> tmp(bh);
  for (int x = 0; x < bw; ++x) {
    const int half = bh / 2;
    for (int i = 0; i < half; ++i) {
      tmp[2 * i] = (a[static_cast<std::size_t>(i) * width + x] +
                    a[static_cast<std::size_t>(half + i) * width + x]) *
                   kInvSqrt2;
      tmp[2 * i + 1] = (a[static_cast<std::size_t>(i) * width + x] -
                        a[static_cast<std::size_t>(half + i) * width + x]) *
                       kInvSqrt2;
    }
    for (int i = 0; i < bh; ++i) a[static_cast<std::size_t>(i) * width + x] = tmp[i];
  }
}

}  // namespace detail

inline void check_haar_dims(int width, int height, int levels) {
  if (levels < 1) throw std::invalid_argument("haar: levels must be >= 1");
  const int div = 1 << levels;
  if (width % div != 0 || height % div != 0)
    throw std::invalid_argument("haar: dimensions not divisible by 2^levels");
}

inline void haar2_forward(std::vector<double>& a, int width, int height, int levels) {
  check_haar_dims(width, height, levels);
  int bw = width, bh = height;
  for (int l = 0; l < levels; ++l) {
    detail::haar_rows(a, width, bw, bh);
    detail::haar_cols(a, width, bw, bh);
    bw /= 2;
    bh /= 2;
  }
}

inline void haar2_inverse(std::vector<double>& a, int width, int height, int levels) {
  check_haar_dims(width, height, levels);
  for (int l = levels - 1; l >= 0; --l) {
    const int bw = width >> l, bh = height >> l;
    detail::haar_cols_inv(a, width, bw, bh);
    detail::haar_rows_inv(a, width, bw, bh);
  }
}

}  // namespace pnp
