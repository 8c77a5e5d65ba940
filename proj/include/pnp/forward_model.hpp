#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pnp/fft.hpp"
#include "pnp/image.hpp"
#include "pnp/rng.hpp"

// Multi-coil subsampled-Fourier acquisition model
//
//   y_i = P F S_i x + w_i,   i = 1..C
//
// F is the unitary centered 2-D DFT from fft.hpp (DC at row height/2), so
// k-space line indices count rows in the centered view. P keeps whole lines
// (full rows of width samples). Coil maps are normalized so that
// sum_i |S_i[n]|^2 = 1 at every pixel, which together with the unitary F
// gives ||A||_2 <= 1, attained up to spectral leakage of the coil profiles.

namespace pnp {

struct CoilSet {
  int num_coils = 0;
  std::vector<ComplexImage> maps;
};

struct SamplingMask {
  int height = 0;                  // number of k-space lines in the full grid
  std::vector<int> retained_lines; // strictly increasing, in [0, height)

  int num_lines() const { return static_cast<int>(retained_lines.size()); }
  int samples_per_coil(int width) const { return num_lines() * width; }
};

struct KSpaceData {
  int num_coils = 0;
  int samples_per_coil = 0;
  std::vector<cplx> data;  // coil-major: coil i occupies [i*M, (i+1)*M)
  double sigma_sq = 0.0;   // noise variance per complex sample

  std::span<cplx> coil(int i) {
    return {data.data() + static_cast<std::size_t>(i) * samples_per_coil,
            static_cast<std::size_t>(samples_per_coil)};
  }
  std::span<const cplx> coil(int i) const {
    return {data.data() + static_cast<std::size_t>(i) * samples_per_coil,
            static_cast<std::size_t>(samples_per_coil)};
  }
  int total_samples() const { return num_coils * samples_per_coil; }
  bool same_shape(const KSpaceData& o) const {
    return num_coils == o.num_coils && samples_per_coil == o.samples_per_coil;
  }
};

namespace detail {

inline void validate_coils(const CoilSet& coils, int width, int height) {
  if (coils.num_coils < 1 ||
      coils.num_coils != static_cast<int>(coils.maps.size()))
    throw std::invalid_argument("CoilSet: num_coils does not match maps");
  for (const auto& m : coils.maps)
    if (m.width != width || m.height != height)
      throw std::invalid_argument("CoilSet: map dimensions mismatch");
  for (std::size_t n = 0; n < coils.maps[0].data.size(); ++n) {
    double s = 0.0;
    for (const auto& m : coils.maps) s += std::norm(m.data[n]);
    if (std::abs(s - 1.0) > 1e-10)
      throw std::invalid_argument(
          "CoilSet: maps not normalized (sum_i |S_i|^2 != 1 at pixel " +
          std::to_string(n) + ")");
  }
}

inline void validate_mask(const SamplingMask& mask) {
  if (mask.height <= 0) throw std::invalid_argument("SamplingMask: empty grid");
  if (mask.retained_lines.empty())
    throw std::invalid_argument("SamplingMask: no retained lines");
  int prev = -1;
  for (int r : mask.retained_lines) {
    if (r <= prev || r >= mask.height)
      throw std::invalid_argument("SamplingMask: lines must be strictly "
                                  "increasing and within range");
    prev = r;
  }
}

}  // namespace detail

struct ForwardOperator {
  CoilSet coils;
  SamplingMask mask;
  int width = 0;
  int height = 0;
  double op_norm_sq = 0.0;  // power-iteration estimate of ||A||_2^2

  ForwardOperator() = default;
  ForwardOperator(CoilSet c, SamplingMask m, int w, int h);

  int num_coils() const { return coils.num_coils; }
  int samples_per_coil() const { return mask.samples_per_coil(width); }
  int image_pixels() const { return width * height; }
  // CM in the discrepancy target beta*C*M*sigma^2
  int total_samples() const { return num_coils() * samples_per_coil(); }
};

inline KSpaceData apply_forward(const ForwardOperator& op, const ComplexImage& x) {
  if (x.width != op.width || x.height != op.height)
    throw std::invalid_argument("apply_forward: image dimensions mismatch");
  KSpaceData y;
  y.num_coils = op.num_coils();
  y.samples_per_coil = op.samples_per_coil();
  y.data.assign(static_cast<std::size_t>(y.total_samples()), cplx{});
  ComplexImage t(op.width, op.height);
  for (int i = 0; i < op.num_coils(); ++i) {
    const auto& map = op.coils.maps[i].data;
    for (std::size_t n = 0; n < t.data.size(); ++n) t.data[n] = map[n] * x.data[n];
    const ComplexImage T = fft2_centered(t);
    auto out = y.coil(i);
    std::size_t k = 0;
    for (int line : op.mask.retained_lines)
      for (int c = 0; c < op.width; ++c) out[k++] = T.at(c, line);
  }
  return y;
}

inline ComplexImage apply_adjoint(const ForwardOperator& op, const KSpaceData& y) {
  if (y.num_coils != op.num_coils() || y.samples_per_coil != op.samples_per_coil())
    throw std::invalid_argument("apply_adjoint: k-space shape mismatch");
  ComplexImage acc(op.width, op.height);
  ComplexImage buf(op.width, op.height);
  for (int i = 0; i < op.num_coils(); ++i) {
    std::fill(buf.data.begin(), buf.data.end(), cplx{});
    auto in = y.coil(i);
    std::size_t k = 0;
    for (int line : op.mask.retained_lines)
      for (int c = 0; c < op.width; ++c) buf.at(c, line) = in[k++];
    const ComplexImage t = ifft2_centered(buf);
    const auto& map = op.coils.maps[i].data;
    for (std::size_t n = 0; n < acc.data.size(); ++n)
      acc.data[n] += std::conj(map[n]) * t.data[n];
  }
  return acc;
}

// Power iteration on A^H A from a fixed-seed random start. Returns the
// estimate of ||A||_2^2 and caches it in the operator.
inline double estimate_operator_norm(ForwardOperator& op, int max_iters = 50,
                                     double tol = 1e-8) {
  if (max_iters < 1)
    throw std::invalid_argument("estimate_operator_norm: max_iters must be >= 1");
  Rng rng(0x5eed0f0e);
  ComplexImage q(op.width, op.height);
  for (auto& z : q.data) z = rng.gaussian_cplx();
  double qn = std::sqrt(norm_sq(q));
  if (qn == 0.0) return 0.0;
  q *= 1.0 / qn;
  double rayleigh = 0.0;
  for (int t = 0; t < max_iters; ++t) {
    const ComplexImage z = apply_adjoint(op, apply_forward(op, q));
    const double zn = std::sqrt(norm_sq(z));
    if (zn == 0.0) {
      op.op_norm_sq = 0.0;
      return 0.0;
    }
    const double r = std::real(dot(q.data, z.data));
    const bool converged = t > 0 && std::abs(r - rayleigh) <= tol * std::abs(r);
    rayleigh = r;
    if (converged) break;
    q = z;
    q *= 1.0 / zn;
  }
  op.op_norm_sq = rayleigh;
  return rayleigh;
}

inline ForwardOperator::ForwardOperator(CoilSet c, SamplingMask m, int w, int h)
    : coils(std::move(c)), mask(std::move(m)), width(w), height(h) {
  if (w <= 0 || h <= 0)
    throw std::invalid_argument("ForwardOperator: dimensions must be positive");
  detail::validate_coils(coils, w, h);
  detail::validate_mask(mask);
  if (mask.height != h)
    throw std::invalid_argument("ForwardOperator: mask grid does not match height");
  estimate_operator_norm(*this);
}

// ---------------------------------------------------------------------------
// Synthetic data generators. All are pure functions of their arguments.

enum class PhantomKind { UniformDisk, EllipsePhantom, EllipsePhantomPhase };

inline PhantomKind phantom_kind_from_string(const std::string& s) {
  if (s == "disk") return PhantomKind::UniformDisk;
  if (s == "ellipse") return PhantomKind::EllipsePhantom;
  if (s == "ellipse-phase") return PhantomKind::EllipsePhantomPhase;
  throw std::invalid_argument("unknown phantom kind: " + s);
}

inline std::string to_string(PhantomKind k) {
  switch (k) {
    case PhantomKind::UniformDisk: return "disk";
    case PhantomKind::EllipsePhantom: return "ellipse";
    case PhantomKind::EllipsePhantomPhase: return "ellipse-phase";
  }
  throw std::invalid_argument("unknown phantom kind");
}

// Piecewise-smooth ellipse phantom; magnitudes in [0,1], background 0.
// rotation_rad spins the whole layout, intensity_scale in (0,1] dims it;
// both exist so the harness can derive an ensemble of distinct test images.
inline ComplexImage generate_phantom(int width, int height, PhantomKind kind,
                                     double rotation_rad, double intensity_scale) {
  if (width < 8 || height < 8)
    throw std::invalid_argument("generate_phantom: dimensions must be >= 8");
  if (intensity_scale <= 0.0 || intensity_scale > 1.0)
    throw std::invalid_argument("generate_phantom: intensity_scale in (0,1]");
  struct Ellipse {
    double cx, cy, rx, ry, theta, delta;
  };
  // additive levels; positive deltas sum to 1 where all of them overlap
  static const Ellipse kEllipses[] = {
      {0.00, 0.00, 0.75, 0.92, 0.00, 0.70},
      {0.00, 0.02, 0.66, 0.84, 0.00, 0.10},
      {-0.24, -0.12, 0.20, 0.34, 0.31, -0.30},
      {0.24, -0.12, 0.16, 0.30, -0.31, -0.25},
      {0.00, 0.38, 0.14, 0.14, 0.00, 0.20},
      {0.00, -0.45, 0.05, 0.05, 0.00, -0.20},
  };
  ComplexImage img(width, height);
  const double cr = std::cos(rotation_rad), sr = std::sin(rotation_rad);
  for (int py = 0; py < height; ++py) {
    const double v = (2.0 * py + 1.0) / height - 1.0;
    for (int px = 0; px < width; ++px) {
      const double u = (2.0 * px + 1.0) / width - 1.0;
      // rotate sample point backwards == rotate phantom forwards
      const double ur = cr * u + sr * v;
      const double vr = -sr * u + cr * v;
      double val = 0.0;
      if (kind == PhantomKind::UniformDisk) {
        val = (ur * ur + vr * vr <= 0.8 * 0.8) ? 1.0 : 0.0;
      } else {
        for (const auto& e : kEllipses) {
          const double dx = ur - e.cx, dy = vr - e.cy;
          const double ct = std::cos(e.theta), st = std::sin(e.theta);
          const double xr = ct * dx + st * dy;
          const double yr = -st * dx + ct * dy;
          if ((xr / e.rx) * (xr / e.rx) + (yr / e.ry) * (yr / e.ry) <= 1.0)
            val += e.delta;
        }
      }
      cplx z(val * intensity_scale, 0.0);
      if (kind == PhantomKind::EllipsePhantomPhase) {
        // gentle ramp: spectral shift well under one k-space line
        const double phase = (detail::kPi / 3.0) * (u + 0.6 * v);
        z *= cplx(std::cos(phase), std::sin(phase));
      }
      img.at(px, py) = z;
    }
  }
  return img;
}

inline ComplexImage generate_phantom(int width, int height, PhantomKind kind) {
  return generate_phantom(width, height, kind, 0.0, 1.0);
}

// Smooth analytic coil profiles: Gaussian magnitude bumps centered on the
// image border at equal angular spacing, per-coil linear phase, then
// pixel-wise normalization to sum_i |S_i|^2 = 1.
inline CoilSet generate_coil_maps(int width, int height, int num_coils) {
  if (num_coils < 1)
    throw std::invalid_argument("generate_coil_maps: num_coils must be >= 1");
  if (width <= 0 || height <= 0)
    throw std::invalid_argument("generate_coil_maps: bad dimensions");
  CoilSet cs;
  cs.num_coils = num_coils;
  cs.maps.assign(num_coils, ComplexImage(width, height));
  const double sigma = 0.85, floor_mag = 0.08, phase_slope = 1.2;
  for (int i = 0; i < num_coils; ++i) {
    const double theta = 2.0 * detail::kPi * i / num_coils - detail::kPi / 2.0;
    const double cx = std::cos(theta), cy = std::sin(theta);
    auto& m = cs.maps[i];
    for (int py = 0; py < height; ++py) {
      const double v = (2.0 * py + 1.0) / height - 1.0;
      for (int px = 0; px < width; ++px) {
        const double u = (2.0 * px + 1.0) / width - 1.0;
        const double d2 = (u - cx) * (u - cx) + (v - cy) * (v - cy);
        const double mag = floor_mag + std::exp(-d2 / (2.0 * sigma * sigma));
        const double ph = phase_slope * (cx * u + cy * v);
        m.at(px, py) = mag * cplx(std::cos(ph), std::sin(ph));
      }
    }
  }
  for (std::size_t n = 0; n < cs.maps[0].data.size(); ++n) {
    double s = 0.0;
    for (const auto& m : cs.maps) s += std::norm(m.data[n]);
    const double inv = 1.0 / std::sqrt(s);
    for (auto& m : cs.maps) m.data[n] *= inv;
  }
  return cs;
}

// Cartesian line mask: the acs_lines centermost lines always kept, the rest
// of the ceil(height/R) budget drawn uniformly without replacement.
inline SamplingMask generate_cartesian_mask(int height, double acceleration,
                                            int acs_lines, std::uint64_t seed) {
  if (height <= 0) throw std::invalid_argument("generate_cartesian_mask: bad height");
  if (acceleration < 1.0)
    throw std::invalid_argument("generate_cartesian_mask: acceleration must be >= 1");
  if (acs_lines < 0)
    throw std::invalid_argument("generate_cartesian_mask: acs_lines must be >= 0");
  const int keep = static_cast<int>(std::ceil(height / acceleration));
  if (acs_lines > keep)
    throw std::invalid_argument(
        "generate_cartesian_mask: acs_lines exceeds the line budget");
  const int acs_start = height / 2 - acs_lines / 2;
  std::vector<int> lines;
  for (int r = acs_start; r < acs_start + acs_lines; ++r) lines.push_back(r);
  std::vector<int> pool;
  for (int r = 0; r < height; ++r)
    if (r < acs_start || r >= acs_start + acs_lines) pool.push_back(r);
  Rng rng(seed);
  auto extra = rng.sample_without_replacement(pool, keep - acs_lines);
  lines.insert(lines.end(), extra.begin(), extra.end());
  std::sort(lines.begin(), lines.end());
  SamplingMask mask{height, std::move(lines)};
  detail::validate_mask(mask);
  return mask;
}

// Circular complex white Gaussian noise at the prescribed measurement SNR:
//   sigma^2 = ||y||^2 / (CM * 10^(SNR/10))  per complex sample,
// real and imaginary parts each N(0, sigma^2/2). target_snr_db = +inf is the
// noise-free sentinel.
inline KSpaceData add_noise(const KSpaceData& y_clean, double target_snr_db,
                            std::uint64_t seed) {
  KSpaceData y = y_clean;
  if (std::isinf(target_snr_db) && target_snr_db > 0) {
    y.sigma_sq = 0.0;
    return y;
  }
  const double energy = norm_sq(y_clean.data);
  if (energy == 0.0)
    throw std::invalid_argument("add_noise: measurements are all zero, SNR undefined");
  const int cm = y_clean.total_samples();
  const double sigma_sq = energy / (cm * std::pow(10.0, target_snr_db / 10.0));
  const double part_std = std::sqrt(sigma_sq / 2.0);
  Rng rng(seed);
  for (auto& z : y.data) z += part_std * rng.gaussian_cplx();
  y.sigma_sq = sigma_sq;
  return y;
}

}  // namespace pnp
