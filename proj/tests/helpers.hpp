#pragma once

#include <atomic>
#include <filesystem>
#include <string>
#include <vector>

#include "pnp/denoiser.hpp"
#include "pnp/forward_model.hpp"
#include "pnp/image.hpp"
#include "pnp/rng.hpp"

namespace testutil {

// Fresh scratch directory, removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("pnp-test-" + tag + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline pnp::ComplexImage random_image(int w, int h, std::uint64_t seed) {
  pnp::Rng rng(seed);
  pnp::ComplexImage img(w, h);
  for (auto& z : img.data) z = rng.gaussian_cplx();
  return img;
}

inline pnp::RealImage random_real_image(int w, int h, std::uint64_t seed,
                                        double lo = 0.0, double hi = 1.0) {
  pnp::Rng rng(seed);
  pnp::RealImage img(w, h);
  for (auto& v : img.data) v = lo + (hi - lo) * rng.uniform();
  return img;
}

// Random complex maps, pixel-wise normalized to sum_i |S_i|^2 = 1.
inline pnp::CoilSet random_coils(int w, int h, int c, std::uint64_t seed) {
  pnp::Rng rng(seed);
  pnp::CoilSet cs;
  cs.num_coils = c;
  cs.maps.assign(c, pnp::ComplexImage(w, h));
  for (auto& m : cs.maps)
    for (auto& z : m.data) z = rng.gaussian_cplx();
  for (std::size_t n = 0; n < cs.maps[0].data.size(); ++n) {
    double s = 0.0;
    for (const auto& m : cs.maps) s += std::norm(m.data[n]);
    if (s == 0.0) {
      cs.maps[0].data[n] = 1.0;
      s = 1.0;
    }
    const double inv = 1.0 / std::sqrt(s);
    for (auto& m : cs.maps) m.data[n] *= inv;
  }
  return cs;
}

inline pnp::CoilSet uniform_single_coil(int w, int h) {
  pnp::CoilSet cs;
  cs.num_coils = 1;
  cs.maps.assign(1, pnp::ComplexImage(w, h));
  for (auto& z : cs.maps[0].data) z = 1.0;
  return cs;
}

inline pnp::SamplingMask full_mask(int h) {
  pnp::SamplingMask m;
  m.height = h;
  for (int i = 0; i < h; ++i) m.retained_lines.push_back(i);
  return m;
}

inline pnp::SamplingMask mask_of(int h, std::vector<int> lines) {
  return pnp::SamplingMask{h, std::move(lines)};
}

// Deliberately expansive map for exercising divergence paths; never shipped.
class ScaleDenoiser final : public pnp::Denoiser {
 public:
  explicit ScaleDenoiser(double gain) : gain_(gain) {}
  pnp::ComplexImage denoise(const pnp::ComplexImage& s) const override {
    pnp::ComplexImage out = s;
    out *= gain_;
    return out;
  }
  std::string descriptor() const override { return "scale"; }

 private:
  double gain_;
};

}  // namespace testutil
