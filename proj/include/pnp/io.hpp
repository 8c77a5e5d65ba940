#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <png.h>

#include "pnp/forward_model.hpp"
#include "pnp/image.hpp"
#include "pnp/solver.hpp"

// File formats. All binary payloads are little-endian float64; all text is
// ASCII with '.' decimal point regardless of host locale.
//
//   .cimg   "cimg W H\n"            + W*H interleaved (re, im) pairs
//   .cset   "cset C W H\n"          + C stacked .cimg payloads
//   .ksp    "ksp C M sigma_sq\n"    + C*M interleaved (re, im) pairs
//   mask    line 1: height, then one retained line index per line
//   .png    8-bit grayscale, magnitude scaled so the max maps to 255
//   .csv    doubles via %.17g (round-trips exactly), bools as 0/1

namespace pnp {
namespace io {

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace detail {

inline void append_f64_le(std::vector<unsigned char>& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<unsigned char>((bits >> (8 * i)) & 0xff));
}

inline double read_f64_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i)
    bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

inline void write_file(const std::filesystem::path& path, const std::string& header,
                       const std::vector<unsigned char>& payload) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << header;
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

// Reads the newline-terminated text header, then exactly `count` doubles.
inline std::vector<double> read_payload(std::istream& in,
                                        const std::filesystem::path& path,
                                        std::size_t count) {
  std::vector<unsigned char> raw(count * 8);
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size())
    throw std::runtime_error("truncated payload: " + path.string());
  in.peek();
  if (!in.eof())
    throw std::runtime_error("trailing bytes after payload: " + path.string());
  std::vector<double> vals(count);
  for (std::size_t i = 0; i < count; ++i)
    vals[i] = read_f64_le(raw.data() + i * 8);
  return vals;
}

inline void append_cplx_span(std::vector<unsigned char>& out,
                             const std::vector<cplx>& data) {
  for (const cplx& z : data) {
    append_f64_le(out, z.real());
    append_f64_le(out, z.imag());
  }
}

}  // namespace detail

inline void write_cimg(const std::filesystem::path& path, const ComplexImage& img) {
  std::vector<unsigned char> payload;
  payload.reserve(img.data.size() * 16);
  detail::append_cplx_span(payload, img.data);
  detail::write_file(path,
                     "cimg " + std::to_string(img.width) + " " +
                         std::to_string(img.height) + "\n",
                     payload);
}

inline ComplexImage read_cimg(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  std::string tag;
  int w = 0, h = 0;
  in >> tag >> w >> h;
  if (!in || tag != "cimg" || w <= 0 || h <= 0)
    throw std::runtime_error("bad cimg header: " + path.string());
  in.ignore(2, '\n');
  const std::size_t n = static_cast<std::size_t>(w) * h;
  const auto vals = detail::read_payload(in, path, 2 * n);
  ComplexImage img(w, h);
  for (std::size_t i = 0; i < n; ++i)
    img.data[i] = cplx{vals[2 * i], vals[2 * i + 1]};
  return img;
}

inline void write_cset(const std::filesystem::path& path, const CoilSet& coils) {
  if (coils.maps.empty()) throw std::invalid_argument("write_cset: empty coil set");
  std::vector<unsigned char> payload;
  for (const ComplexImage& m : coils.maps) detail::append_cplx_span(payload, m.data);
  detail::write_file(path,
                     "cset " + std::to_string(coils.maps.size()) + " " +
                         std::to_string(coils.maps[0].width) + " " +
                         std::to_string(coils.maps[0].height) + "\n",
                     payload);
}

inline CoilSet read_cset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  std::string tag;
  int c = 0, w = 0, h = 0;
  in >> tag >> c >> w >> h;
  if (!in || tag != "cset" || c <= 0 || w <= 0 || h <= 0)
    throw std::runtime_error("bad cset header: " + path.string());
  in.ignore(2, '\n');
  const std::size_t n = static_cast<std::size_t>(w) * h;
  const auto vals = detail::read_payload(in, path, 2 * n * c);
  CoilSet coils;
  coils.num_coils = c;
  coils.maps.reserve(c);
  std::size_t off = 0;
  for (int i = 0; i < c; ++i) {
    ComplexImage m(w, h);
    for (std::size_t j = 0; j < n; ++j, off += 2)
      m.data[j] = cplx{vals[off], vals[off + 1]};
    coils.maps.push_back(std::move(m));
  }
  return coils;
}

inline void write_ksp(const std::filesystem::path& path, const KSpaceData& y) {
  std::vector<unsigned char> payload;
  payload.reserve(y.data.size() * 16);
  detail::append_cplx_span(payload, y.data);
  detail::write_file(path,
                     "ksp " + std::to_string(y.num_coils) + " " +
                         std::to_string(y.samples_per_coil) + " " +
                         format_double(y.sigma_sq) + "\n",
                     payload);
}

inline KSpaceData read_ksp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  std::string tag;
  int c = 0, m = 0;
  double sigma_sq = 0.0;
  in >> tag >> c >> m >> sigma_sq;
  if (!in || tag != "ksp" || c <= 0 || m <= 0)
    throw std::runtime_error("bad ksp header: " + path.string());
  in.ignore(2, '\n');
  const auto vals =
      detail::read_payload(in, path, 2 * static_cast<std::size_t>(c) * m);
  KSpaceData y;
  y.num_coils = c;
  y.samples_per_coil = m;
  y.sigma_sq = sigma_sq;
  y.data.resize(static_cast<std::size_t>(c) * m);
  for (std::size_t i = 0; i < y.data.size(); ++i)
    y.data[i] = cplx{vals[2 * i], vals[2 * i + 1]};
  return y;
}

inline void write_mask(const std::filesystem::path& path, const SamplingMask& mask) {
  std::ostringstream out;
  out << mask.height << "\n";
  for (int line : mask.retained_lines) out << line << "\n";
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f << out.str();
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

inline SamplingMask read_mask(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  SamplingMask mask;
  if (!(in >> mask.height))
    throw std::runtime_error("bad mask header: " + path.string());
  int line;
  while (in >> line) mask.retained_lines.push_back(line);
  if (!in.eof()) throw std::runtime_error("bad mask entry: " + path.string());
  pnp::detail::validate_mask(mask);
  return mask;
}

// Magnitude image as 8-bit grayscale; the maximum maps to 255 (all-zero
// images come out black).
inline void write_png_gray(const std::filesystem::path& path, const RealImage& img) {
  double peak = 0.0;
  for (double v : img.data) peak = std::max(peak, v);
  const double scale = peak > 0.0 ? 255.0 / peak : 0.0;
  std::vector<unsigned char> rows(static_cast<std::size_t>(img.width) * img.height);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double v = std::clamp(img.data[i] * scale, 0.0, 255.0);
    rows[i] = static_cast<unsigned char>(std::lround(v));
  }

  std::FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw std::runtime_error("cannot open for writing: " + path.string());
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    std::fclose(fp);
    throw std::runtime_error("png write failed: " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int yrow = 0; yrow < img.height; ++yrow)
    png_write_row(png, rows.data() + static_cast<std::size_t>(yrow) * img.width);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

inline constexpr const char* kTraceHeader =
    "iter,residual_sq,target,gamma1,rsnr_db,fp_residual,restart_fired";

inline std::string trace_csv(const IterationTrace& trace) {
  std::ostringstream out;
  out << kTraceHeader << "\n";
  for (const TraceRow& r : trace)
    out << r.iter << "," << format_double(r.residual_sq) << ","
        << format_double(r.target) << "," << format_double(r.gamma1) << ","
        << format_double(r.rsnr_db) << "," << format_double(r.fp_residual) << ","
        << (r.restart_fired ? 1 : 0) << "\n";
  return out.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

}  // namespace io
}  // namespace pnp
