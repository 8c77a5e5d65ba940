#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <future>
#include <limits>
#include <memory>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pnp/denoiser.hpp"
#include "pnp/forward_model.hpp"
#include "pnp/io.hpp"
#include "pnp/metrics.hpp"
#include "pnp/rng.hpp"
#include "pnp/solver.hpp"

// Experiment plumbing: dataset synthesis, single solves, (algorithm, gamma1)
// sweeps, and aggregation. Everything is keyed by explicit seeds so a config
// reproduces its outputs byte-for-byte (wall-clock fields aside).

namespace pnp {

// Calibrated for the default 128x128 / 4-coil / R=4 / 20 dB setup.
inline constexpr double kDefaultWaveletThreshold = 0.22;

struct ExperimentConfig {
  int width = 128;
  int height = 128;
  PhantomKind phantom = PhantomKind::EllipsePhantomPhase;
  std::uint64_t phantom_seed = 0;  // 0 = canonical pose, else random rotation/scale
  int num_coils = 4;
  double acceleration = 4.0;
  int acs_lines = 4;
  std::uint64_t mask_seed = 1;
  double snr_db = 20.0;  // +inf = noise-free
  std::uint64_t noise_seed = 2;
  std::string denoiser = "wavelet";  // "identity" | "wavelet"
  double wavelet_threshold = kDefaultWaveletThreshold;
  int wavelet_levels = 3;
  Algorithm algorithm = Algorithm::ATM2;
  double gamma1_init = 1.0;
  std::vector<double> gamma1_grid;  // sweep cells; empty = default grid
  double beta = 0.95;
  double alpha = 0.2;
  int max_iters = 200;
  double rel_tol = 1e-6;
  std::string out_dir = "out";

  bool operator==(const ExperimentConfig&) const = default;

  SolverConfig solver() const {
    SolverConfig s;
    s.algorithm = algorithm;
    s.gamma1_init = gamma1_init;
    s.beta = beta;
    s.alpha = alpha;
    s.max_iters = max_iters;
    s.rel_tol = rel_tol;
    return s;
  }

  void validate() const {
    if (width < 1 || height < 1)
      throw std::invalid_argument("config: dimensions must be positive");
    if (num_coils < 1) throw std::invalid_argument("config: num_coils must be >= 1");
    if (acceleration < 1.0)
      throw std::invalid_argument("config: acceleration must be >= 1");
    if (acs_lines < 0) throw std::invalid_argument("config: acs_lines must be >= 0");
    if (std::isnan(snr_db)) throw std::invalid_argument("config: snr_db is NaN");
    if (denoiser != "identity" && denoiser != "wavelet")
      throw std::invalid_argument("config: unknown denoiser '" + denoiser + "'");
    if (denoiser == "wavelet") {
      if (!(wavelet_threshold >= 0.0))
        throw std::invalid_argument("config: wavelet_threshold must be >= 0");
      if (wavelet_levels < 1 || width % (1 << wavelet_levels) ||
          height % (1 << wavelet_levels))
        throw std::invalid_argument(
            "config: dimensions must be divisible by 2^wavelet_levels");
    }
    solver().validate();
    if (out_dir.empty()) throw std::invalid_argument("config: out_dir is empty");
  }
};

namespace harness_detail {

// JSON stores non-finite doubles as null; encode them as strings instead so
// configs with sentinel +inf round-trip.
inline nlohmann::json put_double(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

inline double get_double(const nlohmann::json& j) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    throw std::invalid_argument("bad numeric field: " + s);
  }
  return j.get<double>();
}

}  // namespace harness_detail

inline nlohmann::json to_json(const ExperimentConfig& c) {
  using harness_detail::put_double;
  nlohmann::json grid = nlohmann::json::array();
  for (double g : c.gamma1_grid) grid.push_back(put_double(g));
  return {{"width", c.width},
          {"height", c.height},
          {"phantom", to_string(c.phantom)},
          {"phantom_seed", c.phantom_seed},
          {"num_coils", c.num_coils},
          {"acceleration", put_double(c.acceleration)},
          {"acs_lines", c.acs_lines},
          {"mask_seed", c.mask_seed},
          {"snr_db", put_double(c.snr_db)},
          {"noise_seed", c.noise_seed},
          {"denoiser", c.denoiser},
          {"wavelet_threshold", put_double(c.wavelet_threshold)},
          {"wavelet_levels", c.wavelet_levels},
          {"algorithm", to_string(c.algorithm)},
          {"gamma1_init", put_double(c.gamma1_init)},
          {"gamma1_grid", grid},
          {"beta", put_double(c.beta)},
          {"alpha", put_double(c.alpha)},
          {"max_iters", c.max_iters},
          {"rel_tol", put_double(c.rel_tol)},
          {"out_dir", c.out_dir}};
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  using harness_detail::get_double;
  ExperimentConfig c;
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
  c.phantom = phantom_kind_from_string(j.at("phantom").get<std::string>());
  c.phantom_seed = j.at("phantom_seed").get<std::uint64_t>();
  c.num_coils = j.at("num_coils").get<int>();
  c.acceleration = get_double(j.at("acceleration"));
  c.acs_lines = j.at("acs_lines").get<int>();
  c.mask_seed = j.at("mask_seed").get<std::uint64_t>();
  c.snr_db = get_double(j.at("snr_db"));
  c.noise_seed = j.at("noise_seed").get<std::uint64_t>();
  c.denoiser = j.at("denoiser").get<std::string>();
  c.wavelet_threshold = get_double(j.at("wavelet_threshold"));
  c.wavelet_levels = j.at("wavelet_levels").get<int>();
  c.algorithm = algorithm_from_string(j.at("algorithm").get<std::string>());
  c.gamma1_init = get_double(j.at("gamma1_init"));
  c.gamma1_grid.clear();
  for (const auto& g : j.at("gamma1_grid")) c.gamma1_grid.push_back(get_double(g));
  c.beta = get_double(j.at("beta"));
  c.alpha = get_double(j.at("alpha"));
  c.max_iters = j.at("max_iters").get<int>();
  c.rel_tol = get_double(j.at("rel_tol"));
  c.out_dir = j.at("out_dir").get<std::string>();
  return c;
}

inline void write_config(const std::filesystem::path& path,
                         const ExperimentConfig& c) {
  io::write_text(path, to_json(c).dump(2) + "\n");
}

inline ExperimentConfig read_config(const std::filesystem::path& path) {
  return config_from_json(nlohmann::json::parse(io::read_text(path)));
}

struct Dataset {
  ComplexImage phantom;
  CoilSet coils;
  SamplingMask mask;
  KSpaceData y_clean;
  KSpaceData y_noisy;
};

// Phantom pose for a given seed: seed 0 is the canonical upright unit-scale
// phantom, anything else draws a rotation and an intensity scale.
inline std::pair<double, double> phantom_pose(std::uint64_t seed) {
  if (seed == 0) return {0.0, 1.0};
  Rng rng(seed ^ 0x9e3779b97f4a7c15ull);
  const double rotation = 2.0 * std::numbers::pi * rng.uniform();
  // Keep the drawn scale inside (0, 1] so phantom magnitudes stay in [0, 1].
  const double scale = 0.7 + 0.3 * rng.uniform();
  return {rotation, scale};
}

inline Dataset make_dataset(const ExperimentConfig& cfg) {
  cfg.validate();
  Dataset d;
  const auto [rotation, scale] = phantom_pose(cfg.phantom_seed);
  d.phantom = generate_phantom(cfg.width, cfg.height, cfg.phantom, rotation, scale);
  d.coils = generate_coil_maps(cfg.width, cfg.height, cfg.num_coils);
  d.mask = generate_cartesian_mask(cfg.height, cfg.acceleration, cfg.acs_lines,
                                   cfg.mask_seed);
  ForwardOperator op(d.coils, d.mask, cfg.width, cfg.height);
  d.y_clean = apply_forward(op, d.phantom);
  d.y_noisy = add_noise(d.y_clean, cfg.snr_db, cfg.noise_seed);
  return d;
}

// Writes phantom, coil maps, mask, clean and noisy k-space plus a manifest
// holding the shape, sigma^2, and N/M bookkeeping.
inline void synth(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  const Dataset d = make_dataset(cfg);
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  io::write_cimg(dir / "phantom.cimg", d.phantom);
  io::write_png_gray(dir / "phantom.png", magnitude(d.phantom));
  io::write_cset(dir / "coils.cset", d.coils);
  io::write_mask(dir / "mask.txt", d.mask);
  io::write_ksp(dir / "kspace_clean.ksp", d.y_clean);
  io::write_ksp(dir / "kspace_noisy.ksp", d.y_noisy);

  const int n = cfg.width * cfg.height;
  const int m = d.y_clean.samples_per_coil;
  nlohmann::json manifest = {
      {"config", to_json(cfg)},
      {"num_coils", d.y_clean.num_coils},
      {"samples_per_coil", m},
      {"pixels", n},
      {"undersampling", harness_detail::put_double(static_cast<double>(n) / m)},
      {"retained_lines", d.mask.num_lines()},
      {"sigma_sq", harness_detail::put_double(d.y_noisy.sigma_sq)},
      {"files",
       {{"phantom", "phantom.cimg"},
        {"coils", "coils.cset"},
        {"mask", "mask.txt"},
        {"kspace_clean", "kspace_clean.ksp"},
        {"kspace_noisy", "kspace_noisy.ksp"}}}};
  io::write_text(dir / "dataset.json", manifest.dump(2) + "\n");
}

inline Dataset load_dataset(const std::filesystem::path& dir,
                            const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  const auto manifest = nlohmann::json::parse(io::read_text(dir / "dataset.json"));
  const ExperimentConfig stored = config_from_json(manifest.at("config"));
  if (stored.width != cfg.width || stored.height != cfg.height ||
      stored.phantom != cfg.phantom || stored.phantom_seed != cfg.phantom_seed ||
      stored.num_coils != cfg.num_coils ||
      stored.acceleration != cfg.acceleration ||
      stored.acs_lines != cfg.acs_lines || stored.mask_seed != cfg.mask_seed ||
      !(stored.snr_db == cfg.snr_db ||
        (std::isinf(stored.snr_db) && std::isinf(cfg.snr_db))) ||
      stored.noise_seed != cfg.noise_seed)
    throw std::invalid_argument("dataset manifest inconsistent with config");
  Dataset d;
  const auto& files = manifest.at("files");
  d.phantom = io::read_cimg(dir / files.at("phantom").get<std::string>());
  d.coils = io::read_cset(dir / files.at("coils").get<std::string>());
  d.mask = io::read_mask(dir / files.at("mask").get<std::string>());
  d.y_clean = io::read_ksp(dir / files.at("kspace_clean").get<std::string>());
  d.y_noisy = io::read_ksp(dir / files.at("kspace_noisy").get<std::string>());
  if (d.phantom.width != cfg.width || d.phantom.height != cfg.height ||
      static_cast<int>(d.coils.maps.size()) != cfg.num_coils ||
      !d.y_clean.same_shape(d.y_noisy))
    throw std::invalid_argument("dataset files inconsistent with manifest");
  return d;
}

inline std::unique_ptr<Denoiser> make_denoiser(const ExperimentConfig& cfg) {
  if (cfg.denoiser == "identity") return std::make_unique<IdentityDenoiser>();
  if (cfg.denoiser == "wavelet")
    return std::make_unique<WaveletSoftThresholdDenoiser>(cfg.wavelet_threshold,
                                                          cfg.wavelet_levels);
  throw std::invalid_argument("unknown denoiser '" + cfg.denoiser + "'");
}

struct RunRecord {
  ExperimentConfig config;
  QualityReport quality;
  std::string trace_path;  // relative to the run directory
  double wall_seconds = 0.0;
  Termination termination = Termination::MaxIters;
  int iterations = 0;
  int diverged_at = -1;
  double final_gamma1 = 0.0;
  int iters_to_half_db = -1;
};

// First iteration whose rSNR is within 0.5 dB of the run's final rSNR;
// -1 when the trace carries no rSNR column.
inline int iterations_to_within_half_db(const IterationTrace& trace) {
  if (trace.empty()) return -1;
  const double final_rsnr = trace.back().rsnr_db;
  if (std::isnan(final_rsnr)) return -1;
  for (const TraceRow& r : trace) {
    const bool close = std::isinf(final_rsnr)
                           ? r.rsnr_db == final_rsnr
                           : std::abs(r.rsnr_db - final_rsnr) <= 0.5;
    if (close) return r.iter;
  }
  return trace.back().iter;
}

inline nlohmann::json to_json(const RunRecord& r) {
  using harness_detail::put_double;
  return {{"config", to_json(r.config)},
          {"quality",
           {{"rsnr_db", put_double(r.quality.rsnr_db)},
            {"ssim", put_double(r.quality.ssim)},
            {"residual_sq", put_double(r.quality.residual_sq)},
            {"discrepancy_ratio", put_double(r.quality.discrepancy_ratio)}}},
          {"trace", r.trace_path},
          {"wall_seconds", put_double(r.wall_seconds)},
          {"termination", to_string(r.termination)},
          {"iterations", r.iterations},
          {"diverged_at", r.diverged_at},
          {"final_gamma1", put_double(r.final_gamma1)},
          {"iters_to_half_db", r.iters_to_half_db}};
}

inline RunRecord run_record_from_json(const nlohmann::json& j) {
  using harness_detail::get_double;
  RunRecord r;
  r.config = config_from_json(j.at("config"));
  const auto& q = j.at("quality");
  r.quality.rsnr_db = get_double(q.at("rsnr_db"));
  r.quality.ssim = get_double(q.at("ssim"));
  r.quality.residual_sq = get_double(q.at("residual_sq"));
  r.quality.discrepancy_ratio = get_double(q.at("discrepancy_ratio"));
  r.trace_path = j.at("trace").get<std::string>();
  r.wall_seconds = get_double(j.at("wall_seconds"));
  const std::string t = j.at("termination").get<std::string>();
  r.termination = t == "converged"    ? Termination::Converged
                  : t == "max_iters"  ? Termination::MaxIters
                  : t == "diverged"   ? Termination::Diverged
                                      : throw std::invalid_argument(
                                          "bad termination: " + t);
  r.iterations = j.at("iterations").get<int>();
  r.diverged_at = j.at("diverged_at").get<int>();
  r.final_gamma1 = get_double(j.at("final_gamma1"));
  r.iters_to_half_db = j.at("iters_to_half_db").get<int>();
  return r;
}

// Solves on an in-memory dataset and writes trace/recon/record into run_dir.
inline RunRecord run_on_dataset(const ExperimentConfig& cfg, const Dataset& d,
                                const std::filesystem::path& run_dir) {
  namespace fs = std::filesystem;
  cfg.validate();
  ForwardOperator op(d.coils, d.mask, cfg.width, cfg.height);
  const auto denoiser = make_denoiser(cfg);

  const auto t0 = std::chrono::steady_clock::now();
  const SolveResult sr =
      run_solver(cfg.solver(), op, d.y_noisy, *denoiser, nullptr, &d.phantom);
  const auto t1 = std::chrono::steady_clock::now();

  RunRecord rec;
  rec.config = cfg;
  rec.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
  rec.termination = sr.termination;
  rec.iterations = sr.iterations;
  rec.diverged_at = sr.diverged_at;
  rec.final_gamma1 = sr.trace.empty() ? cfg.gamma1_init : sr.trace.back().gamma1;
  rec.iters_to_half_db = iterations_to_within_half_db(sr.trace);
  rec.trace_path = "trace.csv";
  rec.quality.rsnr_db = rsnr_db(d.phantom, sr.x);
  rec.quality.ssim = ssim(magnitude(d.phantom), magnitude(sr.x));
  rec.quality.residual_sq = residual_norm_sq(op, d.y_noisy, sr.x);
  rec.quality.discrepancy_ratio =
      d.y_noisy.sigma_sq > 0.0
          ? discrepancy_ratio(d.y_noisy, op, sr.x, cfg.beta)
          : std::numeric_limits<double>::quiet_NaN();

  fs::create_directories(run_dir);
  io::write_text(run_dir / "trace.csv", io::trace_csv(sr.trace));
  io::write_cimg(run_dir / "recon.cimg", sr.x);
  io::write_png_gray(run_dir / "recon.png", magnitude(sr.x));
  io::write_text(run_dir / "run.json", to_json(rec).dump(2) + "\n");
  return rec;
}

inline RunRecord run(const ExperimentConfig& cfg,
                     const std::filesystem::path& dataset_dir,
                     const std::filesystem::path& run_dir) {
  return run_on_dataset(cfg, load_dataset(dataset_dir, cfg), run_dir);
}

struct SweepCell {
  Algorithm algorithm;
  double gamma1;
  RunRecord record;
  bool failed = false;
  std::string error;
};

struct SweepResult {
  std::vector<SweepCell> cells;
  std::string summary_csv;
};

inline constexpr const char* kSummaryHeader =
    "algorithm,gamma1,rsnr_db,ssim,iterations,iters_to_half_db,termination";

namespace harness_detail {

inline SweepCell sweep_cell(const ExperimentConfig& base, const Dataset& d,
                            Algorithm algo, double gamma1,
                            const std::filesystem::path& cell_dir) {
  SweepCell cell;
  cell.algorithm = algo;
  cell.gamma1 = gamma1;
  try {
    ExperimentConfig cfg = base;
    cfg.algorithm = algo;
    cfg.gamma1_init = gamma1;
    cfg.gamma1_grid.clear();
    cfg.out_dir = cell_dir.string();
    cell.record = run_on_dataset(cfg, d, cell_dir);
  } catch (const std::exception& e) {
    cell.failed = true;
    cell.error = e.what();
  }
  return cell;
}

}  // namespace harness_detail

// One run per (algorithm, gamma1) cell, each in its own subdirectory of
// sweep_dir. Cells are independent; parallel=true fans them out on threads
// and yields the same cells as a serial pass. Failures (divergence included
// via termination, hard errors via `failed`) do not stop the sweep.
inline SweepResult sweep(const ExperimentConfig& base, const Dataset& d,
                         const std::vector<Algorithm>& algorithms,
                         const std::vector<double>& grid,
                         const std::filesystem::path& sweep_dir,
                         bool parallel = false) {
  if (algorithms.empty() || grid.empty())
    throw std::invalid_argument("sweep: empty algorithm list or gamma1 grid");
  namespace fs = std::filesystem;
  fs::create_directories(sweep_dir);

  struct Job {
    Algorithm algo;
    double gamma1;
    fs::path dir;
  };
  std::vector<Job> jobs;
  for (Algorithm algo : algorithms)
    for (std::size_t i = 0; i < grid.size(); ++i)
      jobs.push_back({algo, grid[i],
                      sweep_dir / (to_string(algo) + "_g" + std::to_string(i))});

  std::vector<SweepCell> cells(jobs.size());
  if (parallel) {
    std::vector<std::future<SweepCell>> futures;
    futures.reserve(jobs.size());
    for (const Job& j : jobs)
      futures.push_back(std::async(std::launch::async, [&base, &d, j] {
        return harness_detail::sweep_cell(base, d, j.algo, j.gamma1, j.dir);
      }));
    for (std::size_t i = 0; i < futures.size(); ++i) cells[i] = futures[i].get();
  } else {
    for (std::size_t i = 0; i < jobs.size(); ++i)
      cells[i] = harness_detail::sweep_cell(base, d, jobs[i].algo, jobs[i].gamma1,
                                            jobs[i].dir);
  }

  std::ostringstream csv;
  csv << kSummaryHeader << "\n";
  for (const SweepCell& c : cells) {
    if (c.failed) {
      csv << to_string(c.algorithm) << "," << io::format_double(c.gamma1)
          << ",nan,nan,0,-1,error\n";
      continue;
    }
    csv << to_string(c.algorithm) << "," << io::format_double(c.gamma1) << ","
        << io::format_double(c.record.quality.rsnr_db) << ","
        << io::format_double(c.record.quality.ssim) << "," << c.record.iterations
        << "," << c.record.iters_to_half_db << ","
        << to_string(c.record.termination) << "\n";
  }

  SweepResult result{std::move(cells), csv.str()};
  io::write_text(sweep_dir / "summary.csv", result.summary_csv);
  return result;
}

struct ReportRow {
  std::string algorithm;
  int runs = 0;
  int failures = 0;  // diverged runs, excluded from the means
  double mean_rsnr_db = std::numeric_limits<double>::quiet_NaN();
  double mean_ssim = std::numeric_limits<double>::quiet_NaN();
  double mean_iters_to_half_db = std::numeric_limits<double>::quiet_NaN();
};

inline constexpr const char* kReportHeader =
    "algorithm,runs,failures,mean_rsnr_db,mean_ssim,mean_iters_to_half_db";

// Per-algorithm means over a set of run records. Diverged runs count toward
// `failures` and are excluded from every mean.
inline std::vector<ReportRow> report(const std::vector<RunRecord>& records) {
  if (records.empty()) throw std::invalid_argument("report: no run records");
  std::vector<std::string> order;
  std::vector<ReportRow> rows;
  for (const RunRecord& r : records) {
    const std::string name = to_string(r.config.algorithm);
    auto it = std::find(order.begin(), order.end(), name);
    if (it == order.end()) {
      order.push_back(name);
      rows.push_back({name, 0, 0, 0.0, 0.0, 0.0});
      it = order.end() - 1;
    }
    ReportRow& row = rows[static_cast<std::size_t>(it - order.begin())];
    ++row.runs;
    if (r.termination == Termination::Diverged) {
      ++row.failures;
      continue;
    }
    row.mean_rsnr_db += r.quality.rsnr_db;
    row.mean_ssim += r.quality.ssim;
    row.mean_iters_to_half_db += r.iters_to_half_db;
  }
  for (ReportRow& row : rows) {
    const int kept = row.runs - row.failures;
    if (kept == 0) {
      row.mean_rsnr_db = row.mean_ssim = row.mean_iters_to_half_db =
          std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    row.mean_rsnr_db /= kept;
    row.mean_ssim /= kept;
    row.mean_iters_to_half_db /= kept;
  }
  return rows;
}

inline std::string report_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream out;
  out << kReportHeader << "\n";
  for (const ReportRow& r : rows)
    out << r.algorithm << "," << r.runs << "," << r.failures << ","
        << io::format_double(r.mean_rsnr_db) << "," << io::format_double(r.mean_ssim)
        << "," << io::format_double(r.mean_iters_to_half_db) << "\n";
  return out.str();
}

// Collects every run.json under `root` (recursively), sorted by path for
// deterministic ordering.
inline std::vector<RunRecord> collect_run_records(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  std::vector<fs::path> paths;
  for (const auto& entry : fs::recursive_directory_iterator(root))
    if (entry.is_regular_file() && entry.path().filename() == "run.json")
      paths.push_back(entry.path());
  std::sort(paths.begin(), paths.end());
  std::vector<RunRecord> records;
  records.reserve(paths.size());
  for (const auto& p : paths)
    records.push_back(run_record_from_json(nlohmann::json::parse(io::read_text(p))));
  return records;
}

}  // namespace pnp
