#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pnp/denoiser.hpp"
#include "pnp/forward_model.hpp"
#include "pnp/image.hpp"
#include "pnp/metrics.hpp"

// Quadratic-loss PnP primal-dual splitting and its autotuned variants.
//
//   x_k = f(x_{k-1} - g1 * A^H v_{k-1})
//   v_k = v_{k-1}/(1+g2) + g2/(1+g2) * (A(2 x_k - x_{k-1}) - y)
//
// with g2 = 1/(g1 ||A||^2) throughout. The autotuners steer g1 so that the
// data residual ||y - A x||^2 settles at the discrepancy target
// beta*C*M*sigma^2: ATO swaps the dual update for the indicator-loss
// shrinkage, ATM1 applies a gated multiplicative g1 update, ATM2 adds
// damping and restarts on top of the multiplicative update.

namespace pnp {

enum class Algorithm { PDS, ATO, ATM1, ATM2 };

inline Algorithm algorithm_from_string(const std::string& s) {
  if (s == "pds") return Algorithm::PDS;
  if (s == "ato") return Algorithm::ATO;
  if (s == "atm1") return Algorithm::ATM1;
  if (s == "atm2") return Algorithm::ATM2;
  throw std::invalid_argument("unknown algorithm: " + s);
}

inline std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::PDS: return "pds";
    case Algorithm::ATO: return "ato";
    case Algorithm::ATM1: return "atm1";
    case Algorithm::ATM2: return "atm2";
  }
  throw std::invalid_argument("unknown algorithm");
}

enum class Termination { Converged, MaxIters, Diverged };

inline std::string to_string(Termination t) {
  switch (t) {
    case Termination::Converged: return "converged";
    case Termination::MaxIters: return "max_iters";
    case Termination::Diverged: return "diverged";
  }
  throw std::invalid_argument("unknown termination");
}

struct SolverConfig {
  Algorithm algorithm = Algorithm::PDS;
  double gamma1_init = 1.0;
  double beta = 0.95;
  double alpha = 0.2;
  int max_iters = 200;
  double rel_tol = 1e-6;     // +inf disables early stopping
  bool record_trace = true;  // adds the fixed-point residual column
  bool autotune = true;      // false freezes stepsizes (ATM1/ATM2 become PDS)

  void validate() const {
    if (!(gamma1_init > 0.0))
      throw std::invalid_argument("SolverConfig: gamma1_init must be positive");
    if (!(beta > 0.0 && beta <= 1.0))
      throw std::invalid_argument("SolverConfig: beta must be in (0,1]");
    if (!(alpha > 0.0 && alpha <= 1.0))
      throw std::invalid_argument("SolverConfig: alpha must be in (0,1]");
    if (max_iters < 1)
      throw std::invalid_argument("SolverConfig: max_iters must be >= 1");
    if (!(rel_tol > 0.0))
      throw std::invalid_argument("SolverConfig: rel_tol must be positive");
  }
};

struct SolverState {
  ComplexImage x;
  KSpaceData v;  // dual variable, k-space stack shape
  double gamma1 = 0.0;
  double gamma2 = 0.0;
  double gamma1_0 = 0.0;
  bool restart_now = false;
  bool restart_allowed = true;
  int iter = 0;
};

struct TraceRow {
  int iter = 0;
  double residual_sq = 0.0;
  double target = 0.0;  // beta*C*M*sigma^2
  double gamma1 = 0.0;  // value in force after the update at this iteration
  double rsnr_db = std::numeric_limits<double>::quiet_NaN();
  double fp_residual = std::numeric_limits<double>::quiet_NaN();
  bool restart_fired = false;
};

using IterationTrace = std::vector<TraceRow>;

struct SolveResult {
  ComplexImage x;
  IterationTrace trace;
  Termination termination = Termination::MaxIters;
  int iterations = 0;
  int diverged_at = -1;
  std::string message;
};

// One quadratic-loss PDS iteration at the state's current stepsizes.
inline SolverState pds_step(const SolverState& state, const ForwardOperator& op,
                            const KSpaceData& y, const Denoiser& f) {
  if (!state.v.same_shape(y) || state.x.width != op.width ||
      state.x.height != op.height)
    throw std::invalid_argument("pds_step: state shape mismatch");
  if (state.gamma1 * state.gamma2 * op.op_norm_sq > 1.0 + 1e-9)
    throw std::invalid_argument("pds_step: stepsize condition violated");
  SolverState next = state;
  const ComplexImage grad = apply_adjoint(op, state.v);
  ComplexImage s = state.x;
  for (std::size_t i = 0; i < s.data.size(); ++i)
    s.data[i] -= state.gamma1 * grad.data[i];
  next.x = f.denoise(s);

  ComplexImage overshoot = next.x;
  for (std::size_t i = 0; i < overshoot.data.size(); ++i)
    overshoot.data[i] = 2.0 * next.x.data[i] - state.x.data[i];
  const KSpaceData ax = apply_forward(op, overshoot);
  const double g2 = state.gamma2;
  for (std::size_t i = 0; i < next.v.data.size(); ++i)
    next.v.data[i] = state.v.data[i] / (1.0 + g2) +
                     (g2 / (1.0 + g2)) * (ax.data[i] - y.data[i]);
  next.iter = state.iter + 1;
  return next;
}

// One indicator-loss iteration: same x-update, dual shrunk toward zero by
// the discrepancy radius sqrt(beta*C*M)*sigma.
inline SolverState ato_step(const SolverState& state, const ForwardOperator& op,
                            const KSpaceData& y, const Denoiser& f, double beta,
                            double sigma_sq) {
  if (!state.v.same_shape(y) || state.x.width != op.width ||
      state.x.height != op.height)
    throw std::invalid_argument("ato_step: state shape mismatch");
  if (!(beta > 0.0 && beta <= 1.0))
    throw std::invalid_argument("ato_step: beta must be in (0,1]");
  if (sigma_sq < 0.0)
    throw std::invalid_argument("ato_step: sigma_sq must be >= 0");
  SolverState next = state;
  const ComplexImage grad = apply_adjoint(op, state.v);
  ComplexImage s = state.x;
  for (std::size_t i = 0; i < s.data.size(); ++i)
    s.data[i] -= state.gamma1 * grad.data[i];
  next.x = f.denoise(s);

  ComplexImage overshoot = next.x;
  for (std::size_t i = 0; i < overshoot.data.size(); ++i)
    overshoot.data[i] = 2.0 * next.x.data[i] - state.x.data[i];
  const KSpaceData ax = apply_forward(op, overshoot);
  const double g2 = state.gamma2;
  KSpaceData u = state.v;
  for (std::size_t i = 0; i < u.data.size(); ++i)
    u.data[i] += g2 * (ax.data[i] - y.data[i]);
  const double cm = static_cast<double>(op.total_samples());
  const double threshold = g2 * std::sqrt(beta * cm) * std::sqrt(sigma_sq);
  const double un = std::sqrt(norm_sq(u.data));
  const double scale = un > threshold ? 1.0 - threshold / un : 0.0;
  for (std::size_t i = 0; i < next.v.data.size(); ++i)
    next.v.data[i] = scale * u.data[i];
  next.iter = state.iter + 1;
  return next;
}

// Relative fixed-point residual ||x - f(x - g1 A^H(Ax - y))|| / max(||x||, eps).
inline double fixed_point_residual(const ComplexImage& x, const ForwardOperator& op,
                                   const KSpaceData& y, double gamma1,
                                   const Denoiser& f) {
  if (!(gamma1 > 0.0))
    throw std::invalid_argument("fixed_point_residual: gamma1 must be positive");
  KSpaceData r = apply_forward(op, x);
  for (std::size_t i = 0; i < r.data.size(); ++i) r.data[i] -= y.data[i];
  const ComplexImage grad = apply_adjoint(op, r);
  ComplexImage s = x;
  for (std::size_t i = 0; i < s.data.size(); ++i)
    s.data[i] -= gamma1 * grad.data[i];
  const ComplexImage fx = f.denoise(s);
  double num = 0.0;
  for (std::size_t i = 0; i < x.data.size(); ++i)
    num += std::norm(x.data[i] - fx.data[i]);
  return std::sqrt(num) / std::max(std::sqrt(norm_sq(x)), 1e-12);
}

// Stepsize state machine of the damped/restarted autotuner. Kept separate
// from the iteration loop so every branch is unit-testable on synthetic
// residual sequences.
class Atm2StepsizeController {
 public:
  Atm2StepsizeController(double gamma1_init, double target, double alpha,
                         double op_norm_sq)
      : gamma1_(gamma1_init),
        gamma1_0_(gamma1_init),
        target_(target),
        alpha_(alpha),
        op_norm_sq_(op_norm_sq) {
    if (!(gamma1_init > 0.0) || !(target > 0.0) || !(alpha > 0.0 && alpha <= 1.0) ||
        !(op_norm_sq > 0.0))
      throw std::invalid_argument("Atm2StepsizeController: bad parameters");
  }

  struct Update {
    double gamma1;
    double gamma2;
    bool restart_fired;
  };

  // Consumes the data residuals of the current and previous iterate and
  // produces gamma1_k. Must be called exactly once per iteration, in order.
  Update step(double resid_sq, double prev_resid_sq) {
    ++k_;
    restart_now_ = resid_sq > prev_resid_sq;
    if (resid_sq < target_)
      restart_allowed_ = false;
    else if (resid_sq > 1.1 * target_)
      restart_allowed_ = true;

    const bool fired = restart_allowed_ && restart_now_;
    const double g_new =
        fired ? gamma1_0_
              : alpha_ * gamma1_ * (resid_sq / target_) + (1.0 - alpha_) * gamma1_;

    // consecutive-equality escalation; exact comparison is intended, equal
    // values only arise from repeated restarts assigning the stored gamma1_0
    if (k_ > 2 && g_new == gamma1_ && gamma1_ == gamma1_prev_)
      gamma1_0_ *= 10.0;

    gamma1_prev_ = gamma1_;
    gamma1_ = g_new;
    return {gamma1_, 1.0 / (gamma1_ * op_norm_sq_), fired};
  }

  double gamma1() const { return gamma1_; }
  double gamma1_0() const { return gamma1_0_; }
  bool restart_now() const { return restart_now_; }
  bool restart_allowed() const { return restart_allowed_; }

 private:
  double gamma1_;
  double gamma1_0_;
  double target_;
  double alpha_;
  double op_norm_sq_;
  double gamma1_prev_ = std::numeric_limits<double>::quiet_NaN();
  bool restart_now_ = false;
  bool restart_allowed_ = true;
  int k_ = 0;
};

namespace detail {

inline bool state_finite(const SolverState& s) {
  return all_finite(s.x.data) && all_finite(s.v.data);
}

}  // namespace detail

// Shared iteration driver for all four algorithms.
inline SolveResult run_solver(const SolverConfig& cfg, const ForwardOperator& op,
                              const KSpaceData& y, const Denoiser& f,
                              const ComplexImage* x0 = nullptr,
                              const ComplexImage* ground_truth = nullptr) {
  cfg.validate();
  if (op.op_norm_sq <= 0.0)
    throw std::invalid_argument("run_solver: operator norm not available");
  const bool needs_target =
      cfg.algorithm == Algorithm::ATM1 || cfg.algorithm == Algorithm::ATM2;
  if (needs_target && y.sigma_sq <= 0.0)
    throw std::invalid_argument("run_solver: autotuning requires known sigma_sq");

  SolverState state;
  state.x = x0 ? *x0 : apply_adjoint(op, y);
  state.v = y;
  std::fill(state.v.data.begin(), state.v.data.end(), cplx{});
  state.v.sigma_sq = 0.0;
  state.gamma1 = cfg.gamma1_init;
  state.gamma2 = 1.0 / (state.gamma1 * op.op_norm_sq);
  state.gamma1_0 = cfg.gamma1_init;

  const double cm = static_cast<double>(op.total_samples());
  const double target = cfg.beta * cm * y.sigma_sq;
  double prev_resid = residual_norm_sq(op, y, state.x);
  const double resid_limit = 1e6 * std::max(prev_resid, 1e-30);

  Atm2StepsizeController atm2(cfg.gamma1_init, needs_target ? target : 1.0,
                              cfg.alpha, op.op_norm_sq);

  SolveResult res;
  res.trace.reserve(static_cast<std::size_t>(cfg.max_iters));
  for (int k = 1; k <= cfg.max_iters; ++k) {
    const ComplexImage x_prev = state.x;
    state = cfg.algorithm == Algorithm::ATO
                ? ato_step(state, op, y, f, cfg.beta, y.sigma_sq)
                : pds_step(state, op, y, f);
    const double resid = residual_norm_sq(op, y, state.x);
    res.iterations = k;

    if (!detail::state_finite(state) || !std::isfinite(resid) ||
        resid > resid_limit) {
      res.termination = Termination::Diverged;
      res.diverged_at = k;
      res.message = "diverged at iteration " + std::to_string(k);
      res.x = std::move(state.x);
      return res;
    }

    bool restart_fired = false;
    if (cfg.autotune && cfg.algorithm == Algorithm::ATM1 && k > 19 && k % 5 == 0) {
      state.gamma1 *= resid / target;
      state.gamma2 = 1.0 / (state.gamma1 * op.op_norm_sq);
    } else if (cfg.autotune && cfg.algorithm == Algorithm::ATM2) {
      const auto u = atm2.step(resid, prev_resid);
      state.gamma1 = u.gamma1;
      state.gamma2 = u.gamma2;
      state.gamma1_0 = atm2.gamma1_0();
      state.restart_now = atm2.restart_now();
      state.restart_allowed = atm2.restart_allowed();
      restart_fired = u.restart_fired;
    }

    TraceRow row;
    row.iter = k;
    row.residual_sq = resid;
    row.target = target;
    row.gamma1 = state.gamma1;
    row.restart_fired = restart_fired;
    if (ground_truth) row.rsnr_db = rsnr_db(*ground_truth, state.x);
    if (cfg.record_trace)
      row.fp_residual = fixed_point_residual(state.x, op, y, state.gamma1, f);
    res.trace.push_back(row);

    prev_resid = resid;

    if (!std::isinf(cfg.rel_tol)) {
      double diff = 0.0;
      for (std::size_t i = 0; i < state.x.data.size(); ++i)
        diff += std::norm(state.x.data[i] - x_prev.data[i]);
      const double base = std::max(std::sqrt(norm_sq(x_prev)), 1e-12);
      if (std::sqrt(diff) / base < cfg.rel_tol) {
        res.termination = Termination::Converged;
        res.x = std::move(state.x);
        return res;
      }
    }
  }
  res.termination = Termination::MaxIters;
  res.x = std::move(state.x);
  return res;
}

inline SolveResult run_pnp_pds(const SolverConfig& cfg, const ForwardOperator& op,
                               const KSpaceData& y, const Denoiser& f,
                               const ComplexImage* x0 = nullptr,
                               const ComplexImage* ground_truth = nullptr) {
  if (cfg.algorithm != Algorithm::PDS)
    throw std::invalid_argument("run_pnp_pds: config.algorithm must be PDS");
  return run_solver(cfg, op, y, f, x0, ground_truth);
}

inline SolveResult run_pds_ato(const SolverConfig& cfg, const ForwardOperator& op,
                               const KSpaceData& y, const Denoiser& f,
                               const ComplexImage* x0 = nullptr,
                               const ComplexImage* ground_truth = nullptr) {
  if (cfg.algorithm != Algorithm::ATO)
    throw std::invalid_argument("run_pds_ato: config.algorithm must be ATO");
  return run_solver(cfg, op, y, f, x0, ground_truth);
}

inline SolveResult run_pds_atm1(const SolverConfig& cfg, const ForwardOperator& op,
                                const KSpaceData& y, const Denoiser& f,
                                const ComplexImage* x0 = nullptr,
                                const ComplexImage* ground_truth = nullptr) {
  if (cfg.algorithm != Algorithm::ATM1)
    throw std::invalid_argument("run_pds_atm1: config.algorithm must be ATM1");
  return run_solver(cfg, op, y, f, x0, ground_truth);
}

inline SolveResult run_pds_atm2(const SolverConfig& cfg, const ForwardOperator& op,
                                const KSpaceData& y, const Denoiser& f,
                                const ComplexImage* x0 = nullptr,
                                const ComplexImage* ground_truth = nullptr) {
  if (cfg.algorithm != Algorithm::ATM2)
    throw std::invalid_argument("run_pds_atm2: config.algorithm must be ATM2");
  return run_solver(cfg, op, y, f, x0, ground_truth);
}

// Log-spaced gamma1 grid [1e-2, 1e2] / ||A||^2, the genie search space.
inline std::vector<double> default_gamma1_grid(double op_norm_sq, int points = 25) {
  if (points < 1) throw std::invalid_argument("default_gamma1_grid: points >= 1");
  std::vector<double> grid(points);
  for (int i = 0; i < points; ++i) {
    const double t = points == 1 ? 0.5 : static_cast<double>(i) / (points - 1);
    grid[i] = std::pow(10.0, -2.0 + 4.0 * t) / op_norm_sq;
  }
  return grid;
}

struct GenieResult {
  double gamma1 = 0.0;
  SolveResult result;
};

// Oracle baseline: fixed-stepsize PDS per grid value, keep the gamma1 that
// maximizes final rSNR against the ground truth. Diverged runs score -inf;
// ties break toward the smaller gamma1.
inline GenieResult genie_tune(const SolverConfig& base,
                              std::span<const double> grid,
                              const ForwardOperator& op, const KSpaceData& y,
                              const Denoiser& f, const ComplexImage* x0,
                              const ComplexImage& ground_truth) {
  if (grid.empty()) throw std::invalid_argument("genie_tune: empty grid");
  GenieResult best;
  double best_score = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (double g : grid) {
    SolverConfig cfg = base;
    cfg.algorithm = Algorithm::PDS;
    cfg.gamma1_init = g;
    SolveResult r = run_solver(cfg, op, y, f, x0, &ground_truth);
    const double score = r.termination == Termination::Diverged
                             ? -std::numeric_limits<double>::infinity()
                             : rsnr_db(ground_truth, r.x);
    if (r.termination != Termination::Diverged) any = true;
    if (score > best_score) {
      best_score = score;
      best.gamma1 = g;
      best.result = std::move(r);
    }
  }
  if (!any) throw std::runtime_error("genie_tune: every grid run diverged");
  return best;
}

}  // namespace pnp
