#pragma once

// Symmetric Gauss-Seidel ADMM on the split problem
//   min 1/2||theta - Y||^2 + p(y) + delta_-(eta)
//   s.t. eta + A theta + B xi = 0,  xi - y = 0.
// One sweep updates (y, eta), then theta, xi, theta again, then (u, v).

#include <Eigen/Core>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>

#include "shapereg/constraints.hpp"
#include "shapereg/model.hpp"
#include "shapereg/operators.hpp"
#include "shapereg/problem.hpp"
#include "shapereg/trace.hpp"
#include "shapereg/types.hpp"

namespace shapereg {

struct AdmmConfig {
  double sigma = 1.0;
  double tau = 1.618;
  double tol = 1e-6;
  int max_iters = 10000;
  double max_time_secs = 7200.0;
  bool sigma_adapt = true;
  int adapt_every = 50;
  double adapt_ratio = 5.0;  // rebalance when split residual / R_D leaves [1/ratio, ratio]
  double adapt_factor = 2.0;
  int adapt_patience = 6;  // after this many sigma changes the check interval doubles per change

  void validate() const {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidArgument("AdmmConfig: sigma must be positive");
    if (!(tau > 0.0 && tau < 1.6180339887)) throw InvalidArgument("AdmmConfig: tau must lie in (0, 1.618)");
    if (!(tol > 0.0)) throw InvalidArgument("AdmmConfig: tol must be positive");
    if (max_iters < 1) throw InvalidArgument("AdmmConfig: max_iters must be positive");
    if (!(max_time_secs > 0.0)) throw InvalidArgument("AdmmConfig: max_time_secs must be positive");
    if (adapt_every < 1 || adapt_patience < 0 || !(adapt_ratio > 1.0) || !(adapt_factor > 1.0))
      throw InvalidArgument("AdmmConfig: invalid sigma adaptation parameters");
  }
};

struct AdmmState {
  PrimalState primal;
  DualState dual;
  double sigma = 1.0;
};

/// Default start: theta = Y, xi = y = 0, eta = Pi_-(-A Y), u = v = 0.
inline AdmmState admm_initial_state(const ProblemData& p, double sigma) {
  AdmmState s;
  s.primal = PrimalState::zeros(p.dim(), p.size());
  s.primal.theta = p.y();
  s.primal.eta = (-apply_a(p.y())).cwiseMin(0.0);
  s.dual = DualState::zeros(p.dim(), p.size());
  s.sigma = sigma;
  return s;
}

/// One sGS-ADMM iteration at penalty s.sigma.
inline AdmmState admm_step(const ProblemData& p, const OperatorContext& ctx, const ConstraintSet& c,
                           const AdmmState& s, const AdmmConfig& cfg) {
  const double sigma = s.sigma;
  const Vector& theta = s.primal.theta;
  const Matrix& xi = s.primal.xi;
  const Matrix& u = s.dual.u;
  const Matrix& v = s.dual.v;

  AdmmState next;
  next.sigma = sigma;
  PrimalState& np = next.primal;

  // Step 1: y and eta from (theta^k, xi^k).
  np.y = blockwise_prox(c, xi - v / sigma);
  const Matrix b_xi = ctx.apply_b(xi);
  np.eta = (-apply_a(theta) - b_xi + u / sigma).cwiseMin(0.0);

  // Step 2a: theta-hat with xi^k.
  const Matrix shift = np.eta - u / sigma;
  const Vector theta_hat = solve_theta_system(p.y() - sigma * apply_a_adjoint(shift + b_xi), sigma);

  // Step 2b: xi with theta-hat.
  const Matrix rhs = np.y + v / sigma - ctx.apply_b_adjoint(shift + apply_a(theta_hat));
  np.xi = ctx.solve_xi_system(rhs);

  // Step 2c: theta with xi^{k+1}.
  const Matrix b_xi_new = ctx.apply_b(np.xi);
  np.theta = solve_theta_system(p.y() - sigma * apply_a_adjoint(shift + b_xi_new), sigma);

  // Step 3: multipliers.
  const double step = cfg.tau * sigma;
  next.dual.u = u - step * (np.eta + apply_a(np.theta) + b_xi_new);
  next.dual.v = v - step * (np.xi - np.y);

  if (!np.theta.allFinite() || !np.xi.allFinite() || !next.dual.u.allFinite())
    throw NumericalError("admm_step: non-finite iterate (sigma = " + std::to_string(sigma) + ")");
  return next;
}

struct AdmmResult {
  FittedModel model;
  SolverReport report;
  AdmmState state;
};

inline AdmmResult admm_fit(const ProblemData& p, const ConstraintSet& c, const AdmmConfig& cfg = {},
                           std::optional<AdmmState> init = std::nullopt,
                           const TraceSink& trace = nullptr) {
  cfg.validate();
  c.validate(p.dim(), p.size());
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  const OperatorContext ctx(p.x());
  AdmmState state = init ? std::move(*init) : admm_initial_state(p, cfg.sigma);
  if (init) state.sigma = state.sigma > 0.0 ? state.sigma : cfg.sigma;

  SolverReport report;
  report.solver = "admm";
  AdmmState best = state;
  KktResiduals best_res;
  best_res.primal = best_res.dual = best_res.complementarity = std::numeric_limits<double>::infinity();

  int iter = 0;
  int changes = 0;
  int next_check = cfg.adapt_every;
  while (true) {
    state = admm_step(p, ctx, c, state, cfg);
    ++iter;
    const KktResiduals res =
        kkt_residuals(p, ctx, state.primal.theta, state.primal.xi, state.dual.u, state.dual.v, c);
    if (trace) {
      TraceRecord r;
      r.iteration = iter;
      r.primal_residual = res.primal;
      r.dual_residual = res.dual;
      r.complementarity = res.complementarity;
      r.objective = 0.5 * (state.primal.theta - p.y()).squaredNorm();
      r.sigma = state.sigma;
      r.elapsed = elapsed();
      trace(r);
    }
    if (res.max() < best_res.max()) {
      best = state;
      best_res = res;
    }
    if (res.max() <= cfg.tol) {
      report.termination = Termination::Converged;
      break;
    }
    if (iter >= cfg.max_iters) {
      report.termination = Termination::MaxIterations;
      break;
    }
    if (elapsed() >= cfg.max_time_secs) {
      report.termination = Termination::MaxTime;
      break;
    }
    // Balance the split residuals (eta + A theta + B xi, xi - y) against R_D.
    // Checks thin out once sigma has moved adapt_patience times, so it settles.
    if (cfg.sigma_adapt && iter >= next_check && res.dual > 0.0) {
      const Matrix a_theta = apply_a(state.primal.theta);
      const Matrix b_xi = ctx.apply_b(state.primal.xi);
      const double split = std::max(
          (state.primal.eta + a_theta + b_xi).norm() / (1.0 + a_theta.norm() + b_xi.norm()),
          (state.primal.xi - state.primal.y).norm() / (1.0 + state.primal.xi.norm()));
      const double ratio = split / res.dual;
      const double before = state.sigma;
      if (ratio > cfg.adapt_ratio)
        state.sigma *= cfg.adapt_factor;
      else if (ratio < 1.0 / cfg.adapt_ratio)
        state.sigma /= cfg.adapt_factor;
      if (state.sigma != before) ++changes;
      const int doublings = std::clamp(changes - cfg.adapt_patience + 1, 0, 20);
      next_check = iter + cfg.adapt_every * (1 << doublings);
    }
  }

  if (!report.converged()) state = best;
  report.iterations = iter;
  report.residuals = report.converged() ? kkt_residuals(p, ctx, state.primal.theta, state.primal.xi,
                                                        state.dual.u, state.dual.v, c)
                                        : best_res;
  report.primal_objective = 0.5 * (state.primal.theta - p.y()).squaredNorm();
  const ObjectiveValue dual = dual_objective(p, state.dual, c, cfg.tol);
  report.dual_objective = dual.finite ? dual.value : -std::numeric_limits<double>::infinity();
  report.final_sigma = state.sigma;
  report.seconds = elapsed();

  AdmmResult out;
  out.model = make_model(p.x(), state.primal.theta, state.primal.xi, c);
  out.report = report;
  out.state = std::move(state);
  return out;
}

}  // namespace shapereg
