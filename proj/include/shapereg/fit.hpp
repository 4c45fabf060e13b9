#pragma once

// One-call fitting pipeline: optional standardization, constraint resolution,
// solver dispatch and model assembly. The command-line tool is a thin shell
// over this function.

#include <optional>
#include <sstream>
#include <string>

#include "shapereg/admm.hpp"
#include "shapereg/constraint_grammar.hpp"
#include "shapereg/data.hpp"
#include "shapereg/model.hpp"
#include "shapereg/palm.hpp"
#include "shapereg/trace.hpp"
#include "shapereg/types.hpp"

namespace shapereg {

enum class SolverKind { Palm, Admm };

inline SolverKind parse_solver(const std::string& name) {
  if (name == "palm") return SolverKind::Palm;
  if (name == "admm") return SolverKind::Admm;
  throw InvalidArgument("unknown solver '" + name + "' (expected palm or admm)");
}

struct FitOptions {
  SolverKind solver = SolverKind::Palm;
  std::string constraint = "free";
  bool standardize = false;
  double tol = 1e-6;
  double max_time_secs = 7200.0;
  AdmmConfig admm;
  PalmConfig palm;
  SsnConfig ssn;
};

struct FitOutcome {
  FittedModel model;
  SolverReport report;
  ConstraintSet constraint;  // in the units the solver saw
  std::vector<std::string> warnings;
};

namespace detail {

inline std::string exact(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

}  // namespace detail

inline FitOutcome fit(const ProblemData& raw, const FitOptions& opt, const TraceSink& trace = nullptr) {
  FitOutcome out;
  const ConstraintSpec spec = parse_constraint(opt.constraint);
  std::optional<StandardizationRecord> record;
  ProblemData data = raw;
  if (opt.standardize) {
    Standardized s = standardize(raw);
    data = std::move(s.data);
    record = std::move(s.record);
    out.warnings = std::move(s.warnings);
  }
  LipschitzDiagnostics diag;
  out.constraint = resolve_constraint(spec, data, record, &diag);
  for (auto& w : diag.warnings) out.warnings.push_back(std::move(w));
  if (!diag.zero_bounds.empty())
    out.warnings.push_back(std::to_string(diag.zero_bounds.size()) +
                           " point(s) have a zero Lipschitz estimate; floored");

  if (opt.solver == SolverKind::Palm) {
    PalmConfig cfg = opt.palm;
    cfg.tol = opt.tol;
    cfg.max_time_secs = opt.max_time_secs;
    PalmResult r = palm_fit(data, out.constraint, cfg, opt.ssn, std::nullopt, trace);
    out.model = std::move(r.model);
    out.report = r.report;
    if (!r.diagnostic.empty()) out.warnings.push_back(r.diagnostic);
  } else {
    AdmmConfig cfg = opt.admm;
    cfg.tol = opt.tol;
    cfg.max_time_secs = opt.max_time_secs;
    AdmmResult r = admm_fit(data, out.constraint, cfg, std::nullopt, trace);
    out.model = std::move(r.model);
    out.report = r.report;
  }

  out.model.standardization = record;
  out.model.constraint = spec.text;
  auto& md = out.model.metadata;
  md["solver"] = out.report.solver;
  md["iterations"] = out.report.iteration_summary();
  md["termination"] = to_string(out.report.termination);
  md["R_P"] = detail::exact(out.report.residuals.primal);
  md["R_D"] = detail::exact(out.report.residuals.dual);
  md["R_C"] = detail::exact(out.report.residuals.complementarity);
  md["objective"] = detail::exact(out.report.primal_objective);
  md["standardized"] = opt.standardize ? "true" : "false";
  return out;
}

}  // namespace shapereg
