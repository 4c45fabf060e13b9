// shapereg: fit, evaluate and benchmark shape-constrained convex regression.
//
// Exit codes:
//   0  success (fit converged)
//   1  input error (arguments, files, constraint text)
//   2  iteration or time cap reached; the best iterate is still written
//   3  numerical failure in the solver; the last iterate is still written

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "shapereg/shapereg.hpp"

namespace {

using namespace shapereg;

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitCap = 2;
constexpr int kExitNumerical = 3;

int exit_code(Termination t) {
  switch (t) {
    case Termination::Converged: return kExitOk;
    case Termination::MaxIterations:
    case Termination::MaxTime: return kExitCap;
    case Termination::InnerFailure: return kExitNumerical;
  }
  return kExitNumerical;
}

void set_threads(int requested) {
  int threads = requested;
  if (threads <= 0) {
    if (const char* env = std::getenv("SHAPEREG_THREADS")) threads = std::atoi(env);
  }
#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#else
  (void)threads;
#endif
}

/// Output stream for a path, with "-" meaning stdout.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (path.empty() || path == "-") return;
    file_ = std::make_unique<std::ofstream>(path);
    if (!*file_) throw FormatError("cannot write '" + path + "'");
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? std::string(1, sep) : "") + parts[i];
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, sep)) out.push_back(item);
  return out;
}

/// "col=spec" pairs as given on the command line.
std::map<std::string, std::string> transform_specs(const std::vector<std::string>& items) {
  std::map<std::string, std::string> out;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw InvalidArgument("transform '" + item + "' must look like col=spec");
    out[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return out;
}

std::map<std::string, ColumnTransform> compile_transforms(const std::map<std::string, std::string>& specs) {
  std::map<std::string, ColumnTransform> out;
  for (const auto& [col, spec] : specs) out[col] = parse_transform(spec);
  return out;
}

std::vector<std::string> predictor_names(const FittedModel& m) {
  const auto it = m.metadata.find("predictors");
  if (it != m.metadata.end()) return split(it->second, ',');
  std::vector<std::string> out;
  for (Index k = 0; k < m.dim(); ++k) out.push_back("x" + std::to_string(k + 1));
  return out;
}

// ---------------------------------------------------------------------------
// fit

struct FitArgs {
  std::string data, response, out, trace, constraint = "free", solver = "palm";
  std::vector<std::string> predictors, transforms, filters;
  double tol = 1e-6;
  double max_time = 7200.0;
  int max_iters = 0;
  bool standardize = false;
  std::uint64_t seed = kDefaultSeed;
};

int run_fit(const FitArgs& a) {
  CsvSchema schema;
  schema.response = a.response;
  schema.predictors = a.predictors;
  const auto specs = transform_specs(a.transforms);
  schema.transforms = compile_transforms(specs);
  for (const auto& f : a.filters) schema.filters.push_back(RowFilter::parse(f));
  const CsvTable table = read_csv(a.data);
  const ProblemData data = problem_from_table(table, schema);

  FitOptions opt;
  opt.solver = parse_solver(a.solver);
  opt.constraint = a.constraint;
  opt.standardize = a.standardize;
  opt.tol = a.tol;
  opt.max_time_secs = a.max_time;
  if (a.max_iters > 0) {
    opt.admm.max_iters = a.max_iters;
    opt.palm.max_outer = a.max_iters;
  }

  std::unique_ptr<std::ofstream> trace_file;
  std::unique_ptr<CsvTraceWriter> trace_writer;
  TraceSink sink;
  if (!a.trace.empty()) {
    trace_file = std::make_unique<std::ofstream>(a.trace);
    if (!*trace_file) throw FormatError("cannot write '" + a.trace + "'");
    trace_writer = std::make_unique<CsvTraceWriter>(*trace_file);
    sink = [&](const TraceRecord& r) { (*trace_writer)(r); };
  }

  FitOutcome result = fit(data, opt, sink);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';

  std::vector<std::string> names = a.predictors;
  if (names.empty())
    for (const auto& h : table.header)
      if (h != a.response) names.push_back(h);
  auto& md = result.model.metadata;
  md["response"] = a.response;
  md["predictors"] = join(names, ',');
  if (!specs.empty()) {
    std::vector<std::string> parts;
    for (const auto& [col, spec] : specs) parts.push_back(col + "=" + spec);
    md["transforms"] = join(parts, ';');
  }
  save_model(result.model, a.out);

  const SolverReport& r = result.report;
  std::cout << r.solver << ' ' << r.iteration_summary() << ' ' << to_string(r.termination)
            << " R_KKT=" << r.residuals.max() << " objective=" << r.primal_objective << " time=" << r.seconds
            << "s n=" << data.size() << " d=" << data.dim() << '\n';
  return exit_code(r.termination);
}

// ---------------------------------------------------------------------------
// predict and smooth

struct PredictArgs {
  std::string model, query, out = "-";
  double smooth = 0.0;
  int grid = 0;
};

/// Points as read (shown in the output) and after the model's column transforms.
struct Queries {
  Matrix shown;
  Matrix input;
};

/// Grid points are laid out in transformed units over the range of the anchors.
Queries query_points(const FittedModel& m, const std::string& query, int grid) {
  if (grid > 0) {
    const Index d = m.dim();
    if (d > 3) throw InvalidArgument("--grid supports models with at most 3 predictors");
    if (grid < 2) throw InvalidArgument("--grid needs at least 2 points per axis");
    const Matrix anchors = m.standardization ? restore_points(*m.standardization, m.anchors) : m.anchors;
    const Vector lo = anchors.rowwise().minCoeff(), hi = anchors.rowwise().maxCoeff();
    Index total = 1;
    for (Index k = 0; k < d; ++k) total *= grid;
    Matrix x(d, total);
    for (Index c = 0; c < total; ++c) {
      Index rest = c;
      for (Index k = 0; k < d; ++k) {
        const Index step = rest % grid;
        rest /= grid;
        x(k, c) = lo[k] + (hi[k] - lo[k]) * static_cast<double>(step) / static_cast<double>(grid - 1);
      }
    }
    return {x, x};
  }
  if (query.empty()) throw InvalidArgument("give --query or --grid");
  const CsvTable t = read_csv(query);
  std::map<std::string, ColumnTransform> transforms;
  const auto it = m.metadata.find("transforms");
  if (it != m.metadata.end()) {
    std::map<std::string, std::string> specs;
    for (const auto& part : split(it->second, ';')) {
      const auto eq = part.find('=');
      if (eq == std::string::npos) throw FormatError("model metadata 'transforms' is malformed");
      specs[part.substr(0, eq)] = part.substr(eq + 1);
    }
    transforms = compile_transforms(specs);
  }
  const std::vector<std::string> names = predictor_names(m);
  bool named = true;
  for (const auto& n : names) named = named && std::find(t.header.begin(), t.header.end(), n) != t.header.end();
  if (named) return {points_from_table(t, names), points_from_table(t, names, transforms)};
  Matrix x = points_from_table(t, {});
  if (x.rows() != m.dim())
    throw FormatError(query + ": expected columns " + join(names, ',') + " or exactly " +
                      std::to_string(m.dim()) + " columns");
  return {x, x};
}

int run_predict(const PredictArgs& a) {
  const FittedModel m = load_model(a.model);
  const Queries q = query_points(m, a.query, a.grid);
  const Matrix& x = q.input;
  const Index d = m.dim();
  std::vector<std::string> header = predictor_names(m);
  header.push_back("yhat");
  Index cols = d + 1;
  if (a.smooth > 0.0) {
    header.push_back("smooth");
    for (Index k = 0; k < d; ++k) header.push_back("grad" + std::to_string(k + 1));
    cols += 1 + d;
  }
  Matrix out(x.cols(), cols);
  out.leftCols(d) = q.shown.transpose();
  out.col(d) = predict_batch(m, x);
  if (a.smooth > 0.0)
    for (Index i = 0; i < x.cols(); ++i) {
      const MoreauValue mv = moreau_smooth(m, x.col(i), a.smooth);
      out(i, d + 1) = mv.value;
      out.block(i, d + 2, 1, d) = mv.gradient.transpose();
    }
  Output o(a.out);
  write_csv(o.stream(), header, out);
  return kExitOk;
}

struct SmoothArgs {
  std::string model, query, out = "-";
  double tau = 1.0;
};

int run_smooth(const SmoothArgs& a) {
  if (!(a.tau > 0.0)) throw InvalidArgument("--tau must be positive");
  const FittedModel m = load_model(a.model);
  const Queries q = query_points(m, a.query, 0);
  const Matrix& x = q.input;
  const Index d = m.dim();
  std::vector<std::string> header = predictor_names(m);
  header.push_back("value");
  for (Index k = 0; k < d; ++k) header.push_back("grad" + std::to_string(k + 1));
  header.push_back("gap");
  Matrix out(x.cols(), 2 * d + 2);
  out.leftCols(d) = q.shown.transpose();
  for (Index i = 0; i < x.cols(); ++i) {
    const MoreauValue mv = moreau_smooth(m, x.col(i), a.tau);
    out(i, d) = mv.value;
    out.block(i, d + 1, 1, d) = mv.gradient.transpose();
    out(i, 2 * d + 1) = mv.gap;
  }
  Output o(a.out);
  write_csv(o.stream(), header, out);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// bench

struct BenchArgs {
  std::string suite = "synthetic", fn = "exp", solver = "both", constraint = "natural", out = "-";
  Index d = 20, n = 500;
  double snr = 3.0, tol = 1e-6, max_time = 7200.0;
  bool raw = false;
  std::uint64_t seed = kDefaultSeed;
  Index assets = 5, test_points = 200, paths = 100000;
  std::vector<Index> sizes{200, 400, 600};
};

int run_bench_synthetic(const BenchArgs& a) {
  const SyntheticData s = generate_synthetic(parse_test_function(a.fn), a.d, a.n, a.snr, a.seed);
  FitOptions opt;
  opt.constraint = a.constraint == "natural" ? format_constraint(s.function.natural_constraint()) : a.constraint;
  opt.standardize = !a.raw;
  opt.tol = a.tol;
  opt.max_time_secs = a.max_time;
  std::vector<std::string> solvers = a.solver == "both" ? std::vector<std::string>{"palm", "admm"}
                                                        : std::vector<std::string>{a.solver};
  Output o(a.out);
  std::ostream& out = o.stream();
  out << "solver,d,n,iters,inner_iters,time_secs,R_KKT,objective,termination\n";
  out.precision(10);
  int code = kExitOk;
  for (const auto& name : solvers) {
    opt.solver = parse_solver(name);
    const FitOutcome f = fit(s.data, opt);
    for (const auto& w : f.warnings) std::cerr << "warning: " << w << '\n';
    const SolverReport& r = f.report;
    out << name << ',' << a.d << ',' << a.n << ',' << r.iterations << ',' << r.inner_iterations << ','
        << r.seconds << ',' << r.residuals.max() << ',' << r.primal_objective << ',' << to_string(r.termination)
        << '\n';
    code = std::max(code, exit_code(r.termination));
  }
  return code;
}

int run_bench_basket(const BenchArgs& a) {
  BasketExperiment e;
  e.assets = a.assets;
  e.sizes = a.sizes;
  e.test_points = a.test_points;
  e.paths = a.paths;
  e.seed = a.seed;
  e.fit.solver = parse_solver(a.solver == "both" ? "palm" : a.solver);
  e.fit.tol = a.tol;
  e.fit.max_time_secs = a.max_time;
  const BasketOutcome r = run_basket_experiment(e);
  Output o(a.out);
  std::ostream& out = o.stream();
  out << "model,num_data,MSE,time,iters,termination\n";
  out.precision(6);
  int code = kExitOk;
  for (const auto& row : r.rows) {
    out << row.model << ',' << row.size << ',' << row.mse << ',' << row.seconds << ','
        << row.report.iteration_summary() << ',' << to_string(row.report.termination) << '\n';
    code = std::max(code, exit_code(row.report.termination));
  }
  return code;
}

// ---------------------------------------------------------------------------
// config files

/// Turns key=value lines into flags for keys the command line did not set.
std::vector<std::string> config_arguments(const CLI::App& sub, const std::string& path) {
  std::vector<std::string> extra;
  for (const CLI::ConfigItem& item : CLI::ConfigINI().from_file(path)) {
    if (item.name == "config" || item.name == "++" || item.name == "--") continue;
    const CLI::Option* opt = nullptr;
    try {
      opt = sub.get_option("--" + item.name);
    } catch (const CLI::OptionNotFound&) {
      throw InvalidArgument(path + ": unknown key '" + item.name + "'");
    }
    if (opt->count() > 0) continue;
    for (const auto& v : item.inputs) extra.push_back("--" + item.name + "=" + v);
  }
  return extra;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shape-constrained convex regression"};
  app.require_subcommand(1);
  int threads = 0;
  std::string config;

  FitArgs fa;
  CLI::App* fit_cmd = app.add_subcommand("fit", "Fit a model to CSV data");
  fit_cmd->add_option("--data", fa.data, "CSV file with a header row")->required();
  fit_cmd->add_option("--response", fa.response, "Response column")->required();
  fit_cmd->add_option("--predictors", fa.predictors, "Predictor columns (default: all others)")->delimiter(',');
  fit_cmd->add_option("--transform", fa.transforms, "col=spec with spec identity|log|exp|pow:B|scale:C");
  fit_cmd->add_option("--filter", fa.filters, "Keep rows where 'col OP value' holds");
  fit_cmd->add_option("--constraint", fa.constraint, "free | monotone:+1,-2 | box:L=..,U=.. | lip:q=2,L=.. | lip:data,k=5,p=2")
      ->capture_default_str();
  fit_cmd->add_option("--solver", fa.solver, "Solver")->check(CLI::IsMember({"palm", "admm"}))->capture_default_str();
  fit_cmd->add_option("--tol", fa.tol, "Stop when the KKT residual is below this")->capture_default_str();
  fit_cmd->add_option("--max-time", fa.max_time, "Wall-clock limit in seconds")->capture_default_str();
  fit_cmd->add_option("--max-iters", fa.max_iters, "Outer iteration cap (0: solver default)");
  fit_cmd->add_option("--out", fa.out, "Model file to write")->required();
  fit_cmd->add_flag("--standardize", fa.standardize, "Center and scale the data before fitting");
  fit_cmd->add_option("--trace", fa.trace, "Per-iteration CSV log");
  fit_cmd->add_option("--seed", fa.seed, "Random seed (fitting itself is deterministic)")->capture_default_str();

  PredictArgs pa;
  CLI::App* predict_cmd = app.add_subcommand("predict", "Evaluate a model at query points");
  predict_cmd->add_option("--model", pa.model, "Model file")->required();
  predict_cmd->add_option("--query", pa.query, "CSV of query points");
  predict_cmd->add_option("--grid", pa.grid, "Evaluate on a grid with this many points per axis (d <= 3)");
  predict_cmd->add_option("--out", pa.out, "Output CSV ('-' for stdout)")->capture_default_str();
  predict_cmd->add_option("--smooth", pa.smooth, "Also emit the Moreau envelope with this parameter");

  SmoothArgs sa;
  CLI::App* smooth_cmd = app.add_subcommand("smooth", "Moreau envelope value and gradient at query points");
  smooth_cmd->add_option("--model", sa.model, "Model file")->required();
  smooth_cmd->add_option("--query", sa.query, "CSV of query points")->required();
  smooth_cmd->add_option("--tau", sa.tau, "Smoothing parameter")->capture_default_str();
  smooth_cmd->add_option("--out", sa.out, "Output CSV ('-' for stdout)")->capture_default_str();

  BenchArgs ba;
  CLI::App* bench_cmd = app.add_subcommand("bench", "Run a benchmark suite and print a results CSV");
  bench_cmd->add_option("--suite", ba.suite, "Suite")->check(CLI::IsMember({"synthetic", "basket"}))->capture_default_str();
  bench_cmd->add_option("--fn", ba.fn, "Test function")
      ->check(CLI::IsMember({"exp", "relu", "softplus", "sqrtquad", "qform", "logsumexp", "lipdemo"}))
      ->capture_default_str();
  bench_cmd->add_option("--d", ba.d, "Dimension")->check(CLI::PositiveNumber)->capture_default_str();
  bench_cmd->add_option("--n", ba.n, "Sample size")->check(CLI::Range(2, 1000000))->capture_default_str();
  bench_cmd->add_option("--snr", ba.snr, "Signal-to-noise ratio")->capture_default_str();
  bench_cmd->add_option("--solver", ba.solver, "Solver")->check(CLI::IsMember({"palm", "admm", "both"}))->capture_default_str();
  bench_cmd->add_option("--constraint", ba.constraint, "'natural' or constraint text")->capture_default_str();
  bench_cmd->add_flag("--raw", ba.raw, "Fit without standardizing");
  bench_cmd->add_option("--tol", ba.tol, "KKT tolerance")->capture_default_str();
  bench_cmd->add_option("--max-time", ba.max_time, "Wall-clock limit per fit in seconds")->capture_default_str();
  bench_cmd->add_option("--seed", ba.seed, "Random seed")->capture_default_str();
  bench_cmd->add_option("--assets", ba.assets, "Basket size")->check(CLI::PositiveNumber)->capture_default_str();
  bench_cmd->add_option("--sizes", ba.sizes, "Basket sample sizes")->delimiter(',')->capture_default_str();
  bench_cmd->add_option("--test-points", ba.test_points, "Basket test points")->check(CLI::PositiveNumber)->capture_default_str();
  bench_cmd->add_option("--paths", ba.paths, "Monte Carlo paths per test point")->check(CLI::Range(2, 100000000))->capture_default_str();
  bench_cmd->add_option("--out", ba.out, "Output CSV ('-' for stdout)")->capture_default_str();

  for (CLI::App* sub : {fit_cmd, predict_cmd, smooth_cmd, bench_cmd}) {
    sub->add_option("--threads", threads, "Worker threads (0: SHAPEREG_THREADS or automatic)");
    sub->add_option("--config", config, "key=value file; keys are option names without dashes");
  }

  std::vector<std::string> args;
  for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
  try {
    app.parse(args);
    if (!config.empty()) {
      CLI::App* sub = app.get_subcommands().front();
      std::vector<std::string> extra = config_arguments(*sub, config);
      if (!extra.empty()) {
        std::vector<std::string> again;
        for (auto it = extra.rbegin(); it != extra.rend(); ++it) again.push_back(*it);
        for (int i = argc - 1; i > 0; --i) again.emplace_back(argv[i]);
        app.parse(again);
      }
    }
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }

  set_threads(threads);
  try {
    if (*fit_cmd) return run_fit(fa);
    if (*predict_cmd) return run_predict(pa);
    if (*smooth_cmd) return run_smooth(sa);
    return ba.suite == "basket" ? run_bench_basket(ba) : run_bench_synthetic(ba);
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
}
