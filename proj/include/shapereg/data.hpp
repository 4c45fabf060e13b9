#pragma once

// Synthetic test problems, standardization and CSV ingestion.

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "shapereg/constraints.hpp"
#include "shapereg/error.hpp"
#include "shapereg/types.hpp"

namespace shapereg {

// ---------------------------------------------------------------------------
// Random streams

/// SplitMix64 finalizer.
constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed of an independent stream: splitmix64(seed) mixed with the stream id.
constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(0x5eed0000ULL + stream));
}

/// mt19937_64 on a derived stream. Streams used by the generators:
///   0  parameters of the test function (p, Q)
///   1  noise
///   2+i  predictor column i
inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  return std::mt19937_64(stream_seed(seed, stream));
}

inline constexpr std::uint64_t kDefaultSeed = 42;

// ---------------------------------------------------------------------------
// Test functions

enum class TestFunction { Exp, Relu, Softplus, SqrtQuad, QuadForm, LogSumExp, LipDemo };

inline const char* to_string(TestFunction f) {
  switch (f) {
    case TestFunction::Exp: return "exp";
    case TestFunction::Relu: return "relu";
    case TestFunction::Softplus: return "softplus";
    case TestFunction::SqrtQuad: return "sqrtquad";
    case TestFunction::QuadForm: return "qform";
    case TestFunction::LogSumExp: return "logsumexp";
    case TestFunction::LipDemo: return "lipdemo";
  }
  return "?";
}

inline TestFunction parse_test_function(const std::string& name) {
  for (auto f : {TestFunction::Exp, TestFunction::Relu, TestFunction::Softplus, TestFunction::SqrtQuad,
                 TestFunction::QuadForm, TestFunction::LogSumExp, TestFunction::LipDemo})
    if (name == to_string(f)) return f;
  throw InvalidArgument("unknown test function '" + name +
                        "' (expected exp|relu|softplus|sqrtquad|qform|logsumexp|lipdemo)");
}

/// A concrete convex test function. Random parameters are drawn once from
/// stream 0 of the seed.
///   exp        exp(p^T x), p ~ N(0, I)
///   relu       (sum x)_+
///   softplus   log(1 + exp(sum x))
///   sqrtquad   sqrt(1 + x^T x)
///   qform      sqrt(x^T Q x), Q = U diag(lambda) U^T, lambda ~ U[1, 4]
///   logsumexp  log(1 + sum exp(x_k))
///   lipdemo    2 ||x||_inf + ||x||^2
struct TestFunctionInstance {
  TestFunction kind = TestFunction::Exp;
  Index dim = 1;
  Vector p;
  Matrix q;
  double q_lambda_max = 0.0;

  static TestFunctionInstance make(TestFunction kind, Index d, std::uint64_t seed) {
    if (d < 1) throw InvalidArgument("test function dimension must be positive");
    TestFunctionInstance f;
    f.kind = kind;
    f.dim = d;
    auto rng = make_rng(seed, 0);
    std::normal_distribution<double> normal;
    if (kind == TestFunction::Exp) {
      f.p.resize(d);
      for (Index k = 0; k < d; ++k) f.p[k] = normal(rng);
    } else if (kind == TestFunction::QuadForm) {
      Matrix g(d, d);
      for (Index j = 0; j < d; ++j)
        for (Index i = 0; i < d; ++i) g(i, j) = normal(rng);
      const Matrix u = Eigen::HouseholderQR<Matrix>(g).householderQ();
      std::uniform_real_distribution<double> eig(1.0, 4.0);
      Vector lambda(d);
      for (Index k = 0; k < d; ++k) lambda[k] = eig(rng);
      f.q = u * lambda.asDiagonal() * u.transpose();
      f.q = 0.5 * (f.q + f.q.transpose());
      f.q_lambda_max = lambda.maxCoeff();
    }
    return f;
  }

  double operator()(const Eigen::Ref<const Vector>& x) const {
    detail::require_dims(x.size() == dim, "test function: wrong input dimension");
    switch (kind) {
      case TestFunction::Exp: return std::exp(p.dot(x));
      case TestFunction::Relu: return std::max(x.sum(), 0.0);
      case TestFunction::Softplus: {
        const double s = x.sum();
        return s > 0.0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s));
      }
      case TestFunction::SqrtQuad: return std::sqrt(1.0 + x.squaredNorm());
      case TestFunction::QuadForm: return std::sqrt(std::max(x.dot(q * x), 0.0));
      case TestFunction::LogSumExp: {
        const double m = std::max(0.0, x.maxCoeff());
        return m + std::log(std::exp(-m) + (x.array() - m).exp().sum());
      }
      case TestFunction::LipDemo: return 2.0 * x.cwiseAbs().maxCoeff() + x.squaredNorm();
    }
    return 0.0;
  }

  /// Shape constraint satisfied by the function, in raw units: free, monotone
  /// nondecreasing, box [0, 1], or a Lipschitz ball.
  ConstraintSet natural_constraint() const {
    switch (kind) {
      case TestFunction::Relu: {
        std::vector<Index> all(static_cast<std::size_t>(dim));
        for (Index k = 0; k < dim; ++k) all[static_cast<std::size_t>(k)] = k;
        return ConstraintSet::monotone(std::move(all), {});
      }
      case TestFunction::Softplus: return ConstraintSet::box(Vector::Zero(dim), Vector::Ones(dim));
      case TestFunction::SqrtQuad: return ConstraintSet::lipschitz(Norm::Inf, 1.0);
      case TestFunction::QuadForm: return ConstraintSet::lipschitz(Norm::Two, q_lambda_max);
      case TestFunction::LogSumExp: return ConstraintSet::lipschitz(Norm::One, 1.0);
      default: return ConstraintSet::free();
    }
  }
};

struct SyntheticData {
  ProblemData data;
  Vector clean;  // psi(X_i) before noise
  double noise_sd = 0.0;
  TestFunctionInstance function;
};

/// X_i uniform on [-1, 1]^d, Y_i = psi(X_i) + N(0, s^2) with
/// s^2 = Var{psi(X_i)} / snr (sample variance). snr = +inf gives no noise.
inline SyntheticData generate_synthetic(TestFunction fn, Index d, Index n, double snr,
                                        std::uint64_t seed = kDefaultSeed) {
  if (!(snr > 0.0)) throw InvalidArgument("generate_synthetic: snr must be positive");
  if (n < 2) throw InvalidArgument("generate_synthetic: need n >= 2");
  SyntheticData out;
  out.function = TestFunctionInstance::make(fn, d, seed);
  Matrix x(d, n);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (Index i = 0; i < n; ++i) {
    auto rng = make_rng(seed, 2 + static_cast<std::uint64_t>(i));
    for (Index k = 0; k < d; ++k) x(k, i) = unit(rng);
  }
  out.clean.resize(n);
  for (Index i = 0; i < n; ++i) out.clean[i] = out.function(x.col(i));
  const double mean = out.clean.mean();
  const double var = (out.clean.array() - mean).square().sum() / static_cast<double>(n - 1);
  out.noise_sd = std::isinf(snr) ? 0.0 : std::sqrt(var / snr);
  Vector y = out.clean;
  if (out.noise_sd > 0.0) {
    auto rng = make_rng(seed, 1);
    std::normal_distribution<double> normal(0.0, out.noise_sd);
    for (Index i = 0; i < n; ++i) y[i] += normal(rng);
  }
  out.data = ProblemData(std::move(x), std::move(y));
  return out;
}

// ---------------------------------------------------------------------------
// Standardization

struct Standardized {
  ProblemData data;
  StandardizationRecord record;
  std::vector<std::string> warnings;
};

/// Centers Y and every row of X and scales each to unit Euclidean norm. A
/// constant row (or response) is only centered and gets scale 1.
inline Standardized standardize(const ProblemData& p) {
  Standardized out;
  StandardizationRecord& r = out.record;
  const Index d = p.dim();
  Matrix x = p.x();
  r.x_mean.resize(d);
  r.x_scale.resize(d);
  for (Index k = 0; k < d; ++k) {
    r.x_mean[k] = x.row(k).mean();
    x.row(k).array() -= r.x_mean[k];
    const double s = x.row(k).norm();
    if (s > 0.0) {
      r.x_scale[k] = s;
      x.row(k) /= s;
    } else {
      r.x_scale[k] = 1.0;
      out.warnings.push_back("predictor row " + std::to_string(k) + " is constant; left unscaled");
    }
  }
  Vector y = p.y();
  r.y_mean = y.mean();
  y.array() -= r.y_mean;
  const double s = y.norm();
  if (s > 0.0) {
    r.y_scale = s;
    y /= s;
  } else {
    r.y_scale = 1.0;
    out.warnings.push_back("response is constant; left unscaled");
  }
  out.data = ProblemData(std::move(x), std::move(y));
  return out;
}

inline Matrix standardize_points(const StandardizationRecord& r, const Eigen::Ref<const Matrix>& x) {
  detail::require_dims(x.rows() == r.x_mean.size(), "standardize_points: dimension mismatch");
  return (x.colwise() - r.x_mean).array().colwise() / r.x_scale.array();
}

inline Matrix restore_points(const StandardizationRecord& r, const Eigen::Ref<const Matrix>& x) {
  detail::require_dims(x.rows() == r.x_mean.size(), "restore_points: dimension mismatch");
  return (x.array().colwise() * r.x_scale.array()).matrix().colwise() + r.x_mean;
}

inline Vector restore_responses(const StandardizationRecord& r, const Eigen::Ref<const Vector>& y) {
  return (r.y_scale * y.array() + r.y_mean).matrix();
}

inline ProblemData restore(const ProblemData& p, const StandardizationRecord& r) {
  return ProblemData(restore_points(r, p.x()), restore_responses(r, p.y()));
}

/// Maps a constraint on raw gradients to one on standardized gradients.
/// A raw slope g and a standardized slope s are related by
/// g_k = (y_scale / x_scale_k) s_k, so box bounds scale by x_scale_k / y_scale
/// coordinatewise. A norm ball is not mapped to a ball; the largest ball that
/// lies inside the image is used, radius L * min_k x_scale_k / y_scale, so that
/// fitted raw slopes keep satisfying the raw bound.
inline ConstraintSet standardize_constraint(const ConstraintSet& c, const StandardizationRecord& r) {
  return std::visit(
      [&](const auto& s) -> ConstraintSet {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Box>) {
          detail::require_dims(s.lower.size() == r.x_scale.size(), "standardize_constraint: box dimension");
          const Vector f = r.x_scale / r.y_scale;
          return ConstraintSet::box(s.lower.cwiseProduct(f), s.upper.cwiseProduct(f));
        } else if constexpr (std::is_same_v<T, LipschitzBall>) {
          return ConstraintSet::lipschitz(s.q, s.radius * r.x_scale.minCoeff() / r.y_scale);
        } else if constexpr (std::is_same_v<T, PerPoint>) {
          std::vector<ConstraintSet> sets;
          sets.reserve(s.sets.size());
          for (const auto& b : s.sets) sets.push_back(standardize_constraint(b, r));
          return ConstraintSet::per_point(std::move(sets));
        } else {
          return c;
        }
      },
      c.variant());
}

// ---------------------------------------------------------------------------
// CSV

struct CsvTable {
  std::vector<std::string> header;
  Matrix values;  // rows x columns

  Index column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw FormatError("column '" + name + "' not found in header");
    return static_cast<Index>(it - header.begin());
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(trim(cur));
  return out;
}

inline double parse_number(const std::string& cell, std::size_t line, const std::string& column) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (cell.empty() || used != cell.size() || !std::isfinite(v))
    throw FormatError("line " + std::to_string(line) + ": non-numeric value '" + cell + "' in column '" +
                      column + "'");
  return v;
}

}  // namespace detail

inline CsvTable parse_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!detail::trim(line).empty()) break;
  }
  if (detail::trim(line).empty()) throw FormatError("CSV input is empty");
  t.header = detail::split_csv_line(line);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != t.header.size())
      throw FormatError("line " + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                        " fields, found " + std::to_string(cells.size()));
    std::vector<double> row(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) row[c] = detail::parse_number(cells[c], lineno, t.header[c]);
    rows.push_back(std::move(row));
  }
  t.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(t.header.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      t.values(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  return t;
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path + "'");
  try {
    return parse_csv(in);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

/// Writes a header and the rows of `values` with 17 significant digits.
inline void write_csv(std::ostream& out, const std::vector<std::string>& header,
                      const Eigen::Ref<const Matrix>& values) {
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  out << '\n';
  const auto old = out.precision(17);
  for (Index r = 0; r < values.rows(); ++r) {
    for (Index c = 0; c < values.cols(); ++c) out << (c ? "," : "") << values(r, c);
    out << '\n';
  }
  out.precision(old);
}

/// Element-wise map applied to a predictor column after loading.
using ColumnTransform = std::function<double(double)>;

/// Named transforms: "identity", "log", "exp", "pow:B" (x -> B^x),
/// "scale:C" (x -> C x).
inline ColumnTransform parse_transform(const std::string& spec) {
  const auto colon = spec.find(':');
  const std::string name = spec.substr(0, colon);
  auto argument = [&]() {
    if (colon == std::string::npos) throw InvalidArgument("transform '" + spec + "' needs an argument");
    return detail::parse_number(spec.substr(colon + 1), 0, "transform");
  };
  if (name == "identity") return [](double v) { return v; };
  if (name == "log") return [](double v) { return std::log(v); };
  if (name == "exp") return [](double v) { return std::exp(v); };
  if (name == "pow") {
    const double base = argument();
    if (!(base > 0.0)) throw InvalidArgument("transform pow: base must be positive");
    return [base](double v) { return std::pow(base, v); };
  }
  if (name == "scale") {
    const double c = argument();
    return [c](double v) { return c * v; };
  }
  throw InvalidArgument("unknown transform '" + spec + "'");
}

/// Row filter "column OP value" with OP one of < <= > >= == !=.
struct RowFilter {
  std::string column;
  std::string op;
  double value = 0.0;

  static RowFilter parse(const std::string& expr) {
    static const char* ops[] = {"<=", ">=", "==", "!=", "<", ">"};
    for (const char* op : ops) {
      const auto pos = expr.find(op);
      if (pos == std::string::npos) continue;
      RowFilter f;
      f.column = detail::trim(expr.substr(0, pos));
      f.op = op;
      f.value = detail::parse_number(detail::trim(expr.substr(pos + std::string(op).size())), 0, "filter");
      if (f.column.empty()) break;
      return f;
    }
    throw InvalidArgument("invalid row filter '" + expr + "'");
  }

  bool keep(double v) const {
    if (op == "<") return v < value;
    if (op == "<=") return v <= value;
    if (op == ">") return v > value;
    if (op == ">=") return v >= value;
    if (op == "==") return v == value;
    return v != value;
  }
};

struct CsvSchema {
  std::string response;
  std::vector<std::string> predictors;  // empty: every other column
  std::map<std::string, ColumnTransform> transforms;
  std::vector<RowFilter> filters;  // applied to raw values before transforms
};

inline ProblemData problem_from_table(const CsvTable& t, const CsvSchema& schema) {
  const Index yc = t.column(schema.response);
  std::vector<Index> xc;
  if (schema.predictors.empty()) {
    for (Index c = 0; c < static_cast<Index>(t.header.size()); ++c)
      if (c != yc) xc.push_back(c);
  } else {
    for (const auto& name : schema.predictors) xc.push_back(t.column(name));
  }
  if (xc.empty()) throw FormatError("no predictor columns");
  for (const auto& entry : schema.transforms) {
    const Index c = t.column(entry.first);
    if (std::find(xc.begin(), xc.end(), c) == xc.end())
      throw FormatError("transform given for '" + entry.first + "', which is not a predictor");
  }

  std::vector<Index> rows;
  for (Index r = 0; r < t.values.rows(); ++r) {
    bool keep = true;
    for (const auto& f : schema.filters) keep = keep && f.keep(t.values(r, t.column(f.column)));
    if (keep) rows.push_back(r);
  }
  const Index n = static_cast<Index>(rows.size());
  if (n < 2) throw FormatError("need at least two observations, found " + std::to_string(n));
  const Index d = static_cast<Index>(xc.size());
  Matrix x(d, n);
  Vector y(n);
  for (Index i = 0; i < n; ++i) {
    const Index r = rows[static_cast<std::size_t>(i)];
    y[i] = t.values(r, yc);
    for (Index k = 0; k < d; ++k) {
      double v = t.values(r, xc[static_cast<std::size_t>(k)]);
      const auto it = schema.transforms.find(t.header[static_cast<std::size_t>(xc[static_cast<std::size_t>(k)])]);
      if (it != schema.transforms.end()) v = it->second(v);
      if (!std::isfinite(v))
        throw FormatError("transform of column '" + it->first + "' produced a non-finite value");
      x(k, i) = v;
    }
  }
  return ProblemData(std::move(x), std::move(y));
}

/// Points for prediction: one column per row of `t`, taken from the named
/// columns (every column when `names` is empty) with the given transforms.
inline Matrix points_from_table(const CsvTable& t, const std::vector<std::string>& names,
                                const std::map<std::string, ColumnTransform>& transforms = {}) {
  std::vector<Index> cols;
  if (names.empty()) {
    for (Index c = 0; c < static_cast<Index>(t.header.size()); ++c) cols.push_back(c);
  } else {
    for (const auto& name : names) cols.push_back(t.column(name));
  }
  Matrix x(static_cast<Index>(cols.size()), t.values.rows());
  for (Index k = 0; k < x.rows(); ++k) {
    const std::string& name = t.header[static_cast<std::size_t>(cols[static_cast<std::size_t>(k)])];
    const auto it = transforms.find(name);
    for (Index r = 0; r < x.cols(); ++r) {
      double v = t.values(r, cols[static_cast<std::size_t>(k)]);
      if (it != transforms.end()) v = it->second(v);
      if (!std::isfinite(v)) throw FormatError("transform of column '" + name + "' produced a non-finite value");
      x(k, r) = v;
    }
  }
  return x;
}

inline ProblemData load_csv(const std::string& path, const CsvSchema& schema) {
  const CsvTable t = read_csv(path);
  try {
    return problem_from_table(t, schema);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

}  // namespace shapereg
