#pragma once

// Text form of constraint sets, as accepted on the command line:
//   free
//   monotone:+1,+2,-3        1-based coordinates, + nondecreasing, - nonincreasing
//   box:L=0,U=1              scalar bounds apply to every coordinate
//   box:L=0;0,U=0.5;inf      per-coordinate bounds separated by ';'
//   lip:q=2,L=1.5            ||grad||_q <= L with q in {1, 2, inf}
//   lip:data,k=5,p=2         per-point bounds estimated from the data
// Bounds are read in raw units.

#include <Eigen/Core>

#include <charconv>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "shapereg/constraints.hpp"
#include "shapereg/data.hpp"
#include "shapereg/error.hpp"
#include "shapereg/lipschitz.hpp"
#include "shapereg/types.hpp"

namespace shapereg {

struct ConstraintSpec {
  enum class Kind { Free, Monotone, Box, Lipschitz, DataLipschitz };

  Kind kind = Kind::Free;
  std::string text;
  std::vector<Index> nondecreasing;  // zero-based
  std::vector<Index> nonincreasing;
  std::vector<double> lower;  // one entry means "every coordinate"
  std::vector<double> upper;
  Norm norm = Norm::Two;  // ball norm q, or ratio norm p for DataLipschitz
  double radius = 1.0;
  int neighbors = 5;
};

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(trim(cur));
  return out;
}

inline double grammar_number(const std::string& s, const std::string& where) {
  if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (s.empty() || used != s.size() || std::isnan(v))
    throw InvalidArgument("constraint '" + where + "': '" + s + "' is not a number");
  return v;
}

inline Norm grammar_norm(const std::string& s, const std::string& where) {
  if (s == "1") return Norm::One;
  if (s == "2") return Norm::Two;
  if (s == "inf") return Norm::Inf;
  throw InvalidArgument("constraint '" + where + "': norm must be 1, 2 or inf, got '" + s + "'");
}

}  // namespace detail

inline ConstraintSpec parse_constraint(const std::string& text) {
  ConstraintSpec spec;
  spec.text = detail::trim(text);
  const std::string& t = spec.text;
  const auto colon = t.find(':');
  const std::string head = t.substr(0, colon);
  const std::string body = colon == std::string::npos ? "" : t.substr(colon + 1);
  auto fail = [&](const std::string& why) -> InvalidArgument {
    return InvalidArgument("constraint '" + t + "': " + why);
  };

  if (head == "free") {
    if (!body.empty()) throw fail("free takes no arguments");
    return spec;
  }
  if (body.empty()) throw fail("expected free, monotone:..., box:..., or lip:...");

  const auto items = detail::split(body, ',');
  if (head == "monotone") {
    spec.kind = ConstraintSpec::Kind::Monotone;
    for (const auto& item : items) {
      if (item.size() < 2 || (item[0] != '+' && item[0] != '-')) throw fail("entries look like +1 or -2");
      const double k = detail::grammar_number(item.substr(1), t);
      if (k < 1 || k != std::floor(k)) throw fail("coordinates are positive integers");
      (item[0] == '+' ? spec.nondecreasing : spec.nonincreasing).push_back(static_cast<Index>(k) - 1);
    }
    return spec;
  }

  auto key_value = [&](const std::string& item) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw fail("expected key=value, got '" + item + "'");
    return std::make_pair(detail::trim(item.substr(0, eq)), detail::trim(item.substr(eq + 1)));
  };

  if (head == "box") {
    spec.kind = ConstraintSpec::Kind::Box;
    bool has_l = false, has_u = false;
    for (const auto& item : items) {
      const auto [key, value] = key_value(item);
      std::vector<double> vals;
      for (const auto& v : detail::split(value, ';')) vals.push_back(detail::grammar_number(v, t));
      if (key == "L") {
        spec.lower = std::move(vals);
        has_l = true;
      } else if (key == "U") {
        spec.upper = std::move(vals);
        has_u = true;
      } else {
        throw fail("unknown key '" + key + "'");
      }
    }
    if (!has_l) spec.lower = {-std::numeric_limits<double>::infinity()};
    if (!has_u) spec.upper = {std::numeric_limits<double>::infinity()};
    if (!has_l && !has_u) throw fail("box needs L or U");
    return spec;
  }

  if (head == "lip") {
    if (items.front() == "data") {
      spec.kind = ConstraintSpec::Kind::DataLipschitz;
      for (std::size_t i = 1; i < items.size(); ++i) {
        const auto [key, value] = key_value(items[i]);
        if (key == "k") {
          const double k = detail::grammar_number(value, t);
          if (k < 1 || k != std::floor(k)) throw fail("k must be a positive integer");
          spec.neighbors = static_cast<int>(k);
        } else if (key == "p") {
          spec.norm = detail::grammar_norm(value, t);
        } else {
          throw fail("unknown key '" + key + "'");
        }
      }
      return spec;
    }
    spec.kind = ConstraintSpec::Kind::Lipschitz;
    bool has_l = false;
    for (const auto& item : items) {
      const auto [key, value] = key_value(item);
      if (key == "q") {
        spec.norm = detail::grammar_norm(value, t);
      } else if (key == "L") {
        spec.radius = detail::grammar_number(value, t);
        if (!(spec.radius > 0.0) || std::isinf(spec.radius)) throw fail("L must be positive and finite");
        has_l = true;
      } else {
        throw fail("unknown key '" + key + "'");
      }
    }
    if (!has_l) throw fail("lip needs L");
    return spec;
  }
  throw fail("unknown constraint kind '" + head + "'");
}

namespace detail {

inline std::string grammar_text(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

inline std::string grammar_list(const Vector& v) {
  bool same = true;
  for (Index k = 1; k < v.size(); ++k) same = same && v[k] == v[0];
  if (same && v.size() > 0) return grammar_text(v[0]);
  std::string out;
  for (Index k = 0; k < v.size(); ++k) out += (k ? ";" : "") + grammar_text(v[k]);
  return out;
}

}  // namespace detail

/// Text that parse_constraint maps back to `c`. Per-point sets have no text form.
inline std::string format_constraint(const ConstraintSet& c) {
  return std::visit(
      [](const auto& s) -> std::string {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Free>) {
          return "free";
        } else if constexpr (std::is_same_v<T, Monotone>) {
          if (s.nondecreasing.empty() && s.nonincreasing.empty()) return "free";
          std::string out = "monotone:";
          bool first = true;
          auto add = [&](char sign, Index k) {
            out += (first ? "" : ",") + std::string(1, sign) + std::to_string(k + 1);
            first = false;
          };
          for (Index k : s.nondecreasing) add('+', k);
          for (Index k : s.nonincreasing) add('-', k);
          return out;
        } else if constexpr (std::is_same_v<T, Box>) {
          return "box:L=" + detail::grammar_list(s.lower) + ",U=" + detail::grammar_list(s.upper);
        } else if constexpr (std::is_same_v<T, LipschitzBall>) {
          const char* q = s.q == Norm::One ? "1" : s.q == Norm::Two ? "2" : "inf";
          return std::string("lip:q=") + q + ",L=" + detail::grammar_text(s.radius);
        } else {
          throw InvalidArgument("format_constraint: per-point sets have no text form");
        }
      },
      c.variant());
}

namespace detail {

inline Vector broadcast(const std::vector<double>& v, Index d, const std::string& what) {
  if (v.size() == 1) return Vector::Constant(d, v.front());
  if (static_cast<Index>(v.size()) != d)
    throw InvalidArgument("constraint '" + what + "': expected 1 or " + std::to_string(d) + " bounds, got " +
                          std::to_string(v.size()));
  return Eigen::Map<const Vector>(v.data(), d);
}

}  // namespace detail

/// Constraint set for a problem `fit_data` (already standardized when
/// `record` is present). Raw-unit bounds are mapped through
/// standardize_constraint; data-driven bounds are estimated on `fit_data`
/// directly and need no mapping.
inline ConstraintSet resolve_constraint(const ConstraintSpec& spec, const ProblemData& fit_data,
                                        const std::optional<StandardizationRecord>& record = std::nullopt,
                                        LipschitzDiagnostics* diag = nullptr) {
  const Index d = fit_data.dim();
  ConstraintSet raw;
  switch (spec.kind) {
    case ConstraintSpec::Kind::Free: return ConstraintSet::free();
    case ConstraintSpec::Kind::Monotone: raw = ConstraintSet::monotone(spec.nondecreasing, spec.nonincreasing); break;
    case ConstraintSpec::Kind::Box:
      raw = ConstraintSet::box(detail::broadcast(spec.lower, d, spec.text), detail::broadcast(spec.upper, d, spec.text));
      break;
    case ConstraintSpec::Kind::Lipschitz: raw = ConstraintSet::lipschitz(spec.norm, spec.radius); break;
    case ConstraintSpec::Kind::DataLipschitz: {
      const Vector bounds = estimate_lipschitz(fit_data, spec.neighbors, spec.norm, diag);
      return build_perpoint_problem(fit_data, bounds, spec.norm);
    }
  }
  raw.validate(d, fit_data.size());
  return record ? standardize_constraint(raw, *record) : raw;
}

}  // namespace shapereg
