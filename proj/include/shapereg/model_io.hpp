#pragma once

// JSON documents for fitted models, tagged "shapereg-model/1". Numbers are
// written in shortest round-trip form, so reading a document back gives
// bit-identical doubles.

#include <Eigen/Core>

#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "shapereg/error.hpp"
#include "shapereg/model.hpp"
#include "shapereg/types.hpp"

namespace shapereg {

inline constexpr const char* kModelFormat = "shapereg-model/1";

namespace detail {

using json = nlohmann::json;

inline json vector_json(const Eigen::Ref<const Vector>& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

/// Column j of a d x n matrix becomes entry j, a list of d numbers.
inline json columns_json(const Eigen::Ref<const Matrix>& m) {
  json out = json::array();
  for (Index j = 0; j < m.cols(); ++j) out.push_back(vector_json(m.col(j)));
  return out;
}

inline Vector json_vector(const json& j, Index size, const std::string& field) {
  if (!j.is_array() || static_cast<Index>(j.size()) != size)
    throw FormatError("model field '" + field + "' must be an array of " + std::to_string(size) + " numbers");
  Vector out(size);
  for (Index i = 0; i < size; ++i) {
    const json& e = j[static_cast<std::size_t>(i)];
    if (!e.is_number()) throw FormatError("model field '" + field + "' has a non-numeric entry");
    out[i] = e.get<double>();
  }
  return out;
}

inline Matrix json_columns(const json& j, Index d, Index n, const std::string& field) {
  if (!j.is_array() || static_cast<Index>(j.size()) != n)
    throw FormatError("model field '" + field + "' must hold " + std::to_string(n) + " blocks");
  Matrix out(d, n);
  for (Index c = 0; c < n; ++c) out.col(c) = json_vector(j[static_cast<std::size_t>(c)], d, field);
  return out;
}

}  // namespace detail

inline std::string model_to_json(const FittedModel& m) {
  detail::json doc;
  doc["format"] = kModelFormat;
  doc["d"] = m.dim();
  doc["n"] = m.size();
  doc["theta_hat"] = detail::vector_json(m.theta_hat);
  doc["xi_hat"] = detail::columns_json(m.xi_hat);
  doc["anchors"] = detail::columns_json(m.anchors);
  doc["constraint"] = m.constraint;
  if (m.standardization) {
    const StandardizationRecord& s = *m.standardization;
    doc["standardization"] = {{"x_mean", detail::vector_json(s.x_mean)},
                              {"x_scale", detail::vector_json(s.x_scale)},
                              {"y_mean", s.y_mean},
                              {"y_scale", s.y_scale}};
  } else {
    doc["standardization"] = nullptr;
  }
  doc["metadata"] = m.metadata;
  return doc.dump(1) + "\n";
}

inline FittedModel model_from_json(const std::string& text) {
  detail::json doc;
  try {
    doc = detail::json::parse(text);
  } catch (const detail::json::parse_error& e) {
    throw FormatError(std::string("model document is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw FormatError("model document must be a JSON object");
  if (!doc.contains("format") || !doc["format"].is_string())
    throw FormatError("model document has no format tag");
  const std::string tag = doc["format"].get<std::string>();
  if (tag != kModelFormat)
    throw FormatError("unsupported model format '" + tag + "' (expected '" + kModelFormat + "')");
  for (const char* key : {"d", "n", "theta_hat", "xi_hat", "anchors"})
    if (!doc.contains(key)) throw FormatError(std::string("model document lacks field '") + key + "'");
  if (!doc["d"].is_number_integer() || !doc["n"].is_number_integer())
    throw FormatError("model fields 'd' and 'n' must be integers");
  const Index d = doc["d"].get<Index>();
  const Index n = doc["n"].get<Index>();
  if (d < 1 || n < 1) throw FormatError("model dimensions must be positive");

  FittedModel m;
  m.theta_hat = detail::json_vector(doc["theta_hat"], n, "theta_hat");
  m.xi_hat = detail::json_columns(doc["xi_hat"], d, n, "xi_hat");
  m.anchors = detail::json_columns(doc["anchors"], d, n, "anchors");
  if (doc.contains("constraint")) {
    if (!doc["constraint"].is_string()) throw FormatError("model field 'constraint' must be a string");
    m.constraint = doc["constraint"].get<std::string>();
  }
  if (doc.contains("standardization") && !doc["standardization"].is_null()) {
    const auto& s = doc["standardization"];
    if (!s.is_object() || !s.contains("y_mean") || !s.contains("y_scale") || !s["y_mean"].is_number() ||
        !s["y_scale"].is_number() || !s.contains("x_mean") || !s.contains("x_scale"))
      throw FormatError("model field 'standardization' is malformed");
    StandardizationRecord r;
    r.x_mean = detail::json_vector(s["x_mean"], d, "standardization.x_mean");
    r.x_scale = detail::json_vector(s["x_scale"], d, "standardization.x_scale");
    r.y_mean = s["y_mean"].get<double>();
    r.y_scale = s["y_scale"].get<double>();
    if (!(r.x_scale.minCoeff() > 0.0) || !(r.y_scale > 0.0))
      throw FormatError("model standardization scales must be positive");
    m.standardization = std::move(r);
  }
  if (doc.contains("metadata")) {
    const auto& md = doc["metadata"];
    if (!md.is_object()) throw FormatError("model field 'metadata' must be an object");
    for (const auto& [key, value] : md.items()) {
      if (!value.is_string()) throw FormatError("model metadata '" + key + "' must be a string");
      m.metadata[key] = value.get<std::string>();
    }
  }
  return m;
}

inline void save_model(const FittedModel& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write '" + path + "'");
  out << model_to_json(m);
  if (!out) throw FormatError("failed writing '" + path + "'");
}

inline FittedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return model_from_json(buf.str());
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

}  // namespace shapereg
