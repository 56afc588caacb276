#pragma once

// Strict JSON config parsing. Two document shapes are accepted: the full
// plant (keyed by n, lambda1, ...) and the scalar cascade {lambda, psi,
// omega}. Unknown keys, missing keys, and wrong arities are rejected with
// the offending key path in the message.

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "backstep/matops.hpp"
#include "backstep/model.hpp"

namespace backstep {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ParsedConfig {
  enum class Kind { plant, simplified } kind = Kind::plant;
  PlantConfig plant;
  SimplifiedConfig simplified;
};

namespace detail {

using json = nlohmann::json;

inline double number_at(const json& doc, const std::string& key) {
  if (!doc.contains(key)) throw ConfigError("missing config key: " + key);
  const json& v = doc.at(key);
  if (!v.is_number()) throw ConfigError(key + " must be a number");
  return v.get<double>();
}

inline Vec vector_at(const json& doc, const std::string& key, int n) {
  if (!doc.contains(key)) throw ConfigError("missing config key: " + key);
  const json& v = doc.at(key);
  if (!v.is_array() || static_cast<int>(v.size()) != n)
    throw ConfigError(key + " must be an array of length " + std::to_string(n));
  Vec out(n);
  for (int i = 0; i < n; ++i) {
    if (!v[i].is_number())
      throw ConfigError(key + "[" + std::to_string(i) + "] must be a number");
    out[i] = v[i].get<double>();
  }
  return out;
}

inline Mat matrix_at(const json& doc, const std::string& key, int n) {
  if (!doc.contains(key)) throw ConfigError("missing config key: " + key);
  const json& v = doc.at(key);
  if (!v.is_array() || static_cast<int>(v.size()) != n)
    throw ConfigError(key + " must be an array of " + std::to_string(n) + " rows");
  Mat m(n);
  for (int i = 0; i < n; ++i) {
    const json& row = v[i];
    const std::string rowpath = key + "[" + std::to_string(i) + "]";
    if (!row.is_array() || static_cast<int>(row.size()) != n)
      throw ConfigError(rowpath + " must have length " + std::to_string(n));
    for (int j = 0; j < n; ++j) {
      if (!row[j].is_number())
        throw ConfigError(rowpath + "[" + std::to_string(j) + "] must be a number");
      m.at(i, j) = row[j].get<double>();
    }
  }
  return m;
}

inline void reject_unknown(const json& doc, std::initializer_list<const char*> allowed) {
  for (const auto& item : doc.items()) {
    bool ok = false;
    for (const char* key : allowed)
      if (item.key() == key) {
        ok = true;
        break;
      }
    if (!ok) throw ConfigError("unknown config key: " + item.key());
  }
}

}  // namespace detail

inline ParsedConfig parse_config(const std::string& text) {
  detail::json doc;
  try {
    doc = detail::json::parse(text);
  } catch (const detail::json::parse_error& e) {
    throw ConfigError(std::string("malformed config document: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config document must be a JSON object");

  ParsedConfig out;
  if (doc.contains("n")) {
    detail::reject_unknown(doc, {"n", "lambda1", "lambda2", "sigma12", "sigma21", "theta1",
                                 "theta2", "omega1", "omega2", "psi", "q", "rho"});
    if (!doc.at("n").is_number_integer()) throw ConfigError("n must be an integer");
    const int n = doc.at("n").get<int>();
    if (n < 1) throw ConfigError("n must be a positive integer");
    out.kind = ParsedConfig::Kind::plant;
    out.plant.n = n;
    out.plant.lambda1 = detail::number_at(doc, "lambda1");
    out.plant.lambda2 = detail::number_at(doc, "lambda2");
    out.plant.sigma12 = detail::number_at(doc, "sigma12");
    out.plant.sigma21 = detail::number_at(doc, "sigma21");
    out.plant.theta1 = detail::vector_at(doc, "theta1", n);
    out.plant.theta2 = detail::vector_at(doc, "theta2", n);
    out.plant.omega1 = detail::vector_at(doc, "omega1", n);
    out.plant.omega2 = detail::vector_at(doc, "omega2", n);
    out.plant.psi = detail::matrix_at(doc, "psi", n);
    out.plant.q = detail::number_at(doc, "q");
    out.plant.rho = detail::number_at(doc, "rho");
    return out;
  }
  if (doc.contains("lambda")) {
    detail::reject_unknown(doc, {"lambda", "psi", "omega"});
    out.kind = ParsedConfig::Kind::simplified;
    out.simplified.lambda = detail::number_at(doc, "lambda");
    out.simplified.psi = detail::number_at(doc, "psi");
    out.simplified.omega = detail::number_at(doc, "omega");
    return out;
  }
  throw ConfigError("config must contain either n (plant) or lambda (simplified)");
}

inline ParsedConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace backstep
