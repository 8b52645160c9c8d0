#ifndef POISSON_MALLIAVIN_CLI_CONFIG_HPP
#define POISSON_MALLIAVIN_CLI_CONFIG_HPP

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace pm::cli {

/// Bad command line or config document (exit status 1).
class config_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct EmbeddingParams {
  std::vector<double> b_lo{0.0};
  std::vector<double> b_hi{10.0};
  std::vector<double> offset_lo{-1.0};
  std::vector<double> offset_hi{0.0};
  double h_height = 1.0;
  double g_a = 1.0; // g(n) = min(g_a + g_b n, y_cap)
  double g_b = 0.0;
  double y_cap = 1.0;
  double u = 1.0;
};

struct SweepSpec {
  std::string parameter; // t | d | b_volume
  std::vector<double> values;
};

struct OracleParams {
  std::vector<double> weights{0.2, 0.3, 0.4};
  std::size_t n_max = 25;
  std::size_t integrands = 10;
  std::size_t kernels = 20;
  bool corrupt = false; // adds an identity that must fail
};

struct ExperimentConfig {
  std::string model = "pareto"; // pareto | embedding | constant
  std::size_t d = 1;
  double t = 100.0;
  double constant_value = 1.0;
  EmbeddingParams embedding;
  std::size_t n_sigma = 10000;
  std::size_t n_outer = 1000;
  std::size_t n_space = 16;
  std::size_t n_samples = 10000;
  std::size_t node_count = 4096;
  std::optional<std::uint64_t> seed;
  unsigned workers = 1;
  bool cyclic = false;
  std::string output;
  std::optional<SweepSpec> sweep;
  OracleParams oracle;
};

namespace detail {

using nlohmann::json;

inline void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                           const std::string& where) {
  if (!obj.is_object()) {
    throw config_error(where + " must be a JSON object");
  }
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) {
      throw config_error("unknown key '" + key + "' in " + where);
    }
  }
}

inline bool is_nonneg_integer(const json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

template <class T>
void read(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) {
    return;
  }
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw config_error(std::string("bad value for '") + key + "': " + e.what());
  }
}

inline void read_count(const json& obj, const char* key, std::size_t& out) {
  if (!obj.contains(key)) {
    return;
  }
  const auto& v = obj.at(key);
  if (!is_nonneg_integer(v)) {
    throw config_error(std::string("'") + key + "' must be a non-negative integer");
  }
  out = v.get<std::size_t>();
}

} // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& doc) {
  using detail::read;
  using detail::read_count;
  detail::reject_unknown(doc,
                         {"model", "d", "t", "constant_value", "embedding", "n_sigma", "n_outer",
                          "n_space", "n_samples", "node_count", "seed", "workers", "cyclic",
                          "output", "sweep", "oracle"},
                         "config");
  ExperimentConfig c;
  read(doc, "model", c.model);
  read_count(doc, "d", c.d);
  read(doc, "t", c.t);
  read(doc, "constant_value", c.constant_value);
  read_count(doc, "n_sigma", c.n_sigma);
  read_count(doc, "n_outer", c.n_outer);
  read_count(doc, "n_space", c.n_space);
  read_count(doc, "n_samples", c.n_samples);
  read_count(doc, "node_count", c.node_count);
  if (doc.contains("seed")) {
    if (!detail::is_nonneg_integer(doc["seed"])) {
      throw config_error("'seed' must be a non-negative integer");
    }
    c.seed = doc["seed"].get<std::uint64_t>();
  }
  if (doc.contains("workers")) {
    std::size_t w = 0;
    read_count(doc, "workers", w);
    c.workers = static_cast<unsigned>(w);
  }
  read(doc, "cyclic", c.cyclic);
  read(doc, "output", c.output);
  if (doc.contains("embedding")) {
    const auto& e = doc["embedding"];
    detail::reject_unknown(e,
                           {"b_lo", "b_hi", "offset_lo", "offset_hi", "h_height", "g_a", "g_b",
                            "y_cap", "u"},
                           "embedding");
    read(e, "b_lo", c.embedding.b_lo);
    read(e, "b_hi", c.embedding.b_hi);
    read(e, "offset_lo", c.embedding.offset_lo);
    read(e, "offset_hi", c.embedding.offset_hi);
    read(e, "h_height", c.embedding.h_height);
    read(e, "g_a", c.embedding.g_a);
    read(e, "g_b", c.embedding.g_b);
    read(e, "y_cap", c.embedding.y_cap);
    read(e, "u", c.embedding.u);
  }
  if (doc.contains("sweep")) {
    const auto& s = doc["sweep"];
    detail::reject_unknown(s, {"parameter", "values"}, "sweep");
    SweepSpec sw;
    read(s, "parameter", sw.parameter);
    read(s, "values", sw.values);
    c.sweep = sw;
  }
  if (doc.contains("oracle")) {
    const auto& o = doc["oracle"];
    detail::reject_unknown(o, {"weights", "n_max", "integrands", "kernels", "corrupt"}, "oracle");
    read(o, "weights", c.oracle.weights);
    read_count(o, "n_max", c.oracle.n_max);
    read_count(o, "integrands", c.oracle.integrands);
    read_count(o, "kernels", c.oracle.kernels);
    read(o, "corrupt", c.oracle.corrupt);
  }
  return c;
}

/// Checks everything a command needs before any work starts.
inline void validate(const ExperimentConfig& c) {
  if (c.model != "pareto" && c.model != "embedding" && c.model != "constant") {
    throw config_error("model must be one of pareto, embedding, constant");
  }
  if (!c.seed) {
    throw config_error("a seed is required (config 'seed' or --seed)");
  }
  if (c.d < 1) {
    throw config_error("'d' must be >= 1");
  }
  if (!(c.t > 0.0)) {
    throw config_error("'t' must be positive");
  }
  if (c.n_sigma < 2 || c.n_outer < 2) {
    throw config_error("'n_sigma' and 'n_outer' must be >= 2");
  }
  if (c.n_space < 1 || c.node_count < 1 || c.workers < 1) {
    throw config_error("'n_space', 'node_count' and 'workers' must be >= 1");
  }
  if (c.sweep) {
    const auto& p = c.sweep->parameter;
    if (p != "t" && p != "d" && p != "b_volume") {
      throw config_error("sweep parameter must be one of t, d, b_volume");
    }
    if (c.sweep->values.empty()) {
      throw config_error("sweep needs at least one value");
    }
    if (p == "b_volume" && c.model != "embedding") {
      throw config_error("b_volume sweeps need the embedding model");
    }
  }
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw config_error("cannot open config file '" + path + "'");
  }
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw config_error("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(doc);
}

} // namespace pm::cli

#endif
