// Experiment configuration: flat `key = value` lines under `[section]` headers.
#pragma once

#include "xrt/common.hpp"
#include "xrt/cutoff.hpp"
#include "xrt/fields.hpp"
#include "xrt/grid.hpp"
#include "xrt/metric.hpp"

#include <cstdint>
#include <cstdio>
#include <functional>
#include <locale>
#include <map>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

namespace xrt {

class ConfigError : public Error {
 public:
  using Error::Error;
};

struct ExperimentConfig {
  // [experiment]
  std::string name;
  std::string output_dir = "out";
  std::uint64_t seed = 1;
  // [metric]
  std::string family;  // euclidean | gaussian | curvature | finite
  double eps = 0.2;
  int k = 10;
  double K = 0.0;
  double x0_1 = 0.3;
  double x0_2 = 0.1;
  double delta_ext = 0.25;
  // [grid]
  int dims = 64;
  int padding = 4;
  // [fan]
  int n_theta = 180;
  int n_alpha = 90;
  // [cutoff]
  double psi_in = 0.75, psi_out = 0.9;
  double phi_in = 0.75, phi_out = 0.95;
  double chi_in = 0.25, chi_out = 0.5;
  double zeta_in = 2.0, zeta_out = 4.0;
  // [input]
  std::string field = "gaussian";  // gaussian | disk | random | zero
  double sigma = 0.15;
  double radius = 0.5;
  // [solver]
  int max_iter = 30;
  double tol = 1e-6;
  // [run]
  unsigned workers = 0;

  bool operator==(const ExperimentConfig&) const = default;

  MetricField metric() const {
    if (family == "euclidean") return euclidean_metric(delta_ext);
    if (family == "gaussian") return gaussian_metric(eps, delta_ext);
    if (family == "curvature") return constant_curvature_metric(K, delta_ext);
    if (family == "finite") return finite_regularity_metric(k, eps, Vec2(x0_1, x0_2), delta_ext);
    throw ConfigError("metric.family must be one of euclidean, gaussian, curvature, finite (got '" + family + "')");
  }

  CutoffSpec cutoff() const {
    CutoffSpec c;
    c.psi = {Vec2::Zero(), psi_in, psi_out};
    c.phi = {Vec2::Zero(), phi_in, phi_out};
    c.chi = {Vec2::Zero(), chi_in, chi_out};
    c.zeta_in = zeta_in;
    c.zeta_out = zeta_out;
    return c;
  }

  FanBeam fan() const { return {n_theta, n_alpha}; }

  /// The configured input field sampled on the dims x dims grid.
  ScalarGrid input(int n = 0) const {
    n = n > 0 ? n : dims;
    if (field == "gaussian") return ScalarGrid::sample(n, GaussianField{sigma, Vec2::Zero()});
    if (field == "disk") return ScalarGrid::sample(n, DiskIndicator{radius, Vec2::Zero()});
    if (field == "random") return ScalarGrid::sample(n, RandomSmoothField(seed, 12, 6.0, radius));
    if (field == "zero") return ScalarGrid::square(n);
    throw ConfigError("input.field must be one of gaussian, disk, random, zero (got '" + field + "')");
  }

  void validate() const {
    auto pow2 = [](int n) { return n > 0 && (n & (n - 1)) == 0; };
    if (name.empty()) throw ConfigError("experiment.name must not be empty");
    if (!pow2(dims)) throw ConfigError("grid.dims must be a power of two (got " + std::to_string(dims) + ")");
    if (padding < 1) throw ConfigError("grid.padding must be >= 1");
    if (n_theta < 1 || n_alpha < 1) throw ConfigError("fan.n_theta and fan.n_alpha must be >= 1");
    if (max_iter < 0 || !(tol >= 0.0)) throw ConfigError("solver.max_iter and solver.tol must be >= 0");
    if (!(delta_ext > 0.0)) throw ConfigError("metric.delta_ext must be > 0");
    if (!(sigma > 0.0) || !(radius > 0.0)) throw ConfigError("input.sigma and input.radius must be > 0");
    input(1);
    try {
      cutoff().validate();
      metric();
    } catch (const InputError& e) {
      throw ConfigError(e.what());
    }
  }
};

namespace detail {

struct ConfigKey {
  std::string name;  // section.key
  bool required;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <class T>
T parse_value(const std::string& key, const std::string& v) {
  std::istringstream in(v);
  in.imbue(std::locale::classic());
  T out{};
  if constexpr (std::is_unsigned_v<T>) {
    if (!v.empty() && v[0] == '-') throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  in >> out;
  if (in.fail() || !in.eof()) {
    const char* kind = std::is_integral_v<T> ? "an integer" : "a number";
    throw ConfigError(key + ": expected " + kind + ", got '" + v + "'");
  }
  return out;
}

inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

template <class T>
ConfigKey key(std::string name, T ExperimentConfig::*field, bool required = false) {
  ConfigKey k{name, required, {}, {}};
  k.set = [name, field](ExperimentConfig& c, const std::string& v) {
    if constexpr (std::is_same_v<T, std::string>)
      c.*field = v;
    else
      c.*field = parse_value<T>(name, v);
  };
  k.get = [field](const ExperimentConfig& c) {
    if constexpr (std::is_same_v<T, std::string>)
      return c.*field;
    else if constexpr (std::is_floating_point_v<T>)
      return format_double(c.*field);
    else
      return std::to_string(c.*field);
  };
  return k;
}

inline const std::vector<ConfigKey>& config_keys() {
  using C = ExperimentConfig;
  static const std::vector<ConfigKey> keys = {
      key("experiment.name", &C::name, true),
      key("experiment.output_dir", &C::output_dir),
      key("experiment.seed", &C::seed),
      key("metric.family", &C::family, true),
      key("metric.eps", &C::eps),
      key("metric.k", &C::k),
      key("metric.K", &C::K),
      key("metric.x0_1", &C::x0_1),
      key("metric.x0_2", &C::x0_2),
      key("metric.delta_ext", &C::delta_ext),
      key("grid.dims", &C::dims),
      key("grid.padding", &C::padding),
      key("fan.n_theta", &C::n_theta),
      key("fan.n_alpha", &C::n_alpha),
      key("cutoff.psi_in", &C::psi_in),
      key("cutoff.psi_out", &C::psi_out),
      key("cutoff.phi_in", &C::phi_in),
      key("cutoff.phi_out", &C::phi_out),
      key("cutoff.chi_in", &C::chi_in),
      key("cutoff.chi_out", &C::chi_out),
      key("cutoff.zeta_in", &C::zeta_in),
      key("cutoff.zeta_out", &C::zeta_out),
      key("input.field", &C::field),
      key("input.sigma", &C::sigma),
      key("input.radius", &C::radius),
      key("solver.max_iter", &C::max_iter),
      key("solver.tol", &C::tol),
      key("run.workers", &C::workers),
  };
  return keys;
}

}  // namespace detail

inline std::string valid_config_keys() {
  std::string s;
  for (const auto& k : detail::config_keys()) s += (s.empty() ? "" : ", ") + k.name;
  return s;
}

inline ExperimentConfig config_parse(const std::string& text) {
  ExperimentConfig c;
  std::map<std::string, const detail::ConfigKey*> by_name;
  for (const auto& k : detail::config_keys()) by_name[k.name] = &k;
  std::map<std::string, bool> seen;
  std::string section;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    auto hash = raw.find('#');
    std::string line = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    std::string where = "line " + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    std::string name = detail::trim(line.substr(0, eq));
    if (!section.empty()) name = section + "." + name;
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw ConfigError(where + "unknown key '" + name + "'; valid keys: " + valid_config_keys());
    if (seen[name]) throw ConfigError(where + "duplicate key '" + name + "'");
    seen[name] = true;
    it->second->set(c, detail::trim(line.substr(eq + 1)));
  }
  for (const auto& k : detail::config_keys())
    if (k.required && !seen[k.name]) throw ConfigError("missing required key '" + k.name + "'");
  c.validate();
  return c;
}

inline std::string config_serialize(const ExperimentConfig& c) {
  std::string out, section;
  for (const auto& k : detail::config_keys()) {
    auto dot = k.name.find('.');
    std::string s = k.name.substr(0, dot);
    if (s != section) {
      out += (out.empty() ? "[" : "\n[") + s + "]\n";
      section = s;
    }
    out += k.name.substr(dot + 1) + " = " + k.get(c) + "\n";
  }
  return out;
}

/// FNV-1a 64 of the serialized config without the keys that must not affect
/// outputs (output directory, worker count).
inline std::string config_hash(const ExperimentConfig& c) {
  ExperimentConfig h = c;
  h.output_dir.clear();
  h.workers = 0;
  std::uint64_t v = 0xcbf29ce484222325ull;
  for (unsigned char ch : config_serialize(h)) {
    v ^= ch;
    v *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace xrt
