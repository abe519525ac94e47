#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "hints/error.hpp"

namespace hints {

/// Everything an experiment run needs. Read from a key = value file; command
/// line flags override individual fields.
struct ExperimentConfig {
  std::string mode = "solve";
  int dim = 2;
  // problem
  std::string geometry = "rect_minus_rect 0.25 0.25 0.5 0.5";
  int n_side = 15;  ///< 2D solve grid
  int n = 30;       ///< 1D interior nodes of the solve grid
  double k = std::sqrt(21.0);
  std::string bc = "outer_impedance_inner_dirichlet";
  double rhs_mean = 10.0;
  double rhs_variance = 10.0;
  // data
  std::vector<std::string> train_geometries{"unit_square", "rectangle 0 0 1 0.6", "rectangle 0.2 0 0.8 1",
                                            "l_shape 0.5 0.5", "rect_minus_rect 0.55 0.55 0.75 0.75"};
  int train_n = 30;  ///< 1D training grid (sensor count)
  int n_samples = 300;
  double epsilon = 0.0;
  double grf_sigma = 0.1;
  double grf_length = 0.1;
  double std_1d = 0.02;
  // model and training
  std::string variant = "masked";
  std::string collapse = "learned_residual";
  int epochs = 1000;
  int batch = 64;
  double lr = 1e-4;
  int lr_decay_epoch = 800;
  std::string dataset;  ///< empty: <out>/dataset.hdat
  std::string model;    ///< empty: <out>/model.hnet
  // solvers
  std::vector<std::string> methods{"gs", "hints-gs"};
  std::vector<int> J{20, 40, 60};
  double alpha = 0.3;
  double theta = 1.0;
  int m = 10;
  double tol = 1e-10;
  int maxit = 20000;
  // run
  std::uint64_t seed = 0;
  std::int64_t model_seed = -1;  // -1 derives from seed
  std::int64_t train_seed = -1;
  std::string out = "out";
  bool strict = false;
  bool timing = false;
  bool save_iterates = false;

  /// Sets one field from its textual value. Throws ConfigError naming the key.
  void set(const std::string& key, const std::string& value);

  /// All fields as key = value lines, in a fixed order.
  std::string render() const;

  void validate() const {
    static const std::vector<std::string> modes{"generate", "train", "solve", "sweep", "diagnose"};
    if (std::find(modes.begin(), modes.end(), mode) == modes.end()) throw ConfigError("mode: unknown mode '" + mode + "'");
    if (dim != 1 && dim != 2) throw ConfigError("dim: must be 1 or 2");
    if (J.empty()) throw ConfigError("J: sweep list is empty");
    if (methods.empty()) throw ConfigError("methods: list is empty");
    for (int j : J)
      if (j < 1) throw ConfigError("J: entries must be >= 1");
    if (!(alpha > 0)) throw ConfigError("alpha: must be positive");
    if (!(tol > 0 && tol < 1)) throw ConfigError("tol: must lie in (0,1)");
    if (n_side < 3) throw ConfigError("n_side: must be >= 3");
    if (n < 2 || train_n < 2) throw ConfigError("n: must be >= 2");
    if (maxit < 1) throw ConfigError("maxit: must be >= 1");
  }
};

namespace detail {
inline std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(const std::string& v, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, sep)) {
    tok = trim(tok);
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos == v.size()) return d;
  } catch (...) {
  }
  throw ConfigError(key + ": expected a number, got '" + v + "'");
}

inline long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    long long i = std::stoll(v, &pos);
    if (pos == v.size()) return i;
  } catch (...) {
  }
  throw ConfigError(key + ": expected an integer, got '" + v + "'");
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T, typename F>
std::string join(const std::vector<T>& v, const char* sep, F&& f) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? sep : "") + f(v[i]);
  return s;
}
}  // namespace detail

inline void ExperimentConfig::set(const std::string& key, const std::string& raw) {
  using namespace detail;
  const std::string v = trim(raw);
  auto as_int = [&] { return static_cast<int>(to_int(key, v)); };
  if (key == "mode") mode = v;
  else if (key == "dim") dim = as_int();
  else if (key == "geometry") geometry = v;
  else if (key == "n_side") n_side = as_int();
  else if (key == "n") n = as_int();
  else if (key == "k") k = to_double(key, v);
  else if (key == "k2") {
    double k2 = to_double(key, v);
    if (k2 < 0) throw ConfigError("k2: must be non-negative");
    k = std::sqrt(k2);
  }
  else if (key == "bc") bc = v;
  else if (key == "rhs_mean") rhs_mean = to_double(key, v);
  else if (key == "rhs_variance") rhs_variance = to_double(key, v);
  else if (key == "train_geometries") train_geometries = split_list(v, ';');
  else if (key == "train_n") train_n = as_int();
  else if (key == "n_samples") n_samples = as_int();
  else if (key == "epsilon") epsilon = to_double(key, v);
  else if (key == "grf_sigma") grf_sigma = to_double(key, v);
  else if (key == "grf_length") grf_length = to_double(key, v);
  else if (key == "std_1d") std_1d = to_double(key, v);
  else if (key == "variant") variant = v;
  else if (key == "collapse") collapse = v;
  else if (key == "epochs") epochs = as_int();
  else if (key == "batch") batch = as_int();
  else if (key == "lr") lr = to_double(key, v);
  else if (key == "lr_decay_epoch") lr_decay_epoch = as_int();
  else if (key == "dataset") dataset = v;
  else if (key == "model") model = v;
  else if (key == "methods") methods = split_list(v, ',');
  else if (key == "J") {
    J.clear();
    for (const auto& s : split_list(v, ',')) J.push_back(static_cast<int>(to_int(key, s)));
  }
  else if (key == "alpha") alpha = to_double(key, v);
  else if (key == "theta") theta = to_double(key, v);
  else if (key == "m") m = as_int();
  else if (key == "tol") tol = to_double(key, v);
  else if (key == "maxit") maxit = as_int();
  else if (key == "seed") seed = static_cast<std::uint64_t>(to_int(key, v));
  else if (key == "model_seed") model_seed = to_int(key, v);
  else if (key == "train_seed") train_seed = to_int(key, v);
  else if (key == "out") out = v;
  else if (key == "strict") strict = to_bool(key, v);
  else if (key == "timing") timing = to_bool(key, v);
  else if (key == "save_iterates") save_iterates = to_bool(key, v);
  else throw ConfigError("unknown key '" + key + "'");
}

inline std::string ExperimentConfig::render() const {
  using namespace detail;
  auto s = [](const std::string& x) { return x; };
  auto i = [](int x) { return std::to_string(x); };
  std::ostringstream os;
  os << "mode = " << mode << "\n"
     << "dim = " << dim << "\n"
     << "geometry = " << geometry << "\n"
     << "n_side = " << n_side << "\n"
     << "n = " << n << "\n"
     << "k = " << num(k) << "\n"
     << "bc = " << bc << "\n"
     << "rhs_mean = " << num(rhs_mean) << "\n"
     << "rhs_variance = " << num(rhs_variance) << "\n"
     << "train_geometries = " << join(train_geometries, ";", s) << "\n"
     << "train_n = " << train_n << "\n"
     << "n_samples = " << n_samples << "\n"
     << "epsilon = " << num(epsilon) << "\n"
     << "grf_sigma = " << num(grf_sigma) << "\n"
     << "grf_length = " << num(grf_length) << "\n"
     << "std_1d = " << num(std_1d) << "\n"
     << "variant = " << variant << "\n"
     << "collapse = " << collapse << "\n"
     << "epochs = " << epochs << "\n"
     << "batch = " << batch << "\n"
     << "lr = " << num(lr) << "\n"
     << "lr_decay_epoch = " << lr_decay_epoch << "\n"
     << "dataset = " << dataset << "\n"
     << "model = " << model << "\n"
     << "methods = " << join(methods, ",", s) << "\n"
     << "J = " << join(J, ",", i) << "\n"
     << "alpha = " << num(alpha) << "\n"
     << "theta = " << num(theta) << "\n"
     << "m = " << m << "\n"
     << "tol = " << num(tol) << "\n"
     << "maxit = " << maxit << "\n"
     << "seed = " << seed << "\n"
     << "model_seed = " << model_seed << "\n"
     << "train_seed = " << train_seed << "\n"
     << "out = " << out << "\n"
     << "strict = " << (strict ? "true" : "false") << "\n"
     << "timing = " << (timing ? "true" : "false") << "\n"
     << "save_iterates = " << (save_iterates ? "true" : "false") << "\n";
  return os.str();
}

/// Applies "key = value" lines; '#' starts a comment. Errors carry
/// "<source>:<line>: " in front of the field diagnostic.
inline void apply_config_text(ExperimentConfig& cfg, const std::string& text, const std::string& source = "config") {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::string t = detail::trim(line);
    if (t.empty()) continue;
    auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value', got '" + t + "'");
    std::string key = detail::trim(std::string_view(t).substr(0, eq));
    std::string value = detail::trim(std::string_view(t).substr(eq + 1));
    try {
      cfg.set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  ExperimentConfig cfg;
  apply_config_text(cfg, ss.str(), path);
  return cfg;
}

}  // namespace hints
