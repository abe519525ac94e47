#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hints/config.hpp"
#include "hints/datagen.hpp"
#include "hints/deeponet.hpp"
#include "hints/discretize.hpp"
#include "hints/hints.hpp"
#include "hints/io.hpp"
#include "hints/linalg.hpp"
#include "hints/parallel.hpp"
#include "hints/report.hpp"

namespace hints {

// --- final iterates ----------------------------------------------------------------
// "HVEC1", u64 n, c128 x[n], u64 hash.

inline void save_vector(const CVector& x, const std::string& path) {
  io::Writer w;
  w.raw("HVEC1");
  w.u64(static_cast<std::uint64_t>(x.size()));
  for (Eigen::Index i = 0; i < x.size(); ++i) w.c128(x(i));
  w.seal();
  w.save(path);
}

inline CVector load_vector(const std::string& path) {
  io::Reader r = io::Reader::from_file(path);
  io::expect_magic(r, "HVEC", '1');
  r.verify_seal();
  CVector x(static_cast<Eigen::Index>(r.u64()));
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = r.c128();
  return x;
}

// --- problem setup -----------------------------------------------------------------

inline Problem experiment_problem(const ExperimentConfig& c) {
  if (c.dim == 1) return make_problem_1d(c.n, c.k);
  return make_problem_2d(parse_geometry(c.geometry), c.n_side, c.k, parse_bc_policy(c.bc));
}

inline std::string problem_label(const ExperimentConfig& c) { return c.dim == 1 ? "interval" : c.geometry; }

/// Solve-mode right-hand side: i.i.d. normal(rhs_mean, rhs_variance) at every unknown.
inline CVector experiment_rhs(const ExperimentConfig& c, std::size_t n) {
  std::mt19937_64 rng(derive_seed(c.seed, 0x726873));
  std::normal_distribution<double> nd(c.rhs_mean, std::sqrt(c.rhs_variance));
  CVector b(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = nd(rng);
  return b;
}

inline std::string dataset_path(const ExperimentConfig& c) {
  return c.dataset.empty() ? (std::filesystem::path(c.out) / "dataset.hdat").string() : c.dataset;
}

inline std::string model_path(const ExperimentConfig& c) {
  return c.model.empty() ? (std::filesystem::path(c.out) / "model.hnet").string() : c.model;
}

inline bool is_hints_method(const std::string& m) { return m == "hints-gs" || m == "hints-gmres"; }

inline void check_method(const std::string& m) {
  static const std::vector<std::string> known{"gs", "jacobi", "gmres", "gmres-full", "hints-gs", "hints-gmres"};
  if (std::find(known.begin(), known.end(), m) == known.end())
    throw ConfigError("methods: unknown method '" + m + "'");
}

inline HintsConfig hints_config(const ExperimentConfig& c, const std::string& method, int J) {
  HintsConfig h;
  h.J = J;
  h.alpha = c.alpha;
  h.theta = c.theta;
  h.inner = method == "hints-gmres" ? InnerMethod::gmres : InnerMethod::gs;
  h.m = static_cast<std::size_t>(c.m);
  h.tol = c.tol;
  h.maxit = static_cast<std::size_t>(c.maxit);
  return h;
}

/// Runs one method on the system. `op` is required for the hybrid methods.
inline SolveResult run_method(const ExperimentConfig& c, const std::string& method, int J, const ComplexSparseSystem& sys,
                              const CorrectionOperator* op) {
  check_method(method);
  SolverOptions opt;
  opt.tol = c.tol;
  opt.maxit = static_cast<std::size_t>(c.maxit);
  const CVector x0 = CVector::Zero(sys.rhs.size());
  if (method == "gs") return gauss_seidel(sys.A, sys.rhs, x0, opt);
  if (method == "jacobi") return jacobi(sys.A, sys.rhs, x0, opt);
  if (method == "gmres") return gmres(sys.A, sys.rhs, x0, static_cast<std::size_t>(c.m), opt);
  if (method == "gmres-full") return gmres(sys.A, sys.rhs, x0, 0, opt);
  if (!op) throw ConfigError("method '" + method + "' needs a model");
  return hints_iterate(sys, *op, hints_config(c, method, J), x0);
}

/// Sensors the model reads for this problem: the geometry's 15x15 set in 2D,
/// the model's own training lattice in 1D.
inline SensorSet model_sensors(const Problem& p, const ModelConfig& mc) {
  if (mc.dim != p.system.dim) throw DimensionError("model and problem differ in dimension");
  return p.system.dim == 1 ? build_sensor_set_1d(mc.n_sensors) : p.sensors;
}

// --- spectral diagnostic ------------------------------------------------------------

struct SpectralStats {
  std::size_t deeponet_steps = 0;
  std::size_t deeponet_low_reduced = 0;  ///< steps lowering the energy of modes 1..low_max
  std::size_t gs_steps = 0;
  std::size_t gs_high_reduced = 0;  ///< sweeps lowering the energy of modes n/2..n

  double deeponet_fraction() const { return deeponet_steps ? double(deeponet_low_reduced) / double(deeponet_steps) : 0.0; }
  double gs_fraction() const { return gs_steps ? double(gs_high_reduced) / double(gs_steps) : 0.0; }
};

struct SpectralTrace {
  SolveResult result;
  std::vector<Phase> phases;
  std::vector<std::vector<double>> spectra;  ///< error energy per mode after each step
  SpectralStats stats;

  void write_csv(std::ostream& os) const {
    os << "step,phase";
    const std::size_t n = spectra.empty() ? 0 : spectra.front().size();
    for (std::size_t j = 1; j <= n; ++j) os << ",mode_" << j;
    os << '\n';
    for (std::size_t s = 0; s < spectra.size(); ++s) {
      os << s << ',' << to_string(phases[s]);
      for (double e : spectra[s]) os << ',' << detail::num(e);
      os << '\n';
    }
  }
};

/// Hints-GS on a 1D Dirichlet system, projecting the error onto the analytic
/// sine modes after every step.
inline SpectralTrace spectral_trace(const ComplexSparseSystem& sys, const CorrectionOperator& op, const HintsConfig& hc,
                                    std::size_t low_max = 3) {
  if (sys.dim != 1) throw DimensionError("spectral_trace: needs the 1D system");
  if (hc.inner != InnerMethod::gs) throw ConfigError("spectral_trace: inner method must be gs");
  const auto modes = analytic_modes_1d(static_cast<int>(sys.size()), sys.k);
  const CVector exact = dense_solve(sys.A, sys.rhs);
  const std::size_t n = modes.size();
  SpectralTrace tr;
  tr.result = hints_iterate(sys, op, hc, CVector::Zero(sys.rhs.size()), [&](Phase p, const CVector& x) {
    auto spec = mode_spectrum(exact - x, modes);
    if (!tr.spectra.empty()) {
      const auto& prev = tr.spectra.back();
      if (p == Phase::deeponet) {
        ++tr.stats.deeponet_steps;
        tr.stats.deeponet_low_reduced += band_energy(spec, 1, low_max) < band_energy(prev, 1, low_max);
      } else if (p == Phase::gs) {
        ++tr.stats.gs_steps;
        tr.stats.gs_high_reduced += band_energy(spec, n / 2, n) < band_energy(prev, n / 2, n);
      }
    }
    tr.phases.push_back(p);
    tr.spectra.push_back(std::move(spec));
  });
  return tr;
}

// --- runner ---------------------------------------------------------------------

struct RunSummary {
  int exit_code = 0;
  std::vector<ReportRow> rows;
  std::vector<std::string> files;  ///< artifacts written, in order
};

namespace detail {

inline nlohmann::ordered_json config_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  std::istringstream in(c.render());
  std::string line;
  while (std::getline(in, line)) {
    auto eq = line.find(" = ");
    if (eq != std::string::npos) j[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return j;
}

inline DatasetSpec dataset_spec(const ExperimentConfig& c) {
  DatasetSpec s = c.dim == 1 ? DatasetSpec::one_d(c.train_n, c.k) : DatasetSpec{};
  if (c.dim == 2) {
    s.geometries = c.train_geometries;
    s.k = c.k;
    s.n = kSensorSide;
    s.policy = parse_bc_policy(c.bc);
  }
  s.n_samples = c.n_samples;
  s.epsilon = c.epsilon;
  s.grf_sigma = c.grf_sigma;
  s.grf_length = c.grf_length;
  s.std_1d = c.std_1d;
  s.seed = c.seed;
  return s;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline RunSummary run_generate(const ExperimentConfig& c, std::ostream& log) {
  RunSummary s;
  auto t0 = std::chrono::steady_clock::now();
  std::size_t skipped = 0;
  Dataset ds = generate(dataset_spec(c), &skipped);
  const std::string path = dataset_path(c);
  save_dataset(ds, path);
  const std::string hash = io::hex64(dataset_hash(ds));
  write_text((std::filesystem::path(c.out) / "dataset.txt").string(),
             render_manifest(ds.spec.manifest()) + "samples=" + std::to_string(ds.size()) + "\nskipped=" +
                 std::to_string(skipped) + "\nhash=" + hash + "\n");
  log << "generate: " << ds.size() << " samples (" << skipped << " skipped) -> " << path << " hash " << hash << "\n";
  write_text((std::filesystem::path(c.out) / "timing.log").string(), "generate " + num(seconds_since(t0)) + "\n");
  s.files = {path};
  return s;
}

inline RunSummary run_train(const ExperimentConfig& c, std::ostream& log) {
  RunSummary s;
  auto t0 = std::chrono::steady_clock::now();
  const std::string dpath = dataset_path(c);
  if (!std::filesystem::exists(dpath)) throw ConfigError("dataset: file '" + dpath + "' does not exist");
  Dataset ds = load_dataset(dpath, true);
  const int n_sensors = ds.spec.dim == 1 ? ds.spec.n : kSensorSide * kSensorSide;
  ModelConfig mc = ModelConfig::defaults(parse_variant(c.variant), ds.spec.dim, n_sensors);
  mc.collapse = parse_collapse(c.collapse);
  mc.seed = c.model_seed >= 0 ? static_cast<std::uint64_t>(c.model_seed) : derive_seed(c.seed, 0x6d6f64);
  TrainConfig tc;
  tc.epochs = c.epochs;
  tc.batch = c.batch;
  tc.seed = c.train_seed >= 0 ? static_cast<std::uint64_t>(c.train_seed) : derive_seed(c.seed, 0x747261);
  tc.lr.base = c.lr;
  tc.lr.decay_epoch = c.lr_decay_epoch;
  tc.on_epoch = [&](int e, double loss) {
    if (e == 1 || e % 100 == 0 || e == c.epochs) log << "train: epoch " << e << " loss " << loss << "\n";
  };
  TrainResult tr = train(mc, ds, tc);
  const std::string mpath = model_path(c);
  save_model(tr.model, mpath, tr.manifest(tc));
  std::ostringstream curve;
  curve << "epoch,loss\n";
  for (std::size_t e = 0; e < tr.loss_curve.size(); ++e) curve << e + 1 << ',' << num(tr.loss_curve[e]) << '\n';
  const std::string cpath = (std::filesystem::path(c.out) / "train_loss.csv").string();
  write_text(cpath, curve.str());
  auto loaded = load_model(mpath);
  log << "train: " << tr.model.parameter_count() << " parameters, final loss " << tr.final_loss << " -> " << mpath
      << " hash " << io::hex64(loaded.hash) << " (dataset " << io::hex64(tr.dataset_hash) << ")\n";
  write_text((std::filesystem::path(c.out) / "timing.log").string(), "train " + num(seconds_since(t0)) + "\n");
  s.files = {mpath, cpath};
  return s;
}

struct Task {
  std::string method;
  int J = 0;
};

inline RunSummary run_solve(const ExperimentConfig& c, bool sweep, std::ostream& log) {
  RunSummary s;
  for (const auto& m : c.methods) check_method(m);
  std::vector<Task> tasks;
  for (const auto& m : c.methods) {
    if (!is_hints_method(m)) {
      tasks.push_back({m, 0});
      continue;
    }
    if (sweep)
      for (int J : c.J) tasks.push_back({m, J});
    else
      tasks.push_back({m, c.J.front()});
  }
  const bool need_model = std::any_of(c.methods.begin(), c.methods.end(), is_hints_method);

  Problem p = experiment_problem(c);
  p.system.rhs = experiment_rhs(c, p.system.size());
  std::optional<LoadedModel> model;
  std::optional<SensorSet> sensors;
  if (need_model) {
    const std::string mpath = model_path(c);
    if (!std::filesystem::exists(mpath)) throw ConfigError("model: file '" + mpath + "' does not exist");
    model = load_model(mpath);
    sensors = model_sensors(p, model->model.config());
  }

  std::vector<SolveResult> results(tasks.size());
  std::vector<double> wall(tasks.size(), 0.0);
  parallel_for(tasks.size(), [&](std::size_t i) {
    auto t0 = std::chrono::steady_clock::now();
    std::unique_ptr<CorrectionOperator> op;
    if (is_hints_method(tasks[i].method)) op = std::make_unique<BoundDeepOnet>(model->model, *sensors, p.system);
    results[i] = run_method(c, tasks[i].method, tasks[i].J, p.system, op.get());
    wall[i] = seconds_since(t0);
  });

  std::ostringstream timing;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& t = tasks[i];
    const auto& h = results[i].history;
    ReportRow r;
    r.geometry = problem_label(c);
    r.h = p.system.h;
    r.method = t.method;
    const bool hy = is_hints_method(t.method);
    r.model = hy ? std::string(to_string(model->model.config().variant)) : "none";
    r.J = hy ? t.J : 0;
    r.alpha = hy ? c.alpha : 0.0;
    r.m = (t.method == "gmres" || t.method == "hints-gmres") ? c.m : 0;
    r.outcome = std::string(to_string(h.outcome));
    r.classical_iters = static_cast<long long>(h.classical_iterations());
    r.deeponet_iters = static_cast<long long>(h.deeponet_iterations());
    r.relres = relative_residual(p.system.A, p.system.rhs, results[i].x);
    r.seconds = c.timing ? wall[i] : 0.0;
    timing << i << ' ' << t.method << ' ' << r.J << ' ' << num(wall[i]) << '\n';
    s.rows.push_back(std::move(r));
  }

  const auto out = std::filesystem::path(c.out);
  nlohmann::ordered_json artifacts = nlohmann::ordered_json::object();
  artifacts["system_hash"] = io::hex64(io::Reader(encode_system(p.system)).sealed_hash());
  if (model) {
    artifacts["model_hash"] = io::hex64(model->hash);
    auto it = model->manifest.find("dataset_hash");
    if (it != model->manifest.end()) artifacts["dataset_hash"] = it->second;
  }
  if (c.save_iterates) {
    std::filesystem::create_directories(out / "iterates");
    const std::string spath = (out / "system.hsys").string();
    save_system(p.system, spath);
    s.files.push_back(spath);
    for (std::size_t i = 0; i < results.size(); ++i) {
      const std::string vpath = (out / "iterates" / ("row_" + std::to_string(i) + ".hvec")).string();
      save_vector(results[i].x, vpath);
      s.files.push_back(vpath);
    }
  }
  const std::string csv = (out / "report.csv").string(), json = (out / "report.json").string();
  write_text(csv, rows_to_csv(s.rows));
  write_text(json, rows_to_json(s.rows, config_json(c), artifacts));
  write_text((out / "timing.log").string(), timing.str());
  s.files.insert(s.files.begin(), {csv, json});

  auto best = best_rows(s.rows);
  for (std::size_t i = 0; i < s.rows.size(); ++i) {
    const auto& r = s.rows[i];
    log << (best[i] == static_cast<int>(i) ? "* " : "  ") << r.method << " J=" << r.J << " " << r.outcome
        << " classical=" << r.classical_iters << " deeponet=" << r.deeponet_iters << " relres=" << r.relres << "\n";
  }
  return s;
}

inline RunSummary run_diagnose(const ExperimentConfig& c, std::ostream& log) {
  if (c.dim != 1) throw ConfigError("diagnose: the mode spectrum needs dim = 1");
  RunSummary s;
  Problem p = experiment_problem(c);
  p.system.rhs = experiment_rhs(c, p.system.size());
  const std::string mpath = model_path(c);
  if (!std::filesystem::exists(mpath)) throw ConfigError("model: file '" + mpath + "' does not exist");
  auto model = load_model(mpath);
  BoundDeepOnet op(model.model, model_sensors(p, model.model.config()), p.system);
  const auto out = std::filesystem::path(c.out);
  nlohmann::ordered_json stats = nlohmann::ordered_json::array();
  for (int J : c.J) {
    auto tr = spectral_trace(p.system, op, hints_config(c, "hints-gs", J));
    const std::string path = (out / ("spectrum_J" + std::to_string(J) + ".csv")).string();
    std::ofstream f(path);
    tr.write_csv(f);
    s.files.push_back(path);
    const auto& h = tr.result.history;
    ReportRow r{problem_label(c), p.system.h, "hints-gs", std::string(to_string(model.model.config().variant)), J,
                c.alpha, 0, std::string(to_string(h.outcome)), static_cast<long long>(h.classical_iterations()),
                static_cast<long long>(h.deeponet_iterations()),
                relative_residual(p.system.A, p.system.rhs, tr.result.x), 0.0};
    s.rows.push_back(r);
    nlohmann::ordered_json j;
    j["J"] = J;
    j["outcome"] = r.outcome;
    j["deeponet_steps"] = tr.stats.deeponet_steps;
    j["deeponet_low_reduced"] = tr.stats.deeponet_low_reduced;
    j["gs_steps"] = tr.stats.gs_steps;
    j["gs_high_reduced"] = tr.stats.gs_high_reduced;
    stats.push_back(j);
    log << "diagnose J=" << J << " " << r.outcome << ": deeponet low-band reduced " << tr.stats.deeponet_low_reduced << "/"
        << tr.stats.deeponet_steps << ", gs high-band reduced " << tr.stats.gs_high_reduced << "/" << tr.stats.gs_steps
        << "\n";
  }
  const std::string csv = (out / "report.csv").string(), spath = (out / "diagnose.json").string();
  write_text(csv, rows_to_csv(s.rows));
  write_text(spath, stats.dump(2) + "\n");
  s.files.insert(s.files.begin(), {csv, spath});
  return s;
}

}  // namespace detail

/// Runs one experiment mode, writing its artifacts under cfg.out. Returns a
/// nonzero exit code only when cfg.strict is set and some run diverged.
inline RunSummary run(const ExperimentConfig& cfg, std::ostream& log) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out);
  RunSummary s;
  if (cfg.mode == "generate") s = detail::run_generate(cfg, log);
  else if (cfg.mode == "train") s = detail::run_train(cfg, log);
  else if (cfg.mode == "solve") s = detail::run_solve(cfg, false, log);
  else if (cfg.mode == "sweep") s = detail::run_solve(cfg, true, log);
  else s = detail::run_diagnose(cfg, log);
  if (cfg.strict)
    for (const auto& r : s.rows)
      if (r.outcome == "diverged") s.exit_code = 3;
  return s;
}

}  // namespace hints
