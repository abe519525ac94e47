#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hints/deeponet.hpp"
#include "hints/discretize.hpp"
#include "hints/error.hpp"
#include "hints/geometry.hpp"
#include "hints/grf.hpp"
#include "hints/io.hpp"
#include "hints/linalg.hpp"
#include "hints/parallel.hpp"
#include "hints/tensor_ad.hpp"

namespace hints {

/// A geometry (or the unit interval) with its sensors and assembled operator.
/// The system's rhs is left at zero.
struct Problem {
  std::string name;
  std::optional<Geometry> geometry;  ///< empty for the 1D interval
  SensorSet sensors;
  ComplexSparseSystem system;

  /// Right-hand side on the unknowns from values on the sensor lattice.
  /// The sensor lattice and the solve grid coincide for training problems.
  CVector rhs_from_sensors(const Eigen::VectorXd& f) const {
    CVector b(static_cast<Eigen::Index>(system.size()));
    for (std::size_t d = 0; d < system.size(); ++d) {
      std::size_t s = system.dim == 1 ? d : system.dof_to_node[d];
      b(static_cast<Eigen::Index>(d)) = f(static_cast<Eigen::Index>(s));
    }
    return b;
  }
};

inline Problem make_problem_2d(const Geometry& g, int n_side, double k,
                               BcPolicy policy = BcPolicy::outer_impedance_inner_dirichlet) {
  Problem p;
  p.name = g.spec();
  p.geometry = g;
  p.sensors = build_sensor_set(g, policy);
  GridMask mask = build_grid_mask(g, n_side, policy);
  std::vector<Complex> zero(static_cast<std::size_t>(std::count_if(mask.kind.begin(), mask.kind.end(), [](NodeKind kd) {
                              return kd == NodeKind::inside || kd == NodeKind::impedance;
                            })),
                            Complex{});
  p.system = assemble_2d(mask, k, std::span<const Complex>(zero));
  return p;
}

inline Problem make_problem_1d(int n, double k) {
  Problem p;
  p.name = "interval " + std::to_string(n);
  p.sensors = build_sensor_set_1d(n);
  std::vector<double> zero(static_cast<std::size_t>(n), 0.0);
  p.system = assemble_1d(n, k, std::span<const double>(zero));
  return p;
}

// --- dataset specification -------------------------------------------------------

struct DatasetSpec {
  int dim = 2;
  std::vector<std::string> geometries{"unit_square", "rectangle 0 0 1 0.6", "rectangle 0.2 0 0.8 1",
                                      "l_shape 0.5 0.5", "rect_minus_rect 0.55 0.55 0.75 0.75"};
  int n_samples = 300;  ///< per geometry
  double k = std::sqrt(21.0);
  int n = 15;           ///< 2D: n_side of the sensor grid; 1D: interior nodes
  double grf_sigma = 0.1;
  double grf_length = 0.1;
  double std_1d = 0.02;
  double epsilon = 0.0;  ///< > 0: store GMRES solutions with relres < epsilon
  std::uint64_t seed = 0;
  BcPolicy policy = BcPolicy::outer_impedance_inner_dirichlet;

  static DatasetSpec one_d(int n = 30, double k = 25.0) {
    DatasetSpec s;
    s.dim = 1;
    s.geometries.clear();
    s.k = k;
    s.n = n;
    return s;
  }

  void validate() const {
    if (dim != 1 && dim != 2) throw ConfigError("dataset: dim must be 1 or 2");
    if (n_samples < 1) throw ConfigError("dataset: n_samples must be >= 1");
    if (epsilon != 0.0 && !(epsilon > 0.0 && epsilon < 1.0)) throw ConfigError("dataset: epsilon must lie in (0,1)");
    if (dim == 2 && n != kSensorSide)
      throw ConfigError("dataset: 2D training data lives on the 15x15 sensor grid (n = 15)");
    if (dim == 2 && geometries.empty()) throw ConfigError("dataset: no geometries");
  }

  Manifest manifest() const {
    Manifest m{{"dim", std::to_string(dim)},
               {"n_samples", std::to_string(n_samples)},
               {"k", detail::fmt_double(k)},
               {"n", std::to_string(n)},
               {"grf_sigma", detail::fmt_double(grf_sigma)},
               {"grf_length", detail::fmt_double(grf_length)},
               {"std_1d", detail::fmt_double(std_1d)},
               {"epsilon", detail::fmt_double(epsilon)},
               {"seed", std::to_string(seed)},
               {"bc", std::string(to_string(policy))},
               {"geometries", ""}};
    std::string g;
    for (std::size_t i = 0; i < geometries.size(); ++i) g += (i ? ";" : "") + geometries[i];
    m["geometries"] = g;
    return m;
  }

  static DatasetSpec from_manifest(const Manifest& m) {
    auto get = [&](const char* k) {
      auto it = m.find(k);
      if (it == m.end()) throw FormatError(std::string("dataset manifest lacks '") + k + "'");
      return it->second;
    };
    DatasetSpec s;
    s.dim = std::stoi(get("dim"));
    s.n_samples = std::stoi(get("n_samples"));
    s.k = std::stod(get("k"));
    s.n = std::stoi(get("n"));
    s.grf_sigma = std::stod(get("grf_sigma"));
    s.grf_length = std::stod(get("grf_length"));
    s.std_1d = std::stod(get("std_1d"));
    s.epsilon = std::stod(get("epsilon"));
    s.seed = std::stoull(get("seed"));
    s.policy = parse_bc_policy(get("bc"));
    s.geometries.clear();
    std::stringstream ss(get("geometries"));
    std::string tok;
    while (std::getline(ss, tok, ';'))
      if (!tok.empty()) s.geometries.push_back(tok);
    return s;
  }

  std::vector<Problem> problems() const {
    std::vector<Problem> out;
    if (dim == 1) {
      out.push_back(make_problem_1d(n, k));
    } else {
      for (const auto& g : geometries) out.push_back(make_problem_2d(parse_geometry(g), n, k, policy));
    }
    return out;
  }
};

enum class SolveMethod : std::uint32_t { dense = 0, gmres = 1 };

struct Sample {
  Eigen::VectorXd f;  ///< on the sensor lattice, zero at masked sensors
  CVector u;          ///< on the unknowns
  double relres = 0.0;
  SolveMethod method = SolveMethod::dense;
};

struct SampleGroup {
  Problem problem;
  std::vector<Sample> samples;
};

struct Dataset {
  DatasetSpec spec;
  std::vector<SampleGroup> groups;
  std::size_t skipped = 0;

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& g : groups) n += g.samples.size();
    return n;
  }
};

/// Solves the PDE for GRF right-hand sides on every geometry of the spec.
/// Each sample draws from its own stream seeded by (seed, geometry, index).
inline Dataset generate(const DatasetSpec& spec, std::size_t* warnings = nullptr) {
  spec.validate();
  Dataset ds;
  ds.spec = spec;
  auto problems = spec.problems();
  const GrfSampler sampler = spec.dim == 1
                                 ? GrfSampler(interval_points(spec.n), grf_config_1d(spec.std_1d))
                                 : GrfSampler(problems.front().sensors.coords, GrfConfig{spec.grf_sigma, spec.grf_length, 1e-10});
  const std::size_t total = problems.size() * static_cast<std::size_t>(spec.n_samples);
  for (std::size_t gi = 0; gi < problems.size(); ++gi) {
    SampleGroup grp;
    grp.problem = std::move(problems[gi]);
    const auto& sys = grp.problem.system;
    std::optional<Eigen::PartialPivLU<CMatrix>> lu;
    if (spec.epsilon == 0.0) lu.emplace(sys.A.to_dense());
    std::vector<std::optional<Sample>> out(static_cast<std::size_t>(spec.n_samples));
    parallel_for(out.size(), [&](std::size_t i) {
      std::mt19937_64 rng(derive_seed(spec.seed, gi, i));
      Sample s;
      s.f = sampler.sample(rng);
      for (std::size_t j = 0; j < grp.problem.sensors.size(); ++j)
        if (!grp.problem.sensors.unmasked[j]) s.f(static_cast<Eigen::Index>(j)) = 0.0;
      CVector b = grp.problem.rhs_from_sensors(s.f);
      if (lu) {
        s.u = lu->solve(b);
        s.method = SolveMethod::dense;
      } else {
        SolverOptions opt;
        opt.tol = spec.epsilon;
        opt.maxit = 4 * sys.size();
        auto r = gmres(sys.A, b, CVector::Zero(b.size()), 0, opt);
        if (r.history.outcome != Outcome::converged) return;
        s.u = std::move(r.x);
        s.method = SolveMethod::gmres;
      }
      s.relres = relative_residual(sys.A, b, s.u);
      if (!std::isfinite(s.relres) || (spec.epsilon > 0 && s.relres > spec.epsilon)) return;
      out[i] = std::move(s);
    });
    for (auto& s : out) {
      if (s)
        grp.samples.push_back(std::move(*s));
      else
        ++ds.skipped;
    }
    ds.groups.push_back(std::move(grp));
  }
  if (warnings) *warnings = ds.skipped;
  if (static_cast<double>(ds.skipped) > 0.05 * static_cast<double>(total))
    throw SolverError("generate: " + std::to_string(ds.skipped) + " of " + std::to_string(total) +
                      " samples failed to solve");
  return ds;
}

/// Recomputes every stored residual; throws on the first sample that no
/// longer meets its recorded bound.
inline void verify_dataset(const Dataset& ds) {
  for (const auto& g : ds.groups)
    for (std::size_t i = 0; i < g.samples.size(); ++i) {
      const auto& s = g.samples[i];
      double r = relative_residual(g.problem.system.A, g.problem.rhs_from_sensors(s.f), s.u);
      bool ok = r <= s.relres * (1 + 1e-9) + 1e-14;
      if (ds.spec.epsilon > 0) ok = ok && r <= ds.spec.epsilon;
      if (!ok)
        throw HashMismatchError("dataset sample " + std::to_string(i) + " on '" + g.problem.name +
                                "' fails residual verification (" + std::to_string(r) + ")");
    }
}

// --- HDAT1 -------------------------------------------------------------------------
// "HDAT1", str manifest, u32 groups, per group: str name, u32 sensors, u32 unknowns,
// u32 samples, per sample: f64 f[sensors], c128 u[unknowns], f64 relres, u32 method;
// u64 skipped, u64 hash.

inline std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
  io::Writer w;
  w.raw("HDAT1");
  w.str(render_manifest(ds.spec.manifest()));
  w.u32(static_cast<std::uint32_t>(ds.groups.size()));
  for (const auto& g : ds.groups) {
    w.str(g.problem.name);
    w.u32(static_cast<std::uint32_t>(g.problem.sensors.size()));
    w.u32(static_cast<std::uint32_t>(g.problem.system.size()));
    w.u32(static_cast<std::uint32_t>(g.samples.size()));
    for (const auto& s : g.samples) {
      for (Eigen::Index i = 0; i < s.f.size(); ++i) w.f64(s.f(i));
      for (Eigen::Index i = 0; i < s.u.size(); ++i) w.c128(s.u(i));
      w.f64(s.relres);
      w.u32(static_cast<std::uint32_t>(s.method));
    }
  }
  w.u64(ds.skipped);
  w.seal();
  return w.buffer();
}

inline std::uint64_t dataset_hash(const Dataset& ds) { return io::Reader(encode_dataset(ds)).sealed_hash(); }

inline Dataset decode_dataset(std::vector<std::uint8_t> bytes, bool strict = false) {
  io::Reader r(std::move(bytes));
  io::expect_magic(r, "HDAT", '1');
  r.verify_seal();
  Dataset ds;
  ds.spec = DatasetSpec::from_manifest(parse_manifest(r.str()));
  auto problems = ds.spec.problems();
  auto ng = r.u32();
  if (ng != problems.size()) throw FormatError("dataset group count does not match its manifest");
  for (std::uint32_t gi = 0; gi < ng; ++gi) {
    SampleGroup g;
    g.problem = std::move(problems[gi]);
    auto name = r.str();
    if (name != g.problem.name) throw FormatError("dataset group '" + name + "' does not match '" + g.problem.name + "'");
    auto ns = r.u32(), nd = r.u32(), count = r.u32();
    if (ns != g.problem.sensors.size() || nd != g.problem.system.size())
      throw FormatError("dataset group '" + name + "' has inconsistent sizes");
    for (std::uint32_t i = 0; i < count; ++i) {
      Sample s;
      s.f.resize(ns);
      for (Eigen::Index j = 0; j < s.f.size(); ++j) s.f(j) = r.f64();
      s.u.resize(nd);
      for (Eigen::Index j = 0; j < s.u.size(); ++j) s.u(j) = r.c128();
      s.relres = r.f64();
      s.method = static_cast<SolveMethod>(r.u32());
      g.samples.push_back(std::move(s));
    }
    ds.groups.push_back(std::move(g));
  }
  ds.skipped = r.u64();
  if (strict) verify_dataset(ds);
  return ds;
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  io::Writer w;
  w.bytes(encode_dataset(ds));
  w.save(path);
}

inline Dataset load_dataset(const std::string& path, bool strict = false) {
  return decode_dataset(io::read_file(path), strict);
}

// --- training ----------------------------------------------------------------------

struct TrainConfig {
  int epochs = 1000;
  int batch = 64;
  std::uint64_t seed = 0;
  ad::LrSchedule lr{};
  /// Set the model's input/output scales from the dataset RMS values.
  bool auto_scale = true;
  std::function<void(int epoch, double loss)> on_epoch;
};

struct TrainResult {
  DeepOnetModel model;
  std::vector<double> loss_curve;  ///< mean batch loss per epoch
  double final_loss = 0.0;
  std::uint64_t dataset_hash = 0;

  Manifest manifest(const TrainConfig& tc) const {
    return {{"dataset_hash", io::hex64(dataset_hash)},
            {"epochs", std::to_string(tc.epochs)},
            {"batch", std::to_string(tc.batch)},
            {"train_seed", std::to_string(tc.seed)},
            {"final_loss", detail::fmt_double(final_loss)}};
  }
};

/// Inputs of one geometry group laid out for batched training.
struct PreparedGroup {
  ad::Mat branch_in;  ///< samples x branch_input_width
  ad::Mat keep;       ///< 1 x n_sensors
  ad::Mat trunk_in;   ///< unknowns x trunk_input_width
  ad::Mat u_re, u_im; ///< samples x unknowns
};

inline PreparedGroup prepare_group(const DeepOnetModel& m, const SampleGroup& g) {
  PreparedGroup p;
  const auto& sys = g.problem.system;
  const auto ns = static_cast<Eigen::Index>(g.samples.size());
  const auto nq = static_cast<Eigen::Index>(sys.size());
  auto ctx = m.context(g.problem.sensors);
  p.branch_in.resize(ns, m.config().branch_input_width());
  p.u_re.resize(ns, nq);
  p.u_im.resize(ns, nq);
  for (Eigen::Index i = 0; i < ns; ++i) {
    const auto& s = g.samples[static_cast<std::size_t>(i)];
    p.branch_in.row(i) = m.branch_features(std::span<const double>(s.f.data(), static_cast<std::size_t>(s.f.size())), ctx);
    p.u_re.row(i) = s.u.real().transpose();
    p.u_im.row(i) = s.u.imag().transpose();
  }
  p.keep = m.row_keep(g.problem.sensors);
  p.trunk_in = m.trunk_features(sys.dof_coords, sys.dof_distance);
  return p;
}

/// Root-mean-square of f over unmasked sensors and of |u| over unknowns.
inline std::pair<double, double> dataset_rms(const Dataset& ds) {
  double sf = 0, su = 0;
  std::size_t nf = 0, nu = 0;
  for (const auto& g : ds.groups)
    for (const auto& s : g.samples) {
      for (std::size_t j = 0; j < g.problem.sensors.size(); ++j)
        if (g.problem.sensors.unmasked[j]) {
          sf += s.f(static_cast<Eigen::Index>(j)) * s.f(static_cast<Eigen::Index>(j));
          ++nf;
        }
      su += s.u.squaredNorm();
      nu += static_cast<std::size_t>(s.u.size());
    }
  return {nf ? std::sqrt(sf / static_cast<double>(nf)) : 1.0, nu ? std::sqrt(su / static_cast<double>(nu)) : 1.0};
}

/// Mean relative L2 loss of the model over a whole dataset.
inline double dataset_loss(const DeepOnetModel& m, const Dataset& ds) {
  double total = 0;
  std::size_t n = 0;
  for (const auto& g : ds.groups) {
    if (g.samples.empty()) continue;
    auto p = prepare_group(m, g);
    ad::Tape t(false);
    total += training_loss(t, m, p.branch_in, p.keep, p.trunk_in, p.u_re, p.u_im).value()(0, 0) *
             static_cast<double>(g.samples.size());
    n += g.samples.size();
  }
  return n ? total / static_cast<double>(n) : 0.0;
}

/// Mini-batch Adam on the relative L2 loss. Batches never mix geometries:
/// indices are shuffled within each geometry, cut into batches, and the batch
/// order is shuffled, all from the training seed.
inline TrainResult train(ModelConfig cfg, const Dataset& ds, const TrainConfig& tc) {
  if (ds.size() == 0) throw TrainingError("train: dataset is empty");
  if (tc.epochs < 1 || tc.batch < 1) throw ConfigError("train: epochs and batch must be positive");
  if (tc.auto_scale) {
    auto [rf, ru] = dataset_rms(ds);
    cfg.input_scale = rf > 0 ? 1.0 / rf : 1.0;
    cfg.output_scale = ru > 0 ? ru : 1.0;
  }
  TrainResult res;
  res.model = DeepOnetModel(cfg);
  res.dataset_hash = dataset_hash(ds);
  auto& m = res.model;
  std::vector<PreparedGroup> groups;
  for (const auto& g : ds.groups) groups.push_back(prepare_group(m, g));
  auto params = m.parameters();
  ad::AdamState adam;
  std::mt19937_64 rng(tc.seed);

  struct Batch {
    std::size_t group;
    std::vector<Eigen::Index> rows;
  };
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    std::vector<Batch> batches;
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      std::vector<Eigen::Index> idx(static_cast<std::size_t>(groups[gi].branch_in.rows()));
      std::iota(idx.begin(), idx.end(), Eigen::Index{0});
      std::shuffle(idx.begin(), idx.end(), rng);
      for (std::size_t s = 0; s < idx.size(); s += static_cast<std::size_t>(tc.batch)) {
        auto e = std::min(idx.size(), s + static_cast<std::size_t>(tc.batch));
        batches.push_back({gi, {idx.begin() + static_cast<std::ptrdiff_t>(s), idx.begin() + static_cast<std::ptrdiff_t>(e)}});
      }
    }
    std::shuffle(batches.begin(), batches.end(), rng);
    const double lr = tc.lr.at(epoch);
    double sum = 0;
    std::size_t count = 0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const auto& b = batches[bi];
      const auto& g = groups[b.group];
      ad::Mat bin = g.branch_in(b.rows, Eigen::all);
      ad::Mat ure = g.u_re(b.rows, Eigen::all);
      ad::Mat uim = g.u_im(b.rows, Eigen::all);
      for (auto* p : params) p->zero_grad();
      ad::Tape t;
      ad::Var loss = training_loss(t, m, bin, g.keep, g.trunk_in, ure, uim);
      double lv = loss.value()(0, 0);
      if (!std::isfinite(lv))
        throw TrainingError("train: non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                            std::to_string(bi + 1));
      t.backward(loss);
      ad::adam_step(params, adam, lr);
      sum += lv * static_cast<double>(b.rows.size());
      count += b.rows.size();
    }
    double epoch_loss = sum / static_cast<double>(count);
    res.loss_curve.push_back(epoch_loss);
    if (tc.on_epoch) tc.on_epoch(epoch + 1, epoch_loss);
  }
  res.final_loss = res.loss_curve.back();
  return res;
}

}  // namespace hints
