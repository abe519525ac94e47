#pragma once

#include <cstdint>
#include <cstdio>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "hints/error.hpp"
#include "hints/geometry.hpp"
#include "hints/io.hpp"
#include "hints/sparse.hpp"
#include "hints/tensor_ad.hpp"

namespace hints {

enum class Variant { masked, nonmasked, vanilla, ga_vanilla };

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::masked: return "masked";
    case Variant::nonmasked: return "nonmasked";
    case Variant::vanilla: return "vanilla";
    case Variant::ga_vanilla: return "ga-vanilla";
  }
  return "?";
}

inline Variant parse_variant(std::string_view s) {
  for (auto v : {Variant::masked, Variant::nonmasked, Variant::vanilla, Variant::ga_vanilla})
    if (to_string(v) == s) return v;
  throw ConfigError("unknown model variant '" + std::string(s) + "'");
}

/// How the N x c attention output is reduced to one value per sensor before
/// the dense branch layers.
///   sum               z_i = Σ_k A_ik
///   learned           z_i = Σ_k w_k A_ik + b
///   learned_residual  z_i = Σ_k w_k A_ik + Σ_k u_k V_ik + b
enum class Collapse { sum, learned, learned_residual };

inline std::string_view to_string(Collapse c) {
  switch (c) {
    case Collapse::sum: return "sum";
    case Collapse::learned: return "learned";
    case Collapse::learned_residual: return "learned_residual";
  }
  return "?";
}

inline Collapse parse_collapse(std::string_view s) {
  for (auto c : {Collapse::sum, Collapse::learned, Collapse::learned_residual})
    if (to_string(c) == s) return c;
  throw ConfigError("unknown collapse '" + std::string(s) + "'");
}

struct ModelConfig {
  Variant variant = Variant::masked;
  int dim = 2;           ///< sensor dimension (1 or 2)
  int n_sensors = 225;
  int p = 80;
  std::vector<int> branch_hidden{200, 100};
  std::vector<int> trunk_hidden{200, 100};
  Collapse collapse = Collapse::learned_residual;
  /// Fixed affine scaling: the network sees input_scale * f and predicts u / output_scale.
  double input_scale = 1.0;
  double output_scale = 1.0;
  std::uint64_t seed = 0;

  /// Paper widths for each variant on the 15x15 sensor grid (or n 1D sensors).
  static ModelConfig defaults(Variant v, int dim = 2, int n_sensors = 225) {
    ModelConfig c;
    c.variant = v;
    c.dim = dim;
    c.n_sensors = n_sensors;
    if (v == Variant::vanilla) {
      c.branch_hidden = {80};        // CNN(100) -> 80 -> p
      c.trunk_hidden = {80, 80};     // 2 -> 80 -> 80 -> p
    } else if (v == Variant::ga_vanilla) {
      c.branch_hidden = {80};        // two CNN towers (200) -> 80 -> p
      c.trunk_hidden = {80, 80};
    }
    return c;
  }

  bool attention() const { return variant == Variant::masked || variant == Variant::nonmasked; }
  bool cnn() const { return !attention(); }
  /// Attention value channels: f, the sensor coordinates and O.
  int channels() const { return dim + 2; }
  int collapse_width() const { return collapse == Collapse::learned_residual ? 2 * channels() : channels(); }
  int branch_input_width() const {
    if (attention()) return n_sensors * collapse_width();
    return variant == Variant::ga_vanilla ? 2 * n_sensors : n_sensors;
  }
  int trunk_input_width() const { return attention() ? dim + 1 : dim; }

  void validate() const {
    if (dim != 1 && dim != 2) throw ConfigError("model: dim must be 1 or 2");
    if (p < 1 || n_sensors < 1) throw ConfigError("model: p and n_sensors must be positive");
    if (cnn() && (dim != 2 || n_sensors != kSensorSide * kSensorSide))
      throw ConfigError("model: CNN variants need the 15x15 sensor grid");
    if (!(input_scale > 0) || !(output_scale > 0)) throw ConfigError("model: scales must be positive");
  }
};

/// CNN tower: [1, 40, 60, 100] channels, 3x3 kernels, stride 2 (15 -> 7 -> 3 -> 1).
inline std::vector<ad::ConvShape> cnn_tower_shapes() {
  std::vector<ad::ConvShape> s;
  int side = kSensorSide, cin = 1;
  for (int cout : {40, 60, 100}) {
    ad::ConvShape c;
    c.in_channels = cin;
    c.height = c.width = side;
    c.out_channels = cout;
    s.push_back(c);
    side = c.out_height();
    cin = cout;
  }
  return s;
}

struct Layer {
  ad::Parameter W, b;
};

/// One real-valued branch/trunk network.
struct SubNet {
  std::vector<ad::Parameter> collapse;          // w, u, b (attention variants)
  std::vector<std::vector<Layer>> towers;        // conv layers per CNN tower
  std::vector<Layer> branch;
  std::vector<Layer> trunk;
};

/// Evaluation counters for the branch/trunk factorization.
struct EvalCounters {
  std::size_t branch_passes = 0;
  std::size_t trunk_points = 0;
};

/// Per-geometry inputs shared by every evaluation on that geometry.
struct BranchContext {
  const SensorSet* sensors = nullptr;
  Eigen::MatrixXd mask;  ///< the sensor mask for the masked variant, zero otherwise
};

class DeepOnetModel {
 public:
  DeepOnetModel() = default;
  explicit DeepOnetModel(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(cfg_.seed);
    build(re_, "re", rng);
    build(im_, "im", rng);
  }

  const ModelConfig& config() const { return cfg_; }
  ModelConfig& config() { return cfg_; }
  SubNet& net(bool imag) { return imag ? im_ : re_; }
  const SubNet& net(bool imag) const { return imag ? im_ : re_; }

  std::vector<ad::Parameter*> parameters() {
    std::vector<ad::Parameter*> out;
    for (auto* n : {&re_, &im_}) collect(*n, out);
    return out;
  }
  std::vector<const ad::Parameter*> parameters() const {
    std::vector<ad::Parameter*> tmp;
    auto* self = const_cast<DeepOnetModel*>(this);
    for (auto* n : {&self->re_, &self->im_}) collect(*n, tmp);
    return {tmp.begin(), tmp.end()};
  }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (auto* p : parameters()) n += static_cast<std::size_t>(p->value.size());
    return n;
  }

  // --- inputs ---------------------------------------------------------------

  /// Attention value matrix V = [f | coordinates | O], N x c, with f scaled.
  ad::Mat value_matrix(std::span<const double> f, const SensorSet& s) const {
    check_sensors(f, s);
    const int c = cfg_.channels();
    ad::Mat V(static_cast<Eigen::Index>(s.size()), c);
    for (std::size_t i = 0; i < s.size(); ++i) {
      auto r = static_cast<Eigen::Index>(i);
      V(r, 0) = cfg_.input_scale * f[i];
      V(r, 1) = s.coords[i].x;
      if (cfg_.dim == 2) V(r, 2) = s.coords[i].y;
      V(r, c - 1) = s.distance[i];
    }
    return V;
  }

  BranchContext context(const SensorSet& s) const {
    BranchContext ctx;
    ctx.sensors = &s;
    if (cfg_.variant == Variant::masked)
      ctx.mask = s.mask;
    else if (cfg_.attention())
      ctx.mask = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(s.size()), static_cast<Eigen::Index>(s.size()));
    return ctx;
  }

  /// Parameter-free part of the branch, one row per sample: the attention
  /// output (and V for the residual collapse) interleaved per sensor, or the
  /// CNN input image(s).
  Eigen::RowVectorXd branch_features(std::span<const double> f, const BranchContext& ctx) const;

  /// 1 x N indicator applied after the collapse (masked variant only).
  ad::Mat row_keep(const SensorSet& s) const {
    ad::Mat k = ad::Mat::Ones(1, static_cast<Eigen::Index>(s.size()));
    if (cfg_.variant == Variant::masked)
      for (std::size_t i = 0; i < s.size(); ++i) k(0, static_cast<Eigen::Index>(i)) = s.unmasked[i] ? 1.0 : 0.0;
    return k;
  }

  /// Query features: (x, y, dist) or (x, dist) for attention variants, (x, y) for CNN variants.
  ad::Mat trunk_features(const std::vector<Point>& y, const std::vector<double>& dist) const {
    if (y.size() != dist.size()) throw DimensionError("trunk_features: points and distances differ in length");
    ad::Mat X(static_cast<Eigen::Index>(y.size()), cfg_.trunk_input_width());
    for (std::size_t i = 0; i < y.size(); ++i) {
      const auto& q = y[i];
      if (q.x < -1e-12 || q.x > 1 + 1e-12 || q.y < -1e-12 || q.y > 1 + 1e-12)
        throw GeometryError("query point (" + std::to_string(q.x) + "," + std::to_string(q.y) + ") is outside [0,1]^2");
      auto r = static_cast<Eigen::Index>(i);
      X(r, 0) = q.x;
      if (cfg_.dim == 2) X(r, 1) = q.y;
      if (cfg_.attention()) X(r, cfg_.dim) = dist[i];
    }
    return X;
  }

  // --- forward passes on a tape ----------------------------------------------

  /// branch_in: B x branch_input_width; keep: 1 x N. Returns B x p.
  ad::Var branch_forward(ad::Tape& t, const SubNet& n, ad::Var branch_in, const ad::Mat& keep) const {
    ad::Var h;
    if (cfg_.attention()) {
      const Eigen::Index B = branch_in.rows();
      const int w = cfg_.collapse_width();
      ad::Var per_sensor = ad::reshape(branch_in, B * cfg_.n_sensors, w);
      ad::Var z;
      if (cfg_.collapse == Collapse::sum) {
        z = ad::matmul(per_sensor, t.constant(ad::Mat::Ones(w, 1)));
      } else {
        z = ad::add(ad::matmul(per_sensor, t.param(const_cast<ad::Parameter&>(n.collapse[0]))),
                    t.param(const_cast<ad::Parameter&>(n.collapse[1])));
      }
      h = ad::mul(ad::reshape(z, B, cfg_.n_sensors), t.constant(keep));
      for (std::size_t i = 0; i < n.branch.size(); ++i) {
        h = dense(t, h, n.branch[i]);
        if (i + 1 < n.branch.size()) h = ad::tanh(h);
      }
      return h;
    }
    auto shapes = cnn_tower_shapes();
    std::vector<ad::Var> tower_out;
    for (std::size_t tw = 0; tw < n.towers.size(); ++tw) {
      // Tower tw reads the tw-th image of the input row.
      ad::Var x = n.towers.size() == 1 ? branch_in : slice_cols(t, branch_in, static_cast<int>(tw) * cfg_.n_sensors, cfg_.n_sensors);
      for (std::size_t l = 0; l < shapes.size(); ++l) {
        const auto& L = n.towers[tw][l];
        x = ad::relu(ad::conv2d(x, t.param(const_cast<ad::Parameter&>(L.W)), t.param(const_cast<ad::Parameter&>(L.b)), shapes[l]));
      }
      tower_out.push_back(x);
    }
    h = tower_out.size() == 1 ? tower_out[0] : ad::concat_cols(tower_out);
    for (std::size_t i = 0; i < n.branch.size(); ++i) {
      h = dense(t, h, n.branch[i]);
      if (i + 1 < n.branch.size()) h = ad::relu(h);
    }
    return h;
  }

  /// trunk_in: Q x trunk_input_width. Returns Q x p.
  ad::Var trunk_forward(ad::Tape& t, const SubNet& n, ad::Var trunk_in) const {
    ad::Var h = trunk_in;
    const auto act = cfg_.attention() ? ad::Activation::sin : ad::Activation::tanh;
    for (std::size_t i = 0; i < n.trunk.size(); ++i) {
      h = dense(t, h, n.trunk[i]);
      if (i + 1 < n.trunk.size()) h = ad::activate(h, act);
    }
    return h;
  }

  // --- inference ---------------------------------------------------------------

  struct BranchOut {
    Eigen::RowVectorXd re, im;  ///< 1 x p each
  };
  struct TrunkOut {
    ad::Mat re, im;  ///< Q x p each
  };

  BranchOut branch(std::span<const double> f, const BranchContext& ctx, EvalCounters* counters = nullptr) const {
    ad::Mat in = branch_features(f, ctx);
    ad::Mat keep = row_keep(*ctx.sensors);
    BranchOut out;
    for (bool imag : {false, true}) {
      ad::Tape t(false);
      ad::Var v = branch_forward(t, net(imag), t.constant(in), keep);
      (imag ? out.im : out.re) = v.value().row(0);
    }
    if (counters) ++counters->branch_passes;
    return out;
  }

  TrunkOut trunk(const std::vector<Point>& y, const std::vector<double>& dist, EvalCounters* counters = nullptr) const {
    ad::Mat in = trunk_features(y, dist);
    TrunkOut out;
    for (bool imag : {false, true}) {
      ad::Tape t(false);
      ad::Var v = trunk_forward(t, net(imag), t.constant(in));
      (imag ? out.im : out.re) = v.value();
    }
    if (counters) counters->trunk_points += y.size();
    return out;
  }

  /// out(y) = s_out * (⟨B_re(f), T_re(y)⟩ + i ⟨B_im(f), T_im(y)⟩)
  CVector combine(const BranchOut& b, const TrunkOut& tr) const {
    Eigen::VectorXd re = tr.re * b.re.transpose();
    Eigen::VectorXd im = tr.im * b.im.transpose();
    CVector out(re.size());
    for (Eigen::Index i = 0; i < re.size(); ++i) out(i) = cfg_.output_scale * Complex(re(i), im(i));
    return out;
  }

  /// Evaluates N(f) at the query points; the branch runs once per call.
  CVector evaluate(std::span<const double> f, const SensorSet& s, const std::vector<Point>& y,
                   const std::vector<double>& dist, EvalCounters* counters = nullptr) const {
    auto ctx = context(s);
    return combine(branch(f, ctx, counters), trunk(y, dist, counters));
  }

  CVector evaluate(std::span<const double> f, const SensorSet& s, const Geometry& g, const std::vector<Point>& y,
                   EvalCounters* counters = nullptr) const {
    std::vector<double> dist;
    for (auto q : y) dist.push_back(g.sdf(q));
    return evaluate(f, s, y, dist, counters);
  }

 private:
  static ad::Var dense(ad::Tape& t, ad::Var x, const Layer& L) {
    return ad::dense(x, t.param(const_cast<ad::Parameter&>(L.W)), t.param(const_cast<ad::Parameter&>(L.b)));
  }

  static ad::Var slice_cols(ad::Tape& t, ad::Var x, int start, int width) {
    ad::Mat sel = ad::Mat::Zero(x.cols(), width);
    for (int i = 0; i < width; ++i) sel(start + i, i) = 1.0;
    return ad::matmul(x, t.constant(std::move(sel)));
  }

  void check_sensors(std::span<const double> f, const SensorSet& s) const {
    if (static_cast<int>(s.size()) != cfg_.n_sensors)
      throw DimensionError("model expects " + std::to_string(cfg_.n_sensors) + " sensors, got " + std::to_string(s.size()));
    if (f.size() != s.size()) throw DimensionError("branch input has " + std::to_string(f.size()) + " values for " + std::to_string(s.size()) + " sensors");
  }

  template <typename Rng>
  static Layer make_layer(const std::string& name, int in, int out, Rng& rng) {
    Layer L;
    L.W = ad::Parameter(name + ".W", ad::uniform_init(in, out, in, rng));
    L.b = ad::Parameter(name + ".b", ad::uniform_init(1, out, in, rng));
    return L;
  }

  template <typename Rng>
  void build(SubNet& n, const std::string& prefix, Rng& rng) {
    int width = 0;
    if (cfg_.attention()) {
      if (cfg_.collapse != Collapse::sum) {
        int w = cfg_.collapse_width();
        n.collapse.emplace_back(prefix + ".collapse.w", ad::uniform_init(w, 1, w, rng));
        n.collapse.emplace_back(prefix + ".collapse.b", ad::uniform_init(1, 1, w, rng));
      }
      width = cfg_.n_sensors;
    } else {
      int towers = cfg_.variant == Variant::ga_vanilla ? 2 : 1;
      auto shapes = cnn_tower_shapes();
      for (int tw = 0; tw < towers; ++tw) {
        std::vector<Layer> conv;
        for (std::size_t l = 0; l < shapes.size(); ++l) {
          const auto& s = shapes[l];
          std::string name = prefix + ".tower" + std::to_string(tw) + ".conv" + std::to_string(l);
          Layer L;
          L.W = ad::Parameter(name + ".W", ad::uniform_init(s.out_channels, s.patch(), s.patch(), rng));
          L.b = ad::Parameter(name + ".b", ad::uniform_init(1, s.out_channels, s.patch(), rng));
          conv.push_back(std::move(L));
        }
        n.towers.push_back(std::move(conv));
        width += shapes.back().out_size();
      }
    }
    std::vector<int> widths = cfg_.branch_hidden;
    widths.push_back(cfg_.p);
    for (std::size_t i = 0; i < widths.size(); ++i) {
      n.branch.push_back(make_layer(prefix + ".branch" + std::to_string(i), width, widths[i], rng));
      width = widths[i];
    }
    width = cfg_.trunk_input_width();
    widths = cfg_.trunk_hidden;
    widths.push_back(cfg_.p);
    for (std::size_t i = 0; i < widths.size(); ++i) {
      n.trunk.push_back(make_layer(prefix + ".trunk" + std::to_string(i), width, widths[i], rng));
      width = widths[i];
    }
  }

  static void collect(SubNet& n, std::vector<ad::Parameter*>& out) {
    for (auto& p : n.collapse) out.push_back(&p);
    for (auto& tw : n.towers)
      for (auto& L : tw) {
        out.push_back(&L.W);
        out.push_back(&L.b);
      }
    for (auto* layers : {&n.branch, &n.trunk})
      for (auto& L : *layers) {
        out.push_back(&L.W);
        out.push_back(&L.b);
      }
  }

  ModelConfig cfg_;
  SubNet re_, im_;
};

inline Eigen::RowVectorXd DeepOnetModel::branch_features(std::span<const double> f, const BranchContext& ctx) const {
  const SensorSet& s = *ctx.sensors;
  check_sensors(f, s);
  const auto n = static_cast<Eigen::Index>(s.size());
  Eigen::RowVectorXd row(cfg_.branch_input_width());
  if (cfg_.attention()) {
    ad::Mat V = value_matrix(f, s);
    ad::Mat A = ad::masked_attention_value(V, ctx.mask).out;
    const int c = cfg_.channels(), w = cfg_.collapse_width();
    for (Eigen::Index i = 0; i < n; ++i)
      for (int k = 0; k < c; ++k) {
        row(i * w + k) = A(i, k);
        if (w == 2 * c) row(i * w + c + k) = V(i, k);
      }
    return row;
  }
  for (Eigen::Index i = 0; i < n; ++i) row(i) = cfg_.input_scale * f[static_cast<std::size_t>(i)];
  if (cfg_.variant == Variant::ga_vanilla)
    for (Eigen::Index i = 0; i < n; ++i) row(n + i) = s.unmasked[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
  return row;
}

// --- loss ----------------------------------------------------------------------

/// Mean over the batch of ‖N − u‖² / (‖u‖² + 1e-12), with the real and
/// imaginary parts of the residual and of u summed in each norm.
/// pred_re/pred_im: B x Q on the tape; u_re/u_im: B x Q targets in network units.
inline ad::Var relative_l2_loss(ad::Tape& t, ad::Var pred_re, ad::Var pred_im, const ad::Mat& u_re, const ad::Mat& u_im) {
  if (pred_re.rows() != u_re.rows() || pred_re.cols() != u_re.cols() || pred_im.rows() != u_im.rows() ||
      pred_im.cols() != u_im.cols())
    throw ShapeError("relative_l2_loss: prediction and target shapes differ");
  ad::Mat inv(u_re.rows(), 1);
  for (Eigen::Index i = 0; i < u_re.rows(); ++i)
    inv(i, 0) = 1.0 / (u_re.row(i).squaredNorm() + u_im.row(i).squaredNorm() + 1e-12);
  ad::Var er = ad::sub(pred_re, t.constant(u_re));
  ad::Var ei = ad::sub(pred_im, t.constant(u_im));
  ad::Var num = ad::add(ad::row_sum(ad::mul(er, er)), ad::row_sum(ad::mul(ei, ei)));
  return ad::mean(ad::mul(num, t.constant(inv)));
}

/// Loss of the model on a batch that shares one query set.
/// branch_in: B x branch_input_width, trunk_in: Q x trunk_input_width,
/// u_re/u_im: B x Q in physical units.
inline ad::Var training_loss(ad::Tape& t, const DeepOnetModel& m, const ad::Mat& branch_in, const ad::Mat& keep,
                             const ad::Mat& trunk_in, const ad::Mat& u_re, const ad::Mat& u_im) {
  const double s = 1.0 / m.config().output_scale;
  ad::Var bi = t.constant(branch_in);
  ad::Var ti = t.constant(trunk_in);
  ad::Var pr = ad::matmul_nt(m.branch_forward(t, m.net(false), bi, keep), m.trunk_forward(t, m.net(false), ti));
  ad::Var pi = ad::matmul_nt(m.branch_forward(t, m.net(true), bi, keep), m.trunk_forward(t, m.net(true), ti));
  return relative_l2_loss(t, pr, pi, u_re * s, u_im * s);
}

// --- HNET1 --------------------------------------------------------------------

namespace detail {
inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
inline std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}
inline std::vector<int> split_ints(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(std::stoi(tok));
  return out;
}
}  // namespace detail

/// Key/value manifest lines ("key=value\n"), sorted by key.
using Manifest = std::map<std::string, std::string>;

inline std::string render_manifest(const Manifest& m) {
  std::string s;
  for (const auto& [k, v] : m) s += k + "=" + v + "\n";
  return s;
}

inline Manifest parse_manifest(const std::string& text) {
  Manifest m;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("manifest line without '=': " + line);
    m[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return m;
}

inline Manifest config_manifest(const ModelConfig& c) {
  return {{"variant", std::string(to_string(c.variant))},
          {"dim", std::to_string(c.dim)},
          {"n_sensors", std::to_string(c.n_sensors)},
          {"p", std::to_string(c.p)},
          {"branch_hidden", detail::join_ints(c.branch_hidden)},
          {"trunk_hidden", detail::join_ints(c.trunk_hidden)},
          {"collapse", std::string(to_string(c.collapse))},
          {"input_scale", detail::fmt_double(c.input_scale)},
          {"output_scale", detail::fmt_double(c.output_scale)},
          {"seed", std::to_string(c.seed)}};
}

inline ModelConfig config_from_manifest(const Manifest& m) {
  auto get = [&](const char* k) {
    auto it = m.find(k);
    if (it == m.end()) throw FormatError(std::string("model manifest lacks '") + k + "'");
    return it->second;
  };
  ModelConfig c;
  c.variant = parse_variant(get("variant"));
  c.dim = std::stoi(get("dim"));
  c.n_sensors = std::stoi(get("n_sensors"));
  c.p = std::stoi(get("p"));
  c.branch_hidden = detail::split_ints(get("branch_hidden"));
  c.trunk_hidden = detail::split_ints(get("trunk_hidden"));
  c.collapse = parse_collapse(get("collapse"));
  c.input_scale = std::stod(get("input_scale"));
  c.output_scale = std::stod(get("output_scale"));
  c.seed = std::stoull(get("seed"));
  return c;
}

/// "HNET1", str manifest, parameter arrays, u64 content hash.
/// `extra` carries training metadata (dataset hash, epochs, final loss).
inline std::vector<std::uint8_t> encode_model(const DeepOnetModel& m, const Manifest& extra = {}) {
  Manifest man = config_manifest(m.config());
  for (const auto& [k, v] : extra) man.emplace(k, v);
  io::Writer w;
  w.raw("HNET1");
  w.str(render_manifest(man));
  ad::write_parameters(w, m.parameters());
  w.seal();
  return w.buffer();
}

struct LoadedModel {
  DeepOnetModel model;
  Manifest manifest;
  std::uint64_t hash = 0;
};

inline LoadedModel decode_model(std::vector<std::uint8_t> bytes) {
  io::Reader r(std::move(bytes));
  io::expect_magic(r, "HNET", '1');
  r.verify_seal();
  LoadedModel out;
  out.manifest = parse_manifest(r.str());
  out.model = DeepOnetModel(config_from_manifest(out.manifest));
  ad::read_parameters(r, out.model.parameters());
  out.hash = r.sealed_hash();
  return out;
}

inline void save_model(const DeepOnetModel& m, const std::string& path, const Manifest& extra = {}) {
  io::Writer w;
  w.bytes(encode_model(m, extra));
  w.save(path);
}

inline LoadedModel load_model(const std::string& path) { return decode_model(io::read_file(path)); }

}  // namespace hints
