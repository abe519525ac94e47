#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hints/error.hpp"
#include "hints/io.hpp"

namespace hints::ad {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A trainable 2D array with its gradient accumulator.
struct Parameter {
  std::string name;
  Mat value;
  Mat grad;

  Parameter() = default;
  Parameter(std::string n, Mat v) : name(std::move(n)), value(std::move(v)), grad(Mat::Zero(value.rows(), value.cols())) {}
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Mat& value() const;
  const Mat& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

/// Records operations for one forward pass; backward() walks them in reverse.
/// Gradients accumulate (+=), so a tape may receive several seeds.
class Tape {
 public:
  struct Node {
    Mat value;
    Mat grad;
    bool needs_grad = false;
    Parameter* sink = nullptr;
    std::function<void()> backward;
  };

  /// A tape built with record_grad = false runs forward passes only.
  explicit Tape(bool record_grad = true) : record_(record_grad) {}

  Var constant(Mat v) { return push(std::move(v), false); }
  Var input(Mat v) { return push(std::move(v), record_); }  ///< a leaf whose gradient is kept
  Var param(Parameter& p) {
    if (!record_) return push(p.value, false);
    Var x = push(p.value, true);
    nodes_[static_cast<std::size_t>(x.id)].sink = &p;
    return x;
  }

  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  std::size_t size() const { return nodes_.size(); }

  /// Appends a node; ops attach their backward rule to it afterwards.
  Var push(Mat v, bool needs_grad) {
    Node n;
    n.value = std::move(v);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  bool needs_grad(Var v) const { return node(v.id).needs_grad; }

  /// Adds g into the gradient of v (allocating on first use).
  void accumulate(Var v, const Mat& g) {
    Node& n = node(v.id);
    if (!n.needs_grad) return;
    if (n.grad.size() == 0)
      n.grad = g;
    else
      n.grad += g;
  }

  /// Seeds d(out)/d(out) = 1 for a 1x1 output, or the given seed otherwise.
  void backward(Var out, const Mat* seed = nullptr) {
    if (seed == nullptr && out.value().size() != 1) throw ShapeError("backward: output is not scalar");
    accumulate(out, seed ? *seed : Mat::Ones(1, 1));
    for (int i = out.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.grad.size() == 0) continue;
      if (n.backward) n.backward();
      if (n.sink) n.sink->grad += n.grad;
      // Only leaves keep their gradient, so a second backward() adds to them
      // instead of replaying this pass.
      if (n.backward || n.sink) n.grad.resize(0, 0);
    }
  }

 private:
  std::vector<Node> nodes_;
  bool record_ = true;
};

inline const Mat& Var::value() const { return tape->node(id).value; }
inline const Mat& Var::grad() const {
  static const Mat empty;
  const auto& n = tape->node(id);
  return n.grad.size() ? n.grad : empty;
}

namespace detail {
inline void same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw ShapeError("operands live on different tapes");
}
inline std::string shape(const Mat& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

template <typename F>
Var make(Var like, Mat value, std::initializer_list<Var> inputs, F&& rule) {
  Tape& t = *like.tape;
  bool ng = false;
  for (auto v : inputs) ng = ng || t.needs_grad(v);
  Var out = t.push(std::move(value), ng);
  if (ng) t.node(out.id).backward = [&t, id = out.id, rule = std::forward<F>(rule)]() { rule(t, t.node(id).grad); };
  return out;
}

/// How b broadcasts against a: same shape, 1xN row, Mx1 column or 1x1 scalar.
enum class Bcast { same, row, col, scalar };
inline Bcast broadcast_kind(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Bcast::same;
  if (b.rows() == 1 && b.cols() == 1) return Bcast::scalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Bcast::row;
  if (b.cols() == 1 && b.rows() == a.rows()) return Bcast::col;
  throw ShapeError(std::string(op) + ": cannot broadcast " + shape(b) + " against " + shape(a));
}
inline Mat expand(const Mat& b, Eigen::Index r, Eigen::Index c, Bcast k) {
  switch (k) {
    case Bcast::same: return b;
    case Bcast::scalar: return Mat::Constant(r, c, b(0, 0));
    case Bcast::row: return b.replicate(r, 1);
    case Bcast::col: return b.replicate(1, c);
  }
  return b;
}
inline Mat reduce(const Mat& g, Bcast k) {
  switch (k) {
    case Bcast::same: return g;
    case Bcast::scalar: return Mat::Constant(1, 1, g.sum());
    case Bcast::row: return g.colwise().sum();
    case Bcast::col: return g.rowwise().sum();
  }
  return g;
}
}  // namespace detail

// --- linear algebra ----------------------------------------------------------

inline Var matmul(Var a, Var b) {
  detail::same_tape(a, b);
  if (a.cols() != b.rows())
    throw ShapeError("matmul: " + detail::shape(a.value()) + " times " + detail::shape(b.value()));
  Mat v = a.value() * b.value();
  return detail::make(a, std::move(v), {a, b}, [a, b](Tape& t, const Mat& g) {
    if (t.needs_grad(a)) t.accumulate(a, g * b.value().transpose());
    if (t.needs_grad(b)) t.accumulate(b, a.value().transpose() * g);
  });
}

/// a * bᵀ
inline Var matmul_nt(Var a, Var b) {
  detail::same_tape(a, b);
  if (a.cols() != b.cols())
    throw ShapeError("matmul_nt: " + detail::shape(a.value()) + " times transpose of " + detail::shape(b.value()));
  Mat v = a.value() * b.value().transpose();
  return detail::make(a, std::move(v), {a, b}, [a, b](Tape& t, const Mat& g) {
    if (t.needs_grad(a)) t.accumulate(a, g * b.value());
    if (t.needs_grad(b)) t.accumulate(b, g.transpose() * a.value());
  });
}

/// x W + b with x: B x in, W: in x out, b: 1 x out.
inline Var dense(Var x, Var W, Var b);

// --- elementwise with broadcasting ---------------------------------------------

inline Var add(Var a, Var b) {
  detail::same_tape(a, b);
  auto k = detail::broadcast_kind(a.value(), b.value(), "add");
  Mat v = a.value() + detail::expand(b.value(), a.rows(), a.cols(), k);
  return detail::make(a, std::move(v), {a, b}, [a, b, k](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    if (t.needs_grad(b)) t.accumulate(b, detail::reduce(g, k));
  });
}

inline Var sub(Var a, Var b) {
  detail::same_tape(a, b);
  auto k = detail::broadcast_kind(a.value(), b.value(), "sub");
  Mat v = a.value() - detail::expand(b.value(), a.rows(), a.cols(), k);
  return detail::make(a, std::move(v), {a, b}, [a, b, k](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    if (t.needs_grad(b)) t.accumulate(b, -detail::reduce(g, k));
  });
}

inline Var mul(Var a, Var b) {
  detail::same_tape(a, b);
  auto k = detail::broadcast_kind(a.value(), b.value(), "mul");
  Mat be = detail::expand(b.value(), a.rows(), a.cols(), k);
  Mat v = a.value().cwiseProduct(be);
  return detail::make(a, std::move(v), {a, b}, [a, b, k, be = std::move(be)](Tape& t, const Mat& g) {
    if (t.needs_grad(a)) t.accumulate(a, g.cwiseProduct(be));
    if (t.needs_grad(b)) t.accumulate(b, detail::reduce(g.cwiseProduct(a.value()), k));
  });
}

inline Var scale(Var a, double s) {
  Mat v = a.value() * s;
  return detail::make(a, std::move(v), {a}, [a, s](Tape& t, const Mat& g) { t.accumulate(a, g * s); });
}

inline Var dense(Var x, Var W, Var b) { return add(matmul(x, W), b); }

// --- activations ---------------------------------------------------------------

inline Var tanh(Var a) {
  Mat v = a.value().array().tanh().matrix();
  return detail::make(a, v, {a}, [a, v](Tape& t, const Mat& g) {
    t.accumulate(a, g.cwiseProduct((1.0 - v.array().square()).matrix()));
  });
}

inline Var sin(Var a) {
  Mat v = a.value().array().sin().matrix();
  return detail::make(a, std::move(v), {a}, [a](Tape& t, const Mat& g) {
    t.accumulate(a, g.cwiseProduct(a.value().array().cos().matrix()));
  });
}

inline Var relu(Var a) {
  Mat v = a.value().cwiseMax(0.0);
  return detail::make(a, std::move(v), {a}, [a](Tape& t, const Mat& g) {
    t.accumulate(a, (a.value().array() > 0.0).select(g, 0.0).matrix());
  });
}

enum class Activation { identity, tanh, sin, relu };

inline Var activate(Var a, Activation act) {
  switch (act) {
    case Activation::identity: return a;
    case Activation::tanh: return tanh(a);
    case Activation::sin: return sin(a);
    case Activation::relu: return relu(a);
  }
  return a;
}

// --- reductions and reshaping ----------------------------------------------------

inline Var sum(Var a) {
  Mat v = Mat::Constant(1, 1, a.value().sum());
  return detail::make(a, std::move(v), {a}, [a](Tape& t, const Mat& g) {
    t.accumulate(a, Mat::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

inline Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

/// Sums each row: R x C -> R x 1.
inline Var row_sum(Var a) {
  Mat v = a.value().rowwise().sum();
  return detail::make(a, std::move(v), {a}, [a](Tape& t, const Mat& g) { t.accumulate(a, g.replicate(1, a.cols())); });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Eigen::Index rows = parts[0].rows(), cols = 0;
  for (auto p : parts) {
    detail::same_tape(parts[0], p);
    if (p.rows() != rows) throw ShapeError("concat_cols: row counts differ");
    cols += p.cols();
  }
  Mat v(rows, cols);
  Eigen::Index c = 0;
  for (auto p : parts) {
    v.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  Tape& t = *parts[0].tape;
  bool ng = false;
  for (auto p : parts) ng = ng || t.needs_grad(p);
  Var out = t.push(std::move(v), ng);
  if (ng)
    t.node(out.id).backward = [&t, id = out.id, parts]() {
      const Mat& g = t.node(id).grad;
      Eigen::Index c0 = 0;
      for (auto p : parts) {
        if (t.needs_grad(p)) t.accumulate(p, g.middleCols(c0, p.cols()));
        c0 += p.cols();
      }
    };
  return out;
}

/// Row-major reinterpretation with the same element count.
inline Var reshape(Var a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.value().size())
    throw ShapeError("reshape: " + detail::shape(a.value()) + " to " + std::to_string(rows) + "x" + std::to_string(cols));
  Mat v = Eigen::Map<const Mat>(a.value().data(), rows, cols);
  return detail::make(a, std::move(v), {a}, [a](Tape& t, const Mat& g) {
    t.accumulate(a, Eigen::Map<const Mat>(g.data(), a.rows(), a.cols()));
  });
}

// --- softmax and attention -------------------------------------------------------

/// Row-wise softmax with the row maximum subtracted first.
inline Mat softmax_rows_value(const Mat& z) {
  Mat p(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    double m = z.row(i).maxCoeff();
    auto a = (z.row(i).array() - m).eval();
    // Vectorized exp clamps its argument; flush far-negative logits to an exact 0.
    p.row(i) = (a < -700.0).select(0.0, a.exp()).matrix();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

/// dZ = P ⊙ (dP − rowsum(dP ⊙ P))
inline Mat softmax_rows_backward(const Mat& p, const Mat& dp) {
  Eigen::VectorXd s = dp.cwiseProduct(p).rowwise().sum();
  return p.cwiseProduct(dp - s.replicate(1, p.cols()));
}

inline Var softmax_rows(Var z) {
  Mat p = softmax_rows_value(z.value());
  return detail::make(z, p, {z}, [z, p](Tape& t, const Mat& g) { t.accumulate(z, softmax_rows_backward(p, g)); });
}

struct AttentionCache {
  Mat out;  ///< softmax((V Vᵀ + M)/√N) V
  Mat p;    ///< the attention weights
};

inline AttentionCache masked_attention_value(const Mat& V, const Eigen::MatrixXd& M) {
  const Eigen::Index n = V.rows();
  if (M.rows() != n || M.cols() != n)
    throw ShapeError("masked_attention: mask is " + std::to_string(M.rows()) + "x" + std::to_string(M.cols()) +
                     " for " + std::to_string(n) + " rows");
  const double inv = 1.0 / std::sqrt(static_cast<double>(n));
  Mat z = V * V.transpose();
  z += M;
  z *= inv;
  AttentionCache c;
  c.p = softmax_rows_value(z);
  c.out = c.p * V;
  return c;
}

/// softmax((V Vᵀ + M)/√N) V, with no learned projections. M is an additive
/// constant mask; the gradient flows to V through both the logits and the values.
inline Var masked_attention(Var V, const Eigen::MatrixXd& M) {
  auto c = masked_attention_value(V.value(), M);
  return detail::make(V, c.out, {V}, [V, p = std::move(c.p)](Tape& t, const Mat& g) {
    const Mat& v = V.value();
    const double inv = 1.0 / std::sqrt(static_cast<double>(v.rows()));
    Mat dv = p.transpose() * g;
    Mat dz = softmax_rows_backward(p, g * v.transpose()) * inv;
    dv += (dz + dz.transpose()) * v;
    t.accumulate(V, dv);
  });
}

// --- convolution --------------------------------------------------------------

struct ConvShape {
  int in_channels = 1;
  int height = 0;
  int width = 0;
  int out_channels = 1;
  int kernel = 3;
  int stride = 2;

  int out_height() const { return (height - kernel) / stride + 1; }
  int out_width() const { return (width - kernel) / stride + 1; }
  int in_size() const { return in_channels * height * width; }
  int out_size() const { return out_channels * out_height() * out_width(); }
  int patch() const { return in_channels * kernel * kernel; }
};

namespace detail {
/// One sample (C*H*W, channel-major) to a (Ho*Wo) x (C*k*k) patch matrix.
inline Mat im2col(const double* x, const ConvShape& s) {
  const int ho = s.out_height(), wo = s.out_width();
  Mat cols(ho * wo, s.patch());
  for (int oy = 0; oy < ho; ++oy)
    for (int ox = 0; ox < wo; ++ox) {
      int r = oy * wo + ox, c = 0;
      for (int ch = 0; ch < s.in_channels; ++ch)
        for (int ky = 0; ky < s.kernel; ++ky)
          for (int kx = 0; kx < s.kernel; ++kx)
            cols(r, c++) = x[(ch * s.height + oy * s.stride + ky) * s.width + ox * s.stride + kx];
    }
  return cols;
}

inline void col2im_add(const Mat& cols, double* dx, const ConvShape& s) {
  const int ho = s.out_height(), wo = s.out_width();
  for (int oy = 0; oy < ho; ++oy)
    for (int ox = 0; ox < wo; ++ox) {
      int r = oy * wo + ox, c = 0;
      for (int ch = 0; ch < s.in_channels; ++ch)
        for (int ky = 0; ky < s.kernel; ++ky)
          for (int kx = 0; kx < s.kernel; ++kx)
            dx[(ch * s.height + oy * s.stride + ky) * s.width + ox * s.stride + kx] += cols(r, c++);
    }
}
}  // namespace detail

/// Valid-padding strided cross-correlation.
/// x: B x (C*H*W); W: out_channels x (C*k*k); b: 1 x out_channels.
/// Output: B x (out_channels*Ho*Wo), channel-major per sample.
inline Var conv2d(Var x, Var W, Var b, const ConvShape& s) {
  if (s.out_height() < 1 || s.out_width() < 1)
    throw ShapeError("conv2d: " + std::to_string(s.height) + "x" + std::to_string(s.width) + " input is smaller than the kernel");
  if (x.cols() != s.in_size()) throw ShapeError("conv2d: input has " + std::to_string(x.cols()) + " columns, expected " + std::to_string(s.in_size()));
  if (W.rows() != s.out_channels || W.cols() != s.patch()) throw ShapeError("conv2d: weight shape " + detail::shape(W.value()));
  if (b.rows() != 1 || b.cols() != s.out_channels) throw ShapeError("conv2d: bias shape " + detail::shape(b.value()));
  const Eigen::Index batch = x.rows();
  const int hw = s.out_height() * s.out_width();
  Mat out(batch, s.out_size());
  std::vector<Mat> cols(static_cast<std::size_t>(batch));
  for (Eigen::Index i = 0; i < batch; ++i) {
    cols[static_cast<std::size_t>(i)] = detail::im2col(x.value().row(i).data(), s);
    Mat y = W.value() * cols[static_cast<std::size_t>(i)].transpose();  // Cout x HoWo
    y.colwise() += b.value().row(0).transpose();
    out.row(i) = Eigen::Map<const Eigen::RowVectorXd>(y.data(), y.size());
  }
  return detail::make(x, std::move(out), {x, W, b}, [x, W, b, s, hw, cols = std::move(cols)](Tape& t, const Mat& g) {
    Mat dW = Mat::Zero(W.rows(), W.cols());
    Mat db = Mat::Zero(1, s.out_channels);
    Mat dx;
    if (t.needs_grad(x)) dx = Mat::Zero(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      Eigen::Map<const Mat> gy(g.row(i).data(), s.out_channels, hw);
      dW += gy * cols[static_cast<std::size_t>(i)];
      db += gy.rowwise().sum().transpose();
      if (dx.size()) {
        Mat dcols = gy.transpose() * W.value();
        detail::col2im_add(dcols, dx.row(i).data(), s);
      }
    }
    t.accumulate(W, dW);
    t.accumulate(b, db);
    if (dx.size()) t.accumulate(x, dx);
  });
}

// --- optimisation --------------------------------------------------------------

/// Piecewise-constant learning rate: base until decay_epoch, then base * factor.
struct LrSchedule {
  double base = 1e-4;
  int decay_epoch = 800;
  double factor = 0.5;

  double at(int epoch) const { return epoch < decay_epoch ? base : base * factor; }
};

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<Mat> m, v;
};

/// One bias-corrected Adam update; consumes and does not clear the gradients.
inline void adam_step(const std::vector<Parameter*>& params, AdamState& s, double lr) {
  if (s.m.empty())
    for (auto* p : params) {
      s.m.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
      s.v.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    }
  if (s.m.size() != params.size()) throw ShapeError("adam_step: parameter list changed");
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * p.grad;
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * p.grad.cwiseAbs2();
    p.value.array() -= lr * (s.m[i].array() / c1) / ((s.v[i].array() / c2).sqrt() + s.eps);
  }
}

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename Rng>
Mat uniform_init(Eigen::Index rows, Eigen::Index cols, double fan_in, Rng& rng) {
  const double a = std::sqrt(1.0 / fan_in);
  std::uniform_real_distribution<double> u(-a, a);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

// --- serialisation ---------------------------------------------------------------

/// Named arrays: u32 count, then per array str name, u64 rows, u64 cols, f64 values.
inline void write_parameters(io::Writer& w, const std::vector<const Parameter*>& params) {
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    w.str(p->name);
    w.u64(static_cast<std::uint64_t>(p->value.rows()));
    w.u64(static_cast<std::uint64_t>(p->value.cols()));
    for (Eigen::Index i = 0; i < p->value.size(); ++i) w.f64(p->value.data()[i]);
  }
}

/// Reads arrays into existing parameters, checking names and shapes.
inline void read_parameters(io::Reader& r, const std::vector<Parameter*>& params) {
  auto n = r.u32();
  if (n != params.size())
    throw FormatError("parameter count " + std::to_string(n) + " does not match model (" + std::to_string(params.size()) + ")");
  for (auto* p : params) {
    auto name = r.str();
    if (name != p->name) throw FormatError("expected parameter '" + p->name + "', found '" + name + "'");
    auto rows = static_cast<Eigen::Index>(r.u64());
    auto cols = static_cast<Eigen::Index>(r.u64());
    if (rows != p->value.rows() || cols != p->value.cols())
      throw FormatError("parameter '" + name + "' has shape " + std::to_string(rows) + "x" + std::to_string(cols));
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = r.f64();
    p->zero_grad();
  }
}

}  // namespace hints::ad
