#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "hints/error.hpp"

namespace hints {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

// ---------------------------------------------------------------------------
// Shapes
// ---------------------------------------------------------------------------

/// Immutable constructive-solid-geometry tree over rectangles and discs.
/// Signed distance is positive inside, negative outside, zero on the boundary.
/// Primitives are exact; boolean nodes use min/max and are only sign-exact.
class Shape {
 public:
  enum class Op { rect, circle, unite, intersect, subtract };

  static Shape rect(double x0, double y0, double x1, double y1) {
    if (!(x0 < x1) || !(y0 < y1)) throw GeometryError("rect: degenerate extent");
    return Shape(Op::rect, {x0, y0, x1, y1}, {});
  }
  static Shape circle(double cx, double cy, double r) {
    if (!(r > 0)) throw GeometryError("circle: radius must be positive");
    return Shape(Op::circle, {cx, cy, r}, {});
  }
  static Shape unite(std::vector<Shape> parts) { return Shape(Op::unite, {}, std::move(parts)); }
  static Shape intersect(std::vector<Shape> parts) {
    return Shape(Op::intersect, {}, std::move(parts));
  }
  static Shape subtract(Shape a, Shape b) { return Shape(Op::subtract, {}, {std::move(a), std::move(b)}); }

  double sdf(Point p) const {
    switch (node_->op) {
      case Op::rect: {
        const auto& q = node_->params;
        double dx = std::max(q[0] - p.x, p.x - q[2]);
        double dy = std::max(q[1] - p.y, p.y - q[3]);
        double outside = std::hypot(std::max(dx, 0.0), std::max(dy, 0.0));
        double inside = std::min(std::max(dx, dy), 0.0);
        return -(outside + inside);
      }
      case Op::circle: {
        const auto& q = node_->params;
        return q[2] - std::hypot(p.x - q[0], p.y - q[1]);
      }
      case Op::unite: {
        double d = -1e300;
        for (const auto& c : node_->children) d = std::max(d, c.sdf(p));
        return d;
      }
      case Op::intersect: {
        double d = 1e300;
        for (const auto& c : node_->children) d = std::min(d, c.sdf(p));
        return d;
      }
      case Op::subtract:
        return std::min(node_->children[0].sdf(p), -node_->children[1].sdf(p));
    }
    return 0.0;
  }

  Op op() const { return node_->op; }
  const std::vector<double>& params() const { return node_->params; }
  const std::vector<Shape>& children() const { return node_->children; }

  std::string to_string() const {
    std::ostringstream os;
    os.precision(17);
    auto list = [&](const char* name) {
      os << name << '(';
      for (std::size_t i = 0; i < node_->children.size(); ++i) {
        if (i) os << ',';
        os << node_->children[i].to_string();
      }
      os << ')';
    };
    switch (node_->op) {
      case Op::rect:
      case Op::circle: {
        os << (node_->op == Op::rect ? "rect(" : "circle(");
        for (std::size_t i = 0; i < node_->params.size(); ++i) {
          if (i) os << ',';
          os << node_->params[i];
        }
        os << ')';
        break;
      }
      case Op::unite: list("union"); break;
      case Op::intersect: list("inter"); break;
      case Op::subtract: list("diff"); break;
    }
    return os.str();
  }

 private:
  struct Node {
    Op op;
    std::vector<double> params;
    std::vector<Shape> children;
  };

  Shape(Op op, std::vector<double> params, std::vector<Shape> children)
      : node_(std::make_shared<const Node>(Node{op, std::move(params), std::move(children)})) {
    if ((op == Op::unite || op == Op::intersect) && node_->children.empty())
      throw GeometryError("boolean shape needs at least one operand");
  }

  std::shared_ptr<const Node> node_;
};

namespace detail {

/// Recursive-descent parser for shape expressions:
///   rect(x0,y0,x1,y1) | circle(cx,cy,r) | union(a,b,...) | inter(a,b,...) | diff(a,b)
class ShapeParser {
 public:
  explicit ShapeParser(std::string_view text) : s_(text) {}

  Shape parse_all() {
    Shape sh = parse();
    skip_ws();
    if (pos_ != s_.size()) fail("trailing characters");
    return sh;
  }

 private:
  Shape parse() {
    skip_ws();
    std::string name;
    while (pos_ < s_.size() && (std::isalpha(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
      name += s_[pos_++];
    expect('(');
    if (name == "rect" || name == "circle") {
      std::vector<double> v = numbers();
      if (name == "rect") {
        if (v.size() != 4) fail("rect takes 4 numbers");
        return Shape::rect(v[0], v[1], v[2], v[3]);
      }
      if (v.size() != 3) fail("circle takes 3 numbers");
      return Shape::circle(v[0], v[1], v[2]);
    }
    std::vector<Shape> args;
    for (;;) {
      args.push_back(parse());
      skip_ws();
      if (peek() == ',') {
        ++pos_;
        continue;
      }
      expect(')');
      break;
    }
    if (name == "union") return Shape::unite(std::move(args));
    if (name == "inter") return Shape::intersect(std::move(args));
    if (name == "diff") {
      if (args.size() != 2) fail("diff takes exactly 2 shapes");
      return Shape::subtract(args[0], args[1]);
    }
    fail("unknown shape '" + name + "'");
    return args.front();
  }

  std::vector<double> numbers() {
    std::vector<double> out;
    for (;;) {
      skip_ws();
      std::size_t start = pos_;
      while (pos_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.' ||
                                  s_[pos_] == '-' || s_[pos_] == '+' || s_[pos_] == 'e' || s_[pos_] == 'E'))
        ++pos_;
      if (start == pos_) fail("expected number");
      out.push_back(std::stod(std::string(s_.substr(start, pos_ - start))));
      skip_ws();
      if (peek() == ',') {
        ++pos_;
        continue;
      }
      expect(')');
      return out;
    }
  }

  char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }
  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  void expect(char c) {
    skip_ws();
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw GeometryError("shape expression: " + what + " at offset " + std::to_string(pos_) + " in '" +
                        std::string(s_) + "'");
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

inline std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream is{std::string(s)};
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

}  // namespace detail

inline Shape parse_shape(std::string_view expr) { return detail::ShapeParser(expr).parse_all(); }

// ---------------------------------------------------------------------------
// Geometry catalog
// ---------------------------------------------------------------------------

enum class GeometryKind { unit_square, rectangle, rect_minus_rect, l_shape, crack_slit, multi_obstacle, custom_boolean };

inline std::string_view to_string(GeometryKind k) {
  switch (k) {
    case GeometryKind::unit_square: return "unit_square";
    case GeometryKind::rectangle: return "rectangle";
    case GeometryKind::rect_minus_rect: return "rect_minus_rect";
    case GeometryKind::l_shape: return "l_shape";
    case GeometryKind::crack_slit: return "crack_slit";
    case GeometryKind::multi_obstacle: return "multi_obstacle";
    case GeometryKind::custom_boolean: return "custom_boolean";
  }
  return "?";
}

inline GeometryKind parse_geometry_kind(std::string_view s) {
  for (auto k : {GeometryKind::unit_square, GeometryKind::rectangle, GeometryKind::rect_minus_rect,
                 GeometryKind::l_shape, GeometryKind::crack_slit, GeometryKind::multi_obstacle,
                 GeometryKind::custom_boolean})
    if (to_string(k) == s) return k;
  throw GeometryError("unknown geometry kind '" + std::string(s) + "'");
}

/// Which part of the boundary is nearest: the outer contour or one of the obstacles.
struct BoundaryPart {
  bool outer = true;
  std::size_t obstacle = 0;
};

/// Ω = outer \ (obstacle_1 ∪ ... ∪ obstacle_m), all inside [0,1]^2.
class Geometry {
 public:
  Geometry(GeometryKind kind, std::vector<double> params, Shape outer, std::vector<Shape> obstacles,
           std::string spec)
      : kind_(kind),
        params_(std::move(params)),
        outer_(std::move(outer)),
        obstacles_(std::move(obstacles)),
        spec_(std::move(spec)) {}

  double sdf(Point p) const { return sdf_and_part(p).first; }

  /// Signed distance together with the boundary part attaining it. Ties go to
  /// obstacles.
  std::pair<double, BoundaryPart> sdf_and_part(Point p) const {
    double d = outer_.sdf(p);
    BoundaryPart part{true, 0};
    for (std::size_t i = 0; i < obstacles_.size(); ++i) {
      double di = -obstacles_[i].sdf(p);
      if (di <= d) {
        d = di;
        part = {false, i};
      }
    }
    return {d, part};
  }

  GeometryKind kind() const { return kind_; }
  const std::vector<double>& params() const { return params_; }
  const Shape& outer() const { return outer_; }
  const std::vector<Shape>& obstacles() const { return obstacles_; }
  /// Canonical catalog string; stable across runs and usable as a report key.
  const std::string& spec() const { return spec_; }

 private:
  GeometryKind kind_;
  std::vector<double> params_;
  Shape outer_;
  std::vector<Shape> obstacles_;
  std::string spec_;
};

enum class BcPolicy { outer_impedance_inner_dirichlet, all_impedance, all_dirichlet };

inline std::string_view to_string(BcPolicy p) {
  switch (p) {
    case BcPolicy::outer_impedance_inner_dirichlet: return "outer_impedance_inner_dirichlet";
    case BcPolicy::all_impedance: return "all_impedance";
    case BcPolicy::all_dirichlet: return "all_dirichlet";
  }
  return "?";
}

inline BcPolicy parse_bc_policy(std::string_view s) {
  for (auto p : {BcPolicy::outer_impedance_inner_dirichlet, BcPolicy::all_impedance, BcPolicy::all_dirichlet})
    if (to_string(p) == s) return p;
  throw GeometryError("unknown bc policy '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Grid rasterization
// ---------------------------------------------------------------------------

enum class NodeKind : std::uint8_t { outside, inside, impedance, dirichlet };
enum class BcTag : std::uint8_t { dirichlet, impedance };

struct BoundaryFace {
  std::size_t node = 0;
  int nx = 0;  ///< outward normal, axis aligned
  int ny = 0;
  BcTag tag = BcTag::dirichlet;
};

/// Uniform (n_side x n_side) rasterization of a geometry on [0,1]^2.
/// Nodes are numbered row-major with x fastest.
struct GridMask {
  int n_side = 0;
  double h = 0.0;
  std::vector<NodeKind> kind;
  std::vector<std::uint8_t> inside_flags;
  std::vector<double> distance;
  std::vector<BoundaryFace> boundary_faces;

  std::size_t size() const { return kind.size(); }
  std::size_t index(int ix, int iy) const { return static_cast<std::size_t>(iy) * n_side + ix; }
  int ix(std::size_t i) const { return static_cast<int>(i % static_cast<std::size_t>(n_side)); }
  int iy(std::size_t i) const { return static_cast<int>(i / static_cast<std::size_t>(n_side)); }
  Point point(std::size_t i) const { return {ix(i) * h, iy(i) * h}; }
  bool in_grid(int x, int y) const { return x >= 0 && y >= 0 && x < n_side && y < n_side; }
  /// Unknowns of the discrete problem: interior nodes plus impedance-boundary nodes.
  bool is_unknown(std::size_t i) const { return kind[i] == NodeKind::inside || kind[i] == NodeKind::impedance; }
  std::size_t count(NodeKind k) const { return static_cast<std::size_t>(std::count(kind.begin(), kind.end(), k)); }
};

namespace detail {
inline constexpr double kSdfTol = 1e-12;
}

inline GridMask build_grid_mask(const Geometry& g, int n_side,
                                BcPolicy policy = BcPolicy::outer_impedance_inner_dirichlet) {
  if (n_side < 3) throw GeometryError("build_grid_mask: n_side must be >= 3");
  GridMask m;
  m.n_side = n_side;
  m.h = 1.0 / (n_side - 1);
  const std::size_t n = static_cast<std::size_t>(n_side) * n_side;
  m.kind.assign(n, NodeKind::outside);
  m.inside_flags.assign(n, 0);
  m.distance.assign(n, 0.0);
  std::vector<BoundaryPart> part(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto [d, bp] = g.sdf_and_part(m.point(i));
    m.distance[i] = d;
    part[i] = bp;
    if (d > detail::kSdfTol) {
      m.kind[i] = NodeKind::inside;
      m.inside_flags[i] = 1;
    }
  }
  std::size_t n_inside = m.count(NodeKind::inside);
  if (n_inside == 0) throw GeometryError("geometry '" + g.spec() + "' has no interior grid nodes");

  auto tag_for = [&](std::size_t i) {
    switch (policy) {
      case BcPolicy::all_impedance: return NodeKind::impedance;
      case BcPolicy::all_dirichlet: return NodeKind::dirichlet;
      case BcPolicy::outer_impedance_inner_dirichlet:
        return part[i].outer ? NodeKind::impedance : NodeKind::dirichlet;
    }
    return NodeKind::dirichlet;
  };
  for (std::size_t i = 0; i < n; ++i) {
    if (m.kind[i] == NodeKind::inside) continue;
    bool near_inside = false;
    for (int dy = -1; dy <= 1 && !near_inside; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        int x = m.ix(i) + dx, y = m.iy(i) + dy;
        if (m.in_grid(x, y) && m.kind[m.index(x, y)] == NodeKind::inside) {
          near_inside = true;
          break;
        }
      }
    if (near_inside) m.kind[i] = tag_for(i);
  }

  static constexpr std::array<std::array<int, 2>, 4> dirs{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
  for (std::size_t i = 0; i < n; ++i) {
    if (m.kind[i] == NodeKind::impedance) {
      for (auto [dx, dy] : dirs) {
        int x = m.ix(i) + dx, y = m.iy(i) + dy;
        if (!m.in_grid(x, y) || !m.is_unknown(m.index(x, y))) {
          if (m.in_grid(x, y) && m.kind[m.index(x, y)] == NodeKind::dirichlet) continue;
          m.boundary_faces.push_back({i, dx, dy, BcTag::impedance});
        }
      }
    } else if (m.kind[i] == NodeKind::dirichlet) {
      for (auto [dx, dy] : dirs) {
        int x = m.ix(i) - dx, y = m.iy(i) - dy;
        if (m.in_grid(x, y) && m.is_unknown(m.index(x, y))) m.boundary_faces.push_back({i, dx, dy, BcTag::dirichlet});
      }
    }
  }
  return m;
}

/// Builds a catalog geometry from its kind and parameters.
///   unit_square                          -
///   rectangle        x0 y0 x1 y1         outer rectangle
///   rect_minus_rect  x0 y0 x1 y1         unit square minus a rectangular hole
///   l_shape          cx cy               unit square minus [cx,1]x[cy,1]
///   crack_slit       x y0 y1 width       unit square minus a thin vertical slit
///   multi_obstacle   <shape expr>...     unit square minus each shape
///   custom_boolean   <outer expr> [| <obstacle expr>...]
inline Geometry make_geometry(GeometryKind kind, const std::vector<double>& params,
                              const std::vector<std::string>& exprs = {}) {
  auto need = [&](std::size_t count) {
    if (params.size() != count)
      throw GeometryError(std::string(to_string(kind)) + " expects " + std::to_string(count) + " parameters");
    for (double v : params)
      if (!(v >= 0.0 && v <= 1.0)) throw GeometryError(std::string(to_string(kind)) + ": parameters must lie in [0,1]");
  };
  std::ostringstream spec;
  spec.precision(17);
  spec << to_string(kind);
  for (double v : params) spec << ' ' << v;
  for (const auto& e : exprs) spec << ' ' << e;

  const Shape square = Shape::rect(0, 0, 1, 1);
  std::vector<Shape> obstacles;
  Shape outer = square;
  switch (kind) {
    case GeometryKind::unit_square: need(0); break;
    case GeometryKind::rectangle:
      need(4);
      outer = Shape::rect(params[0], params[1], params[2], params[3]);
      break;
    case GeometryKind::rect_minus_rect:
      need(4);
      obstacles.push_back(Shape::rect(params[0], params[1], params[2], params[3]));
      break;
    case GeometryKind::l_shape:
      need(2);
      outer = Shape::subtract(square, Shape::rect(params[0], params[1], 1.0, 1.0));
      break;
    case GeometryKind::crack_slit: {
      need(4);
      double w = params[3];
      obstacles.push_back(Shape::rect(params[0] - w / 2, params[1], params[0] + w / 2, params[2]));
      break;
    }
    case GeometryKind::multi_obstacle:
      need(0);
      if (exprs.empty()) throw GeometryError("multi_obstacle needs at least one obstacle");
      for (const auto& e : exprs) obstacles.push_back(parse_shape(e));
      break;
    case GeometryKind::custom_boolean:
      need(0);
      if (exprs.empty()) throw GeometryError("custom_boolean needs an outer expression");
      outer = parse_shape(exprs[0]);
      for (std::size_t i = 1; i < exprs.size(); ++i) obstacles.push_back(parse_shape(exprs[i]));
      break;
  }
  Geometry g(kind, params, outer, std::move(obstacles), spec.str());
  // Reject empty interiors at the sensor resolution.
  build_grid_mask(g, 15);
  return g;
}

/// Parses "kind p1 p2 ..." catalog strings, e.g. "rect_minus_rect 0.5 0.5 0.6 0.6" or
/// "multi_obstacle rect(0.2,0.2,0.3,0.3) circle(0.7,0.7,0.1)". For custom_boolean the
/// first expression is the outer shape and further expressions follow a '|' each.
inline Geometry parse_geometry(std::string_view text) {
  auto toks = detail::split_ws(text);
  if (toks.empty()) throw GeometryError("empty geometry spec");
  GeometryKind kind = parse_geometry_kind(toks[0]);
  std::vector<double> params;
  std::vector<std::string> exprs;
  if (kind == GeometryKind::multi_obstacle || kind == GeometryKind::custom_boolean) {
    std::string rest;
    for (std::size_t i = 1; i < toks.size(); ++i) rest += toks[i];
    if (kind == GeometryKind::custom_boolean) {
      std::size_t start = 0;
      for (;;) {
        std::size_t bar = rest.find('|', start);
        exprs.push_back(rest.substr(start, bar == std::string::npos ? std::string::npos : bar - start));
        if (bar == std::string::npos) break;
        start = bar + 1;
      }
    } else {
      // split top-level shape calls
      int depth = 0;
      std::string cur;
      for (char c : rest) {
        cur += c;
        if (c == '(') ++depth;
        if (c == ')' && --depth == 0) {
          exprs.push_back(cur);
          cur.clear();
        }
      }
      if (!cur.empty()) throw GeometryError("multi_obstacle: unbalanced expression");
    }
  } else {
    for (std::size_t i = 1; i < toks.size(); ++i) {
      try {
        params.push_back(std::stod(toks[i]));
      } catch (const std::exception&) {
        throw GeometryError("geometry parameter '" + toks[i] + "' is not a number");
      }
    }
  }
  return make_geometry(kind, params, exprs);
}

// ---------------------------------------------------------------------------
// Sensors
// ---------------------------------------------------------------------------

inline constexpr int kSensorSide = 15;
inline constexpr double kMaskSentinel = -1e30;

/// Fixed sensor lattice used as the branch input. In 2D this is the flattened
/// 15x15 grid on [0,1]^2 (x fastest); in 1D the interior nodes of a uniform grid
/// on (0,1).
struct SensorSet {
  int dim = 2;
  std::vector<Point> coords;
  std::vector<double> distance;            ///< O: signed distance at each sensor
  std::vector<std::uint8_t> unmasked;       ///< 1 where the sensor carries a value of f
  Eigen::MatrixXd mask;                     ///< additive key mask, 0 or kMaskSentinel per column
  std::size_t inside_count = 0;

  std::size_t size() const { return coords.size(); }
};

namespace detail {
inline void finish_sensor_mask(SensorSet& s) {
  const auto n = static_cast<Eigen::Index>(s.size());
  s.mask = Eigen::MatrixXd::Zero(n, n);
  s.inside_count = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (s.unmasked[static_cast<std::size_t>(j)])
      ++s.inside_count;
    else
      s.mask.col(j).setConstant(kMaskSentinel);
  }
}
}  // namespace detail

/// A sensor is unmasked iff it is an unknown of the discrete problem on the
/// 15x15 lattice: an interior node, or an impedance-boundary node where f is
/// still prescribed.
inline SensorSet build_sensor_set(const Geometry& g,
                                  BcPolicy policy = BcPolicy::outer_impedance_inner_dirichlet) {
  GridMask m = build_grid_mask(g, kSensorSide, policy);
  SensorSet s;
  s.dim = 2;
  s.coords.resize(m.size());
  s.distance.resize(m.size());
  s.unmasked.resize(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    s.coords[i] = m.point(i);
    s.distance[i] = m.distance[i];
    s.unmasked[i] = m.is_unknown(i) ? 1 : 0;
  }
  detail::finish_sensor_mask(s);
  return s;
}

/// 1D sensors: the n interior nodes x_i = i/(n+1) of (0,1), all unmasked.
inline SensorSet build_sensor_set_1d(int n) {
  if (n < 1) throw GeometryError("build_sensor_set_1d: n must be >= 1");
  SensorSet s;
  s.dim = 1;
  for (int i = 1; i <= n; ++i) {
    double x = static_cast<double>(i) / (n + 1);
    s.coords.push_back({x, 0.0});
    s.distance.push_back(std::min(x, 1.0 - x));
    s.unmasked.push_back(1);
  }
  detail::finish_sensor_mask(s);
  return s;
}

/// Copies f and zeroes every masked entry.
inline std::vector<double> zero_extend(std::span<const double> f, const SensorSet& s) {
  if (f.size() != s.size()) throw DimensionError("zero_extend: expected " + std::to_string(s.size()) + " values");
  std::vector<double> out(f.begin(), f.end());
  for (std::size_t i = 0; i < out.size(); ++i)
    if (!s.unmasked[i]) out[i] = 0.0;
  return out;
}

/// Samples a pointwise function at the unmasked sensors, zero elsewhere.
inline std::vector<double> zero_extend(const std::function<double(Point)>& f, const SensorSet& s) {
  std::vector<double> out(s.size(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i)
    if (s.unmasked[i]) out[i] = f(s.coords[i]);
  return out;
}

}  // namespace hints
