#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "hints/deeponet.hpp"
#include "hints/geometry.hpp"

using namespace hints;
using ad::Mat;

namespace {
ModelConfig small_config(Variant v, int dim, int n_sensors, std::uint64_t seed = 3) {
  ModelConfig c = ModelConfig::defaults(v, dim, n_sensors);
  c.p = 6;
  c.branch_hidden = {8};
  c.trunk_hidden = {7, 7};
  c.seed = seed;
  return c;
}

std::vector<double> random_f(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::vector<double> f(n);
  for (auto& v : f) v = nd(rng);
  return f;
}

std::vector<Point> query_points(const SensorSet& s) { return s.coords; }
}  // namespace

TEST(Model, MaskedEqualsNonmaskedWithoutMaskedSensors) {
  auto g = parse_geometry("unit_square");
  auto s = build_sensor_set(g);
  ASSERT_EQ(s.inside_count, s.size());
  DeepOnetModel masked(small_config(Variant::masked, 2, 225));
  DeepOnetModel plain(small_config(Variant::nonmasked, 2, 225));
  auto f = random_f(225, 1);
  EXPECT_EQ(masked.evaluate(f, s, g, query_points(s)), plain.evaluate(f, s, g, query_points(s)));
}

TEST(Model, MaskedSensorsDoNotReachTheOutput) {
  auto g = parse_geometry("rect_minus_rect 0.25 0.25 0.5 0.5");
  auto s = build_sensor_set(g);
  ASSERT_LT(s.inside_count, s.size());
  DeepOnetModel masked(small_config(Variant::masked, 2, 225));
  DeepOnetModel plain(small_config(Variant::nonmasked, 2, 225));
  auto f = zero_extend(random_f(225, 2), s);
  auto garbage = f;
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> big(-1e6, 1e6);
  for (std::size_t i = 0; i < garbage.size(); ++i)
    if (!s.unmasked[i]) garbage[i] = big(rng);
  auto y = query_points(s);
  EXPECT_EQ(masked.evaluate(f, s, g, y), masked.evaluate(garbage, s, g, y));
  EXPECT_GT((plain.evaluate(f, s, g, y) - plain.evaluate(garbage, s, g, y)).norm(), 0.0);
}

TEST(Model, ZeroParametersGiveZero) {
  for (Variant v : {Variant::masked, Variant::vanilla, Variant::ga_vanilla}) {
    auto c = small_config(v, 2, 225);
    DeepOnetModel m(c);
    for (auto* p : m.parameters()) p->value.setZero();
    auto g = parse_geometry("l_shape 0.5 0.5");
    auto s = build_sensor_set(g);
    auto out = m.evaluate(zero_extend(random_f(225, 3), s), s, g, query_points(s));
    EXPECT_TRUE(out.isZero(0.0)) << to_string(v);
  }
}

TEST(Model, TrunkIsPeriodicInFirstBias) {
  auto s = build_sensor_set_1d(10);
  DeepOnetModel m(small_config(Variant::masked, 1, 10));
  auto before = m.trunk(s.coords, s.distance);
  for (bool imag : {false, true}) m.net(imag).trunk[0].b.value.array() += 2 * std::numbers::pi;
  auto after = m.trunk(s.coords, s.distance);
  EXPECT_LT((before.re - after.re).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((before.im - after.im).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Model, TrunkGradientMatchesFiniteDifferences) {
  DeepOnetModel m(small_config(Variant::masked, 2, 225));
  for (unsigned seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    Mat x = gradcheck::random_mat(5, 3, rng, 0.0, 1.0);
    Mat R = gradcheck::random_mat(5, 6, rng);
    double e = gradcheck::max_relative_error({x}, [&](ad::Tape& t, const std::vector<ad::Var>& v) {
      return ad::sum(ad::mul(m.trunk_forward(t, m.net(false), v[0]), t.constant(R)));
    });
    EXPECT_LT(e, 1e-5);
  }
}

TEST(Model, ParameterGradientsMatchFiniteDifferences) {
  for (Variant v : {Variant::masked, Variant::vanilla}) {
    const bool cnn = v == Variant::vanilla;
    auto c = cnn ? small_config(v, 2, 225) : small_config(v, 1, 6);
    DeepOnetModel m(c);
    auto g = parse_geometry("unit_square");
    SensorSet s = cnn ? build_sensor_set(g) : build_sensor_set_1d(6);
    auto ctx = m.context(s);
    Mat bin(2, c.branch_input_width());
    for (int i = 0; i < 2; ++i) {
      auto f = random_f(s.size(), 10 + static_cast<unsigned>(i));
      bin.row(i) = m.branch_features(f, ctx);
    }
    auto y = std::vector<Point>(s.coords.begin(), s.coords.begin() + 6);
    auto d = std::vector<double>(s.distance.begin(), s.distance.begin() + 6);
    Mat tin = m.trunk_features(y, d);
    std::mt19937_64 rng(4);
    Mat ure = gradcheck::random_mat(2, 6, rng), uim = gradcheck::random_mat(2, 6, rng);
    auto keep = m.row_keep(s);
    auto loss = [&] {
      ad::Tape t(false);
      return training_loss(t, m, bin, keep, tin, ure, uim).value()(0, 0);
    };
    auto params = m.parameters();
    for (auto* p : params) p->zero_grad();
    {
      ad::Tape t;
      t.backward(training_loss(t, m, bin, keep, tin, ure, uim));
    }
    const double h = 1e-6;
    for (auto* p : params) {
      // A handful of entries per parameter keeps the CNN case fast.
      for (Eigen::Index i = 0; i < p->value.size(); i += std::max<Eigen::Index>(1, p->value.size() / 4)) {
        double keep_v = p->value.data()[i];
        p->value.data()[i] = keep_v + h;
        double lp = loss();
        p->value.data()[i] = keep_v - h;
        double lm = loss();
        p->value.data()[i] = keep_v;
        double fd = (lp - lm) / (2 * h);
        EXPECT_NEAR(p->grad.data()[i], fd, 1e-6 * std::max(1.0, std::abs(fd))) << to_string(v) << " " << p->name << "[" << i << "]";
      }
    }
  }
}

TEST(Model, HandSetRankOneModel) {
  auto c = small_config(Variant::nonmasked, 1, 4);
  c.p = 1;
  c.branch_hidden = {};
  c.trunk_hidden = {};
  c.output_scale = 2.0;
  DeepOnetModel m(c);
  for (bool imag : {false, true}) {
    auto& n = m.net(imag);
    n.branch[0].W.value.setZero();
    n.branch[0].b.value(0, 0) = imag ? -1.5 : 3.0;
    n.trunk[0].W.value << 1.0, 0.5;  // x and distance
    n.trunk[0].b.value(0, 0) = imag ? 0.0 : 0.25;
  }
  auto s = build_sensor_set_1d(4);
  auto out = m.evaluate(random_f(4, 5), s, s.coords, s.distance);
  for (std::size_t i = 0; i < s.size(); ++i) {
    double t = s.coords[i].x + 0.5 * s.distance[i];
    Complex expect = 2.0 * Complex(3.0 * (t + 0.25), -1.5 * t);
    EXPECT_NEAR(std::abs(out(static_cast<Eigen::Index>(i)) - expect), 0.0, 1e-14);
  }
}

TEST(Model, BranchRunsOncePerEvaluation) {
  auto s = build_sensor_set_1d(8);
  DeepOnetModel m(small_config(Variant::masked, 1, 8));
  EvalCounters n;
  m.evaluate(random_f(8, 6), s, s.coords, s.distance, &n);
  EXPECT_EQ(n.branch_passes, 1u);
  EXPECT_EQ(n.trunk_points, 8u);
}

TEST(Model, RejectsBadInputs) {
  auto c = small_config(Variant::vanilla, 1, 30);
  EXPECT_THROW(DeepOnetModel{c}, ConfigError);
  DeepOnetModel m(small_config(Variant::masked, 1, 8));
  auto s = build_sensor_set_1d(8);
  auto wrong = build_sensor_set_1d(9);
  EXPECT_THROW(m.evaluate(random_f(9, 1), wrong, wrong.coords, wrong.distance), DimensionError);
  EXPECT_THROW(m.evaluate(random_f(7, 1), s, s.coords, s.distance), DimensionError);
  EXPECT_THROW(m.evaluate(random_f(8, 1), s, {{1.5, 0.0}}, {0.0}), GeometryError);
  EXPECT_THROW(parse_variant("transformer"), ConfigError);
}

TEST(Model, GaVanillaHasTwoTowers) {
  DeepOnetModel v(ModelConfig::defaults(Variant::vanilla));
  DeepOnetModel ga(ModelConfig::defaults(Variant::ga_vanilla));
  EXPECT_EQ(v.net(false).towers.size(), 1u);
  EXPECT_EQ(ga.net(false).towers.size(), 2u);
  EXPECT_GT(ga.parameter_count(), v.parameter_count());
  auto g = parse_geometry("l_shape 0.5 0.5");
  auto s = build_sensor_set(g);
  auto out = ga.evaluate(zero_extend(random_f(225, 7), s), s, g, query_points(s));
  EXPECT_EQ(out.size(), 225);
  EXPECT_TRUE(out.allFinite());
}

TEST(Loss, ExactAndZeroPredictions) {
  std::mt19937_64 rng(8);
  Mat ure = gradcheck::random_mat(4, 10, rng), uim = gradcheck::random_mat(4, 10, rng);
  ad::Tape t(false);
  EXPECT_EQ(relative_l2_loss(t, t.constant(ure), t.constant(uim), ure, uim).value()(0, 0), 0.0);
  double z = relative_l2_loss(t, t.constant(Mat::Zero(4, 10)), t.constant(Mat::Zero(4, 10)), ure, uim).value()(0, 0);
  EXPECT_NEAR(z, 1.0, 1e-10);
}

TEST(ModelFile, RoundTripIsBytewiseAndBitwise) {
  for (Variant v : {Variant::masked, Variant::ga_vanilla}) {
    auto c = small_config(v, 2, 225, 11);
    c.input_scale = 3.7;
    c.output_scale = 0.013;
    DeepOnetModel m(c);
    auto bytes = encode_model(m, {{"note", "x"}});
    auto back = decode_model(bytes);
    EXPECT_EQ(encode_model(back.model, {{"note", "x"}}), bytes);
    EXPECT_EQ(back.manifest.at("note"), "x");
    auto g = parse_geometry("l_shape 0.5 0.5");
    auto s = build_sensor_set(g);
    auto f = zero_extend(random_f(225, 12), s);
    EXPECT_EQ(back.model.evaluate(f, s, g, query_points(s)), m.evaluate(f, s, g, query_points(s)));

    bytes[bytes.size() - 20] ^= 0x01;
    EXPECT_THROW(decode_model(bytes), HashMismatchError);
  }
}
