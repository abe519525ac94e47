#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "hints/io.hpp"
#include "hints/tensor_ad.hpp"

using namespace hints;
using ad::Mat;
using ad::Tape;
using ad::Var;

TEST(Ops, DenseIdentity) {
  Tape t;
  Mat x = Mat::Random(3, 4);
  Var y = ad::dense(t.input(x), t.constant(Mat::Identity(4, 4)), t.constant(Mat::Zero(1, 4)));
  EXPECT_EQ(y.value(), x);
}

TEST(Ops, ActivationSlopesAtZero) {
  for (auto f : {+[](Var v) { return ad::tanh(v); }, +[](Var v) { return ad::sin(v); }}) {
    Tape t;
    Var x = t.input(Mat::Zero(1, 1));
    t.backward(f(x));
    EXPECT_DOUBLE_EQ(x.grad()(0, 0), 1.0);
  }
}

TEST(Ops, BackwardAccumulates) {
  Tape t;
  Var x = t.input(Mat::Constant(1, 1, 2.0));
  Var y = ad::mul(x, x);
  t.backward(y);
  t.backward(y);
  EXPECT_DOUBLE_EQ(x.grad()(0, 0), 8.0);
}

TEST(Ops, ShapeErrors) {
  Tape t;
  Var a = t.input(Mat::Zero(2, 3));
  EXPECT_THROW(ad::add(a, t.input(Mat::Zero(3, 2))), ShapeError);
  EXPECT_THROW(ad::matmul(a, a), ShapeError);
  EXPECT_THROW(ad::reshape(a, 4, 2), ShapeError);
  EXPECT_THROW(t.backward(a), ShapeError);
}

TEST(Softmax, KnownRows) {
  Mat z(2, 2);
  z << 0.0, 0.0, 0.0, -1e30;
  Mat p = ad::softmax_rows_value(z);
  EXPECT_EQ(p(0, 0), 0.5);
  EXPECT_EQ(p(0, 1), 0.5);
  EXPECT_EQ(p(1, 0), 1.0);
  EXPECT_EQ(p(1, 1), 0.0);
}

TEST(Attention, TrivialCases) {
  Mat v = Mat::Constant(1, 3, 0.7);
  EXPECT_EQ(ad::masked_attention_value(v, Eigen::MatrixXd::Zero(1, 1)).out, v);
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(4, 4);
  M.col(2).setConstant(kMaskSentinel);
  EXPECT_TRUE(ad::masked_attention_value(Mat::Zero(4, 2), M).out.isZero(0.0));
}

TEST(Attention, MaskedRowsDoNotLeak) {
  std::mt19937_64 rng(5);
  std::bernoulli_distribution drop(0.4);
  std::uniform_real_distribution<double> big(-1e6, 1e6);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 12;
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
    std::vector<bool> masked(n);
    for (int j = 1; j < n; ++j)
      if ((masked[static_cast<std::size_t>(j)] = drop(rng))) M.col(j).setConstant(kMaskSentinel);
    Mat V = gradcheck::random_mat(n, 3, rng);
    Mat W = V;
    for (int j = 0; j < n; ++j)
      if (masked[static_cast<std::size_t>(j)]) W.row(j) = Mat::Constant(1, 3, big(rng));
    auto a = ad::masked_attention_value(V, M).out, b = ad::masked_attention_value(W, M).out;
    for (int i = 0; i < n; ++i)
      if (!masked[static_cast<std::size_t>(i)]) {
        EXPECT_EQ(a.row(i), b.row(i));
      }
  }
}

TEST(Conv, ConstantInputAllOnesKernel) {
  ad::ConvShape s{1, 15, 15, 1, 3, 2};
  Tape t;
  Var y = ad::conv2d(t.input(Mat::Constant(1, 225, 2.0)), t.constant(Mat::Ones(1, 9)), t.constant(Mat::Zero(1, 1)), s);
  EXPECT_EQ(y.cols(), 49);
  EXPECT_TRUE((y.value().array() == 18.0).all());
}

TEST(Conv, TowerShapeChain) {
  int side = 15;
  std::vector<int> sides;
  for (int i = 0; i < 3; ++i) {
    ad::ConvShape s{1, side, side, 1, 3, 2};
    side = s.out_height();
    sides.push_back(side);
  }
  EXPECT_EQ(sides, (std::vector<int>{7, 3, 1}));
}

TEST(GradCheck, EveryOperationOverSeeds) {
  for (const auto& c : gradcheck::operation_cases())
    for (unsigned seed = 0; seed < 20; ++seed) {
      std::mt19937_64 rng(seed);
      EXPECT_LT(c.run(rng), 1e-5) << c.name << " seed " << seed;
    }
}

TEST(GradCheck, SoftmaxThreeByFour) {
  std::mt19937_64 rng(1);
  auto R = gradcheck::random_mat(3, 4, rng);
  double e = gradcheck::max_relative_error({gradcheck::random_mat(3, 4, rng)}, [R](Tape& t, const std::vector<Var>& v) {
    return ad::sum(ad::mul(ad::softmax_rows(v[0]), t.constant(R)));
  });
  EXPECT_LT(e, 1e-6);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  ad::Parameter p("w", Mat::Random(2, 3));
  Mat before = p.value;
  ad::AdamState s;
  for (int i = 0; i < 10; ++i) ad::adam_step({&p}, s, 1e-2);
  EXPECT_EQ(p.value, before);
}

TEST(Adam, ConstantGradientStepIsBounded) {
  ad::Parameter p("w", Mat::Zero(1, 2));
  ad::AdamState s;
  const double lr = 1e-3;
  for (int i = 0; i < 100; ++i) {
    Mat before = p.value;
    p.grad << 3.0, -0.01;
    ad::adam_step({&p}, s, lr);
    EXPECT_LE((p.value - before).cwiseAbs().maxCoeff(), lr * (1 + 1e-6));
  }
}

TEST(Adam, QuadraticBowlDecreasesMonotonically) {
  ad::Parameter p("w", Mat::Ones(1, 2));
  ad::AdamState s;
  double prev = INFINITY;
  for (int i = 0; i < 200; ++i) {
    p.zero_grad();
    Tape t;
    Var w = t.param(p);
    Var loss = ad::sum(ad::mul(w, w));
    double l = loss.value()(0, 0);
    EXPECT_LT(l, prev);
    prev = l;
    t.backward(loss);
    ad::adam_step({&p}, s, 1e-2);
  }
}

TEST(Schedule, HalvesAtDecayEpoch) {
  ad::LrSchedule lr;
  EXPECT_EQ(lr.at(0), 1e-4);
  EXPECT_EQ(lr.at(799), 1e-4);
  EXPECT_EQ(lr.at(800), 5e-5);
}

TEST(Parameters, SerializationRoundTrip) {
  ad::Parameter a("a", Mat::Random(2, 3)), b("b", Mat::Random(1, 4));
  io::Writer w;
  ad::write_parameters(w, {&a, &b});
  ad::Parameter a2("a", Mat::Zero(2, 3)), b2("b", Mat::Zero(1, 4)), c("c", Mat::Zero(1, 4));
  io::Reader r(w.buffer());
  ad::read_parameters(r, {&a2, &b2});
  EXPECT_EQ(a2.value, a.value);
  EXPECT_EQ(b2.value, b.value);
  io::Reader r2(w.buffer());
  EXPECT_THROW(ad::read_parameters(r2, {&a2, &c}), FormatError);
}
