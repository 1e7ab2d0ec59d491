#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "latentwave/adam.hpp"
#include "latentwave/autodiff.hpp"
#include "latentwave/grad_check.hpp"

using namespace latentwave;

namespace {

Tensor<double> random_tensor(Shape shape, unsigned seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = u(rng);
  return t;
}

// Direct 6-loop cross-correlation used as an independent reference.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, std::size_t stride, std::size_t pad) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  const std::size_t k = ws[2];
  auto od = [&](std::size_t n) { return (n + 2 * pad - k) / stride + 1; };
  Tensor<double> y(Shape{xs[0], ws[0], od(xs[2]), od(xs[3]), od(xs[4])});
  const auto& ys = y.shape();
  for (std::size_t b = 0; b < xs[0]; ++b)
    for (std::size_t co = 0; co < ws[0]; ++co)
      for (std::size_t z = 0; z < ys[2]; ++z)
        for (std::size_t yy = 0; yy < ys[3]; ++yy)
          for (std::size_t xx = 0; xx < ys[4]; ++xx) {
            double acc = 0.0;
            for (std::size_t ci = 0; ci < xs[1]; ++ci)
              for (std::size_t a = 0; a < k; ++a)
                for (std::size_t bb = 0; bb < k; ++bb)
                  for (std::size_t c = 0; c < k; ++c) {
                    long iz = long(z * stride + a) - long(pad);
                    long iy = long(yy * stride + bb) - long(pad);
                    long ix = long(xx * stride + c) - long(pad);
                    if (iz < 0 || iy < 0 || ix < 0 || iz >= long(xs[2]) || iy >= long(xs[3]) || ix >= long(xs[4]))
                      continue;
                    acc += x[(((b * xs[1] + ci) * xs[2] + iz) * xs[3] + iy) * xs[4] + ix] *
                           w[(((co * ws[1] + ci) * k + a) * k + bb) * k + c];
                  }
            y[(((b * ys[1] + co) * ys[2] + z) * ys[3] + yy) * ys[4] + xx] = acc;
          }
  return y;
}

}  // namespace

TEST(Tensor, RejectsBadRankAndLength) {
  EXPECT_THROW(Tensor<float>(Shape{}), ShapeError);
  EXPECT_THROW(Tensor<float>(Shape{1, 1, 1, 1, 1, 1}), ShapeError);
  EXPECT_THROW(Tensor<float>(Shape{2, 2}, std::vector<float>(3)), ShapeError);
  Tensor<float> t(Shape{2, 3}, 1.5f);
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_FLOAT_EQ(t[5], 1.5f);
}

TEST(Conv3d, DeltaKernelIsIdentity) {
  auto x = random_tensor({2, 1, 5, 6, 7}, 1);
  Tensor<double> w(Shape{1, 1, 3, 3, 3});
  w[13] = 1.0;
  auto y = conv3d(constant(x), constant(w));
  EXPECT_EQ(y.value(), x);
}

TEST(Conv3d, OnesKernelOnOnesGivesWindowSum) {
  Tensor<double> x(Shape{1, 1, 6, 6, 6}, 1.0);
  Tensor<double> w(Shape{1, 1, 3, 3, 3}, 1.0);
  auto y = conv3d(constant(x), constant(w)).value();
  EXPECT_DOUBLE_EQ(y[((2 * 6) + 2) * 6 + 2], 27.0);
  EXPECT_DOUBLE_EQ(y[0], 8.0);
}

TEST(Conv3d, MatchesNaiveReference) {
  for (std::size_t stride : {1u, 2u}) {
    for (std::size_t cout : {3u, 9u}) {
      auto x = random_tensor({2, 5, 7, 6, 9}, 10 + cout);
      auto w = random_tensor({cout, 5, 3, 3, 3}, 20 + cout);
      auto got = conv3d(constant(x), constant(w), stride).value();
      auto want = naive_conv(x, w, stride, 1);
      ASSERT_EQ(got.shape(), want.shape());
      for (std::size_t i = 0; i < got.numel(); ++i) ASSERT_NEAR(got[i], want[i], 1e-12) << i;
    }
  }
  auto x = random_tensor({1, 2, 5, 5, 5}, 3);
  auto w = random_tensor({4, 2, 3, 3, 3}, 4);
  auto got = conv3d(constant(x), constant(w), 1, Padding::Valid).value();
  auto want = naive_conv(x, w, 1, 0);
  ASSERT_EQ(got.shape(), (Shape{1, 4, 3, 3, 3}));
  for (std::size_t i = 0; i < got.numel(); ++i) ASSERT_NEAR(got[i], want[i], 1e-12);
}

TEST(Conv3d, FloatFastPathMatchesDouble) {
  auto xd = random_tensor({1, 4, 8, 8, 8}, 5);
  auto wd = random_tensor({8, 4, 3, 3, 3}, 6);
  auto yd = conv3d(constant(xd), constant(wd)).value();
  auto yf = conv3d(constant(xd.cast<float>()), constant(wd.cast<float>())).value();
  for (std::size_t i = 0; i < yd.numel(); ++i) ASSERT_NEAR(yf[i], yd[i], 1e-4);
}

TEST(Conv3d, StrideTwoHalvesWithCeil) {
  Tensor<double> x(Shape{1, 1, 7, 8, 5});
  Tensor<double> w(Shape{2, 1, 3, 3, 3});
  EXPECT_EQ(conv3d(constant(x), constant(w), 2).shape(), (Shape{1, 2, 4, 4, 3}));
}

TEST(Conv3d, RejectsChannelMismatch) {
  Tensor<double> x(Shape{1, 2, 4, 4, 4});
  Tensor<double> w(Shape{1, 3, 3, 3, 3});
  EXPECT_THROW(conv3d(constant(x), constant(w)), ShapeError);
}

TEST(Conv3d, StrideThenUpsampleRestoresEvenShape) {
  for (std::size_t n : {2u, 4u, 6u, 10u}) {
    Tensor<double> x(Shape{1, 1, n, n + 2, n});
    Tensor<double> w(Shape{1, 1, 3, 3, 3});
    auto y = upsample_nearest(conv3d(constant(x), constant(w), 2));
    EXPECT_EQ(y.shape(), x.shape());
  }
}

TEST(Upsample, ReplicatesAndSumsGradients) {
  auto x = parameter(Tensor<double>(Shape{1, 1, 2, 2, 2}, 5.0));
  auto y = upsample_nearest(x);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 4, 4, 4}));
  for (double v : y.value().data()) EXPECT_EQ(v, 5.0);
  backward(sum(y));
  for (double g : x.grad().data()) EXPECT_EQ(g, 8.0);
}

TEST(Linear, IdentityAndBiasOnly) {
  auto x = random_tensor({2, 3}, 9);
  Tensor<double> eye(Shape{3, 3});
  for (int i = 0; i < 3; ++i) eye[i * 3 + i] = 1.0;
  auto y = linear(constant(x), constant(eye), constant(Tensor<double>(Shape{3})));
  EXPECT_EQ(y.value(), x);
  Tensor<double> b(Shape{3}, std::vector<double>{1, -2, 3});
  auto z = linear(constant(x), constant(Tensor<double>(Shape{3, 3})), constant(b));
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(z.value()[r * 3 + c], b[c]);
  EXPECT_THROW(linear(constant(x), constant(Tensor<double>(Shape{3, 4})), constant(b)), ShapeError);
}

TEST(Activations, LeakyReluValuesAndSlope) {
  auto x = parameter(Tensor<double>(Shape{4}, std::vector<double>{2.0, -1.0, -3.0, 0.0}));
  auto y = leaky_relu(x);
  EXPECT_DOUBLE_EQ(y.value()[0], 2.0);
  EXPECT_DOUBLE_EQ(y.value()[1], -0.2);
  backward(sum(y));
  EXPECT_DOUBLE_EQ(x.grad()[2], 0.2);
  EXPECT_DOUBLE_EQ(x.grad()[3], 1.0);
}

TEST(Activations, SinValuesAndGradient) {
  auto x = parameter(Tensor<double>(Shape{2}, std::vector<double>{0.0, std::numbers::pi / 2}));
  auto y = sin_activation(x);
  EXPECT_DOUBLE_EQ(y.value()[0], 0.0);
  EXPECT_DOUBLE_EQ(y.value()[1], 1.0);
  backward(sum(y));
  EXPECT_DOUBLE_EQ(x.grad()[0], 1.0);
}

TEST(Losses, L1Examples) {
  Tensor<double> a(Shape{2}, std::vector<double>{1.0, -1.0});
  Tensor<double> z(Shape{2});
  EXPECT_DOUBLE_EQ(l1_loss(constant(a), constant(z)).value()[0], 1.0);
  EXPECT_DOUBLE_EQ(l1_loss(constant(a), constant(a)).value()[0], 0.0);
  EXPECT_THROW(l1_loss(constant(a), constant(Tensor<double>(Shape{3}))), ShapeError);
}

TEST(Losses, L1MatchesBruteForce) {
  for (unsigned s = 0; s < 5; ++s) {
    auto a = random_tensor({4, 4, 4}, 100 + s);
    auto b = random_tensor({4, 4, 4}, 200 + s);
    double acc = 0.0;
    for (std::size_t i = 0; i < 64; ++i) acc += std::fabs(a[i] - b[i]);
    EXPECT_NEAR(l1_loss(constant(a), constant(b)).value()[0], acc / 64.0, 1e-7);
  }
}

TEST(Losses, L1SubgradientAtEqualityIsZero) {
  auto a = parameter(Tensor<double>(Shape{2}, std::vector<double>{1.0, 2.0}));
  backward(l1_loss(a, constant(Tensor<double>(Shape{2}, std::vector<double>{1.0, 0.0}))));
  EXPECT_EQ(a.grad()[0], 0.0);
  EXPECT_EQ(a.grad()[1], 0.5);
}

TEST(Losses, L2ExamplesAndGradient) {
  auto a = parameter(Tensor<double>(Shape{1}, std::vector<double>{3.0}));
  auto loss = l2_loss(a, constant(Tensor<double>(Shape{1})));
  EXPECT_DOUBLE_EQ(loss.value()[0], 9.0);
  backward(loss);
  EXPECT_DOUBLE_EQ(a.grad()[0], 6.0);
  auto x = random_tensor({5}, 3);
  auto y = random_tensor({5}, 4);
  auto xv = parameter(x);
  backward(l2_loss(xv, constant(y)));
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(xv.grad()[i], 2.0 * (x[i] - y[i]) / 5.0, 1e-15);
}

TEST(Backward, AccumulatesIntoLeaves) {
  auto x = parameter(Tensor<double>(Shape{3}, std::vector<double>{0.1, 0.2, 0.3}));
  auto loss = sum(sin_activation(x));
  backward(loss);
  auto once = x.grad();
  backward(loss);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(x.grad()[i], 2.0 * once[i]);
}

TEST(Backward, RejectsNonScalarRoot) {
  auto x = parameter(Tensor<double>(Shape{3}));
  EXPECT_THROW(backward(sin_activation(x)), ShapeError);
}

TEST(Backward, NoGradGuardSkipsRecording) {
  auto x = parameter(Tensor<double>(Shape{3}));
  NoGradGuard guard;
  EXPECT_FALSE(sin_activation(x).requires_grad());
}

TEST(GradCheck, LinearOnThreeVector) {
  auto err = grad_check(
      [](const std::vector<Var<double>>& v) { return sum(sin_activation(linear(v[0], v[1], v[2]))); },
      {random_tensor({1, 3}, 1), random_tensor({2, 3}, 2), random_tensor({2}, 3)});
  EXPECT_LT(err, 1e-6);
}

TEST(GradCheck, ConvLeakyComposite) {
  // Inputs are kept away from zero so finite differences never straddle the kink.
  auto x = random_tensor({1, 2, 5, 4, 6}, 11, 0.5, 1.0);
  auto w = random_tensor({3, 2, 3, 3, 3}, 12, 0.1, 1.0);
  auto b = random_tensor({3}, 13);
  for (std::size_t stride : {1u, 2u}) {
    auto err = grad_check(
        [stride](const std::vector<Var<double>>& v) { return sum(leaky_relu(conv3d(v[0], v[1], v[2], stride))); },
        {x, w, b});
    EXPECT_LT(err, 1e-4) << "stride " << stride;
  }
}

TEST(GradCheck, FastPathConvInDoubleAndValidPadding) {
  auto x = random_tensor({2, 3, 6, 6, 6}, 21);
  auto w = random_tensor({8, 3, 3, 3, 3}, 22);
  auto target = random_tensor({2, 8, 6, 6, 6}, 23);
  auto err = grad_check(
      [&](const std::vector<Var<double>>& v) { return l2_loss(conv3d(v[0], v[1]), constant(target)); }, {x, w});
  EXPECT_LT(err, 1e-4);
  auto err_valid = grad_check(
      [](const std::vector<Var<double>>& v) { return sum(sin_activation(conv3d(v[0], v[1], 1, Padding::Valid))); },
      {random_tensor({1, 2, 5, 5, 5}, 24), random_tensor({2, 2, 3, 3, 3}, 25)});
  EXPECT_LT(err_valid, 1e-4);
}

TEST(GradCheck, SinChainDepthThree) {
  auto err = grad_check(
      [](const std::vector<Var<double>>& v) { return sum(sin_activation(sin_activation(sin_activation(v[0])))); },
      {random_tensor({7}, 31, -2.0, 2.0)});
  EXPECT_LT(err, 1e-6);
}

TEST(GradCheck, UpsampleAndLosses) {
  auto target = random_tensor({1, 2, 4, 4, 6}, 41);
  EXPECT_LT(grad_check(
                [&](const std::vector<Var<double>>& v) { return l2_loss(upsample_nearest(v[0]), constant(target)); },
                {random_tensor({1, 2, 2, 2, 3}, 42)}),
            1e-6);
  EXPECT_LT(grad_check([](const std::vector<Var<double>>& v) { return l1_loss(v[0], v[1]); },
                       {random_tensor({10}, 43), random_tensor({10}, 44)}),
            1e-4);
  EXPECT_LT(grad_check([](const std::vector<Var<double>>& v) { return l2_loss(v[0], v[1]); },
                       {random_tensor({10}, 45), random_tensor({10}, 46)}),
            1e-6);
}

TEST(GradCheck, ThreeLayerMlpWithReshape) {
  auto err = grad_check(
      [](const std::vector<Var<double>>& v) {
        auto h = sin_activation(linear(v[0], v[1], v[2]));
        h = leaky_relu(linear(h, v[3], v[4]));
        h = linear(h, v[5], v[6]);
        return sum(reshape(h, Shape{8}));
      },
      {random_tensor({2, 3}, 51), random_tensor({5, 3}, 52), random_tensor({5}, 53), random_tensor({5, 5}, 54),
       random_tensor({5}, 55, 0.5, 1.0), random_tensor({4, 5}, 56), random_tensor({4}, 57)});
  EXPECT_LT(err, 1e-4);
}

TEST(GradCheck, NonScalarOutputThrows) {
  EXPECT_THROW(grad_check([](const std::vector<Var<double>>& v) { return sin_activation(v[0]); },
                          {random_tensor({3}, 1)}),
               ShapeError);
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  Tensor<double> p(Shape{3}, std::vector<double>{1.0, -2.0, 0.5});
  Tensor<double> g(Shape{3});
  AdamState<double> st(0.01);
  adam_step<double>({&p}, {&g}, st);
  EXPECT_EQ(p, (Tensor<double>(Shape{3}, std::vector<double>{1.0, -2.0, 0.5})));
  EXPECT_EQ(st.step_count, 1);
}

TEST(Adam, FirstStepMatchesHandComputedUpdate) {
  Tensor<double> p(Shape{1}, 0.0);
  Tensor<double> g(Shape{1}, 1.0);
  AdamState<double> st(0.001);
  adam_step<double>({&p}, {&g}, st);
  const double expected = -0.001 / (1.0 + 1e-8 * std::sqrt(1.0 / (1.0 - 0.999)));
  EXPECT_NEAR(p[0], expected, 1e-12);
}

TEST(Adam, MinimizesQuadratic) {
  auto x = parameter(Tensor<double>(Shape{1}, 0.0));
  std::vector<Var<double>> params{x};
  AdamState<double> st(0.1);
  int steps = 0;
  while (steps < 2000 && std::fabs(x.value()[0] - 3.0) >= 1e-3) {
    backward(l2_loss(x, constant(Tensor<double>(Shape{1}, 3.0))));
    adam_step(params, st);
    ++steps;
  }
  EXPECT_LT(std::fabs(x.value()[0] - 3.0), 1e-3);
}

TEST(Adam, RejectsShapeMismatch) {
  Tensor<double> p(Shape{3});
  Tensor<double> g(Shape{2});
  AdamState<double> st;
  EXPECT_THROW(adam_step<double>({&p}, {&g}, st), ShapeError);
}
