#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "ess/gradcheck.hpp"
#include "ess/nn.hpp"
#include "ess/rng.hpp"
#include "ess/tensor.hpp"

using namespace ess;
using ad::Tensor;
using T = Tensor<double>;
using V = std::vector<T>;

namespace {

std::vector<double> values(const T& t) { return {t.data().begin(), t.data().end()}; }

T rnd(const ad::Shape& s, std::uint64_t seed, double lo = -1, double hi = 1) {
  return gradcheck::random_tensor(s, seed, lo, hi);
}

void expect_grad_ok(const std::string& name, const gradcheck::ScalarFn& f, V inputs, double tol = 1e-4) {
  const auto r = gradcheck::check_function(name, f, std::move(inputs), tol);
  EXPECT_TRUE(r.passed) << name << " worst rel err " << r.worst_rel_err;
}

}  // namespace

TEST(Matmul, Examples) {
  const auto a = rnd({3, 4}, 1);
  std::vector<double> eye(9, 0.0);
  eye[0] = eye[4] = eye[8] = 1.0;
  EXPECT_EQ(values(ad::matmul(T::from_data({3, 3}, eye), a)), values(a));
  const auto b = ad::matmul(T::from_data({2, 2}, {1, 2, 3, 4}), T::from_data({2, 1}, {1, 1}));
  EXPECT_EQ(b.shape(), (ad::Shape{2, 1}));
  EXPECT_EQ(values(b), (std::vector<double>{3, 7}));
}

TEST(Matmul, ShapeMismatchThrows) {
  EXPECT_THROW(ad::matmul(rnd({2, 3}, 1), rnd({2, 3}, 2)), ad::ShapeError);
  EXPECT_THROW(ad::add(rnd({2, 3}, 1), rnd({3, 2}, 2)), ad::ShapeError);
}

TEST(Matmul, GradientCheck) {
  expect_grad_ok("matmul", [](const V& v) { return gradcheck::project(ad::matmul(v[0], v[1]), 1); },
                 {rnd({4, 5}, 1), rnd({5, 3}, 2)});
}

TEST(Conv2d, ZeroKernelsGiveZeroOutput) {
  const auto y = ad::conv2d(rnd({2, 5, 6}, 3), T::zeros({3, 2, 3, 3}));
  EXPECT_EQ(y.shape(), (ad::Shape{3, 5, 6}));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Conv2d, IdentityKernel) {
  std::vector<double> k(9, 0.0);
  k[4] = 1.0;
  const auto x = rnd({1, 7, 5}, 4);
  EXPECT_EQ(values(ad::conv2d(x, T::from_data({1, 1, 3, 3}, k))), values(x));
}

TEST(Conv2d, StrideShapeAndHandValue) {
  const auto y = ad::conv2d(T::full({1, 5, 5}, 1.0), T::full({1, 1, 3, 3}, 1.0), 2);
  EXPECT_EQ(y.shape(), (ad::Shape{1, 3, 3}));
  // Corners see a 2x2 window, edges 2x3, center 3x3.
  EXPECT_EQ(values(y), (std::vector<double>{4, 6, 4, 6, 9, 6, 4, 6, 4}));
}

TEST(Conv2d, BatchedMatchesPerImage) {
  const auto x = rnd({3, 2, 6, 6}, 5);
  const auto k = rnd({4, 2, 3, 3}, 6);
  const auto b = rnd({4}, 7);
  const auto y = ad::conv2d(x, k, b);
  for (std::size_t n = 0; n < 3; ++n) {
    std::vector<double> slice(x.data().begin() + n * 72, x.data().begin() + (n + 1) * 72);
    const auto yn = ad::conv2d(T::from_data({2, 6, 6}, slice), k, b);
    for (std::size_t i = 0; i < yn.numel(); ++i) ASSERT_EQ(y.data()[n * yn.numel() + i], yn.data()[i]);
  }
}

TEST(Conv2d, GradientCheck) {
  expect_grad_ok("conv2d", [](const V& v) { return gradcheck::project(ad::conv2d(v[0], v[1], v[2]), 2); },
                 {rnd({3, 8, 8}, 8), rnd({4, 3, 3, 3}, 9), rnd({4}, 10)});
  expect_grad_ok("conv2d_s2", [](const V& v) { return gradcheck::project(ad::conv2d(v[0], v[1], 2), 3); },
                 {rnd({2, 3, 8, 8}, 11), rnd({2, 3, 3, 3}, 12)});
}

TEST(Relu, Example) {
  EXPECT_EQ(values(ad::relu(T::from_data({3}, {-1, 0, 2}))), (std::vector<double>{0, 0, 2}));
}

TEST(AvgPool, ConstantAndOddExtent) {
  const auto y = ad::avg_pool2(T::full({2, 4, 6}, 3.5));
  EXPECT_EQ(y.shape(), (ad::Shape{2, 2, 3}));
  for (double v : y.data()) EXPECT_EQ(v, 3.5);
  EXPECT_EQ(ad::avg_pool2(T::zeros({1, 5, 5})).shape(), (ad::Shape{1, 2, 2}));
  EXPECT_EQ(values(ad::avg_pool2(T::from_data({1, 2, 2}, {1, 2, 3, 6}))), (std::vector<double>{3}));
}

TEST(Composite, MlpGradientCheck) {
  Rng rng(5);
  std::vector<double> w1(30);
  for (auto& v : w1) v = (rng.bernoulli(0.5) ? 1 : -1) * rng.uniform(0.2, 1.0);
  expect_grad_ok(
      "mlp",
      [](const V& v) {
        const auto h = ad::relu(ad::linear(v[0], v[1], v[2]));
        return ad::sum(ad::scale(ad::linear(h, v[3], T()), 0.5));
      },
      {rnd({4, 5}, 13), T::from_data({6, 5}, w1), rnd({6}, 14, 0.1, 0.3), rnd({2, 6}, 15)});
}

TEST(Concat, ValuesAndGrad) {
  const auto c = ad::concat<double>({T::from_data({1, 2}, {1, 2}), T::from_data({2, 2}, {3, 4, 5, 6})});
  EXPECT_EQ(c.shape(), (ad::Shape{3, 2}));
  EXPECT_EQ(values(c), (std::vector<double>{1, 2, 3, 4, 5, 6}));
  EXPECT_THROW(ad::concat<double>({rnd({1, 2}, 1), rnd({1, 3}, 2)}), ad::ShapeError);
}

TEST(L2Normalize, Examples) {
  const auto y = ad::l2_normalize(T::from_data({2}, {3, 4}));
  EXPECT_NEAR(y.data()[0], 0.6, 1e-15);
  EXPECT_NEAR(y.data()[1], 0.8, 1e-15);
  const auto u = ad::l2_normalize(T::from_data({3}, {0, 1, 0}));
  EXPECT_EQ(values(u), (std::vector<double>{0, 1, 0}));
  EXPECT_THROW(ad::l2_normalize(T::zeros({4})), std::domain_error);
  expect_grad_ok("l2", [](const V& v) { return gradcheck::project(ad::l2_normalize(v[0]), 4); }, {rnd({8}, 16)});
}

TEST(LogSumExp, Examples) {
  EXPECT_NEAR(ad::log_sum_exp(T::from_data({2}, {0, 0})).item(), std::log(2.0), 1e-15);
  EXPECT_NEAR(ad::cross_entropy(T::from_data({2}, {100, 0}), std::size_t{0}).item(), 0.0, 1e-40);
  // Max shift keeps large logits finite.
  EXPECT_NEAR(ad::log_sum_exp(T::from_data({2}, {1000, 1000})).item(), 1000 + std::log(2.0), 1e-9);
  expect_grad_ok("ce", [](const V& v) { return ad::cross_entropy(v[0], std::size_t{4}); }, {rnd({10}, 17, -3, 3)});
}

TEST(SoftCrossEntropy, OneHotEqualsCrossEntropy) {
  const auto logits = rnd({2, 5}, 18, -2, 2);
  const std::vector<double> t{0, 0, 1, 0, 0, 1, 0, 0, 0, 0};
  const std::vector<std::size_t> labels{2, 0};
  EXPECT_NEAR(ad::soft_cross_entropy(logits, std::span<const double>(t)).item(),
              ad::cross_entropy(logits, std::span<const std::size_t>(labels)).item(), 1e-14);
}

TEST(Backward, SumGivesOnes) {
  auto w = rnd({3, 4}, 19);
  w.set_requires_grad(true);
  ad::sum(w).backward();
  for (double g : w.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, StopGradientBlocksFlow) {
  auto w = rnd({5}, 20);
  w.set_requires_grad(true);
  const auto loss = ad::sum(ad::mul(ad::stop_gradient(w), ad::stop_gradient(w)));
  EXPECT_FALSE(loss.requires_grad());
  loss.backward();
  EXPECT_TRUE(w.grad().empty());
}

TEST(Backward, NonScalarThrows) {
  auto w = rnd({2}, 21);
  w.set_requires_grad(true);
  EXPECT_THROW(ad::scale(w, 2.0).backward(), ad::ShapeError);
}

TEST(Backward, SharedSubgraphAccumulates) {
  auto x = T::from_data({1}, {3.0}, true);
  const auto y = ad::mul(x, x);
  ad::sum(ad::add(y, y)).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 12.0);
}

TEST(NumericGuard, NonFiniteForwardThrows) {
  const auto big = T::from_data({1}, {1e300});
  EXPECT_THROW(ad::mul(big, big), ad::NumericError);
  EXPECT_THROW(T::from_data({1}, {std::nan("")}), ad::NumericError);
}

TEST(NumericGuard, RandomShapesStayFinite) {
  Rng rng(22);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t rows = 1 + rng.below(5), cols = 1 + rng.below(7);
    const double mag = std::pow(10.0, rng.uniform(-3, 3));
    auto x = rnd({rows, cols}, 100 + trial, -mag, mag);
    x.set_requires_grad(true);
    const auto y = ad::log_sum_exp(ad::scale(x, 1.0));
    ad::mean(y).backward();
    for (double g : x.grad()) ASSERT_TRUE(std::isfinite(g));
  }
}

TEST(Sgd, Examples) {
  nn::ParameterSet<double> ps;
  ps.add("theta", T::from_data({1}, {1.0}, true));
  nn::Sgd<double> frozen(nn::SgdConfig{0.0, 0.9, 1e-4});
  frozen.step(ps, {{"theta", {5.0}}});
  EXPECT_EQ(ps.get("theta").data()[0], 1.0);

  nn::Sgd<double> plain(nn::SgdConfig{0.1, 0.0, 0.0});
  plain.step(ps, {{"theta", {1.0}}});
  EXPECT_DOUBLE_EQ(ps.get("theta").data()[0], 0.9);
}

TEST(Sgd, QuadraticBowlConverges) {
  nn::ParameterSet<double> ps;
  ps.add("theta", T::from_data({1}, {1.0}, true));
  nn::Sgd<double> opt(nn::SgdConfig{0.1, 0.0, 0.0});
  for (int i = 0; i < 100; ++i) {
    ps.zero_grad();
    auto& th = ps.get("theta");
    ad::sum(ad::mul(th, th)).backward();
    opt.step(ps);
  }
  EXPECT_LT(std::abs(ps.get("theta").data()[0]), 1e-8);
}

TEST(Sgd, RejectsMismatchedGradients) {
  nn::ParameterSet<double> ps;
  ps.add("a", T::zeros({2}, true));
  nn::Sgd<double> opt(nn::SgdConfig{});
  EXPECT_THROW(opt.step(ps, {{"b", {1.0, 1.0}}}), std::invalid_argument);
  EXPECT_THROW((nn::SgdConfig{0.1, 1.0, 0.0}.validate()), std::invalid_argument);
}
