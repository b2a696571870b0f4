#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "capsloc/core/gradcheck.hpp"
#include "capsloc/core/ops.hpp"
#include "capsloc/core/random.hpp"

using capsloc::DimensionError;
using capsloc::GradCheckResult;
using capsloc::Rng;
using capsloc::Tape;
using capsloc::Tensor;
namespace ops = capsloc::ops;

namespace {

Tensor<double> randn(Rng& rng, capsloc::Shape shape) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = rng.normal();
  return t;
}

}  // namespace

TEST_CASE("matmul forward matches hand computation") {
  Tensor<double> a({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor<double> b({3, 2}, {7, 8, 9, 10, 11, 12});
  Tensor<double> c = ops::matmul<double>(nullptr, a, b);
  REQUIRE(c.shape() == capsloc::Shape{2, 2});
  CHECK(c.at({0, 0}) == Catch::Approx(58));
  CHECK(c.at({0, 1}) == Catch::Approx(64));
  CHECK(c.at({1, 0}) == Catch::Approx(139));
  CHECK(c.at({1, 1}) == Catch::Approx(154));
  REQUIRE_THROWS_AS(ops::matmul<double>(nullptr, a, a), DimensionError);
}

TEST_CASE("elementwise and broadcast forwards") {
  Tensor<double> x({2, 2}, {1, -2, 3, -4});
  Tensor<double> y({2, 2}, {10, 20, 30, 40});
  CHECK(ops::add<double>(nullptr, x, y).at({1, 1}) == Catch::Approx(36));
  CHECK(ops::mul_scalar<double>(nullptr, x, 2.0).at({0, 1}) == Catch::Approx(-4));
  CHECK(ops::relu<double>(nullptr, x).at({0, 1}) == 0.0);
  CHECK(ops::relu<double>(nullptr, x).at({1, 0}) == 3.0);
  CHECK(ops::sigmoid<double>(nullptr, Tensor<double>({1}, {0.0})).item() ==
        Catch::Approx(0.5));

  Tensor<double> bias({2}, {100, 200});
  auto z = ops::add_rowvec<double>(nullptr, x, bias);
  CHECK(z.at({0, 0}) == Catch::Approx(101));
  CHECK(z.at({1, 1}) == Catch::Approx(196));

  Tensor<double> img({1, 2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  auto zb = ops::add_channel_bias<double>(nullptr, img, bias);
  CHECK(zb.at({0, 0, 1, 1}) == Catch::Approx(104));
  CHECK(zb.at({0, 1, 0, 0}) == Catch::Approx(205));
}

TEST_CASE("softmax slices sum to one and are shift invariant") {
  Tensor<double> x({2, 3}, {1, 2, 3, 1000, 1001, 1002});
  auto y = ops::softmax<double>(nullptr, x, 1);
  for (int i = 0; i < 2; ++i) {
    double s = 0;
    for (int j = 0; j < 3; ++j) s += y.at({i, j});
    CHECK(s == Catch::Approx(1.0));
  }
  CHECK(y.at({0, 0}) == Catch::Approx(y.at({1, 0})));
  CHECK(y.at({0, 2}) == Catch::Approx(std::exp(3.0) /
                                      (std::exp(1.0) + std::exp(2.0) + std::exp(3.0))));

  Tensor<double> even({1, 4}, {0, 0, 0, 0});
  auto u = ops::softmax<double>(nullptr, even, -1);
  for (int j = 0; j < 4; ++j) CHECK(u.at({0, j}) == Catch::Approx(0.25));
}

TEST_CASE("softmax over a middle axis") {
  Tensor<double> x({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  auto y = ops::softmax<double>(nullptr, x, 1);
  for (int n = 0; n < 2; ++n)
    for (int k = 0; k < 2; ++k)
      CHECK(y.at({n, 0, k}) + y.at({n, 1, k}) == Catch::Approx(1.0));
  CHECK(y.at({0, 1, 0}) == Catch::Approx(1.0 / (1.0 + std::exp(1.0 - 3.0))));
}

TEST_CASE("sum and norm reduce the chosen axis") {
  Tensor<double> x({2, 3}, {1, 2, 3, 4, 5, 6});
  auto s0 = ops::sum<double>(nullptr, x, 0);
  REQUIRE(s0.shape() == capsloc::Shape{3});
  CHECK(s0.at({1}) == Catch::Approx(7));
  auto s1 = ops::sum<double>(nullptr, x, -1);
  CHECK(s1.at({0}) == Catch::Approx(6));
  CHECK(ops::sum_all<double>(nullptr, x).item() == Catch::Approx(21));

  Tensor<double> v({1, 2}, {3, 4});
  CHECK(ops::norm_l2<double>(nullptr, v, 1).at({0}) == Catch::Approx(5.0));
}

TEST_CASE("concat and slice round trip") {
  Tensor<double> a({2, 2}, {1, 2, 3, 4});
  Tensor<double> b({2, 3}, {5, 6, 7, 8, 9, 10});
  auto c = ops::concat<double>(nullptr, {a, b}, 1);
  REQUIRE(c.shape() == capsloc::Shape{2, 5});
  CHECK(c.at({0, 1}) == 2);
  CHECK(c.at({0, 2}) == 5);
  CHECK(c.at({1, 4}) == 10);
  auto back = ops::slice<double>(nullptr, c, 1, 2, 3);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) CHECK(back.at({i, j}) == b.at({i, j}));
  REQUIRE_THROWS_AS(ops::slice<double>(nullptr, c, 1, 4, 3), DimensionError);
  REQUIRE_THROWS_AS(ops::concat<double>(nullptr, {a, Tensor<double>({3, 2})}, 1),
                    DimensionError);
}

TEST_CASE("reshape op keeps data and routes gradients") {
  Tensor<double> x({2, 3}, {1, 2, 3, 4, 5, 6});
  x.set_requires_grad(true);
  Tape<double> tape;
  auto y = ops::reshape<double>(&tape, x, {3, 2});
  REQUIRE(y.shares_storage(x));
  auto n = ops::norm_l2<double>(&tape, y.reshaped({1, 6}), 1);
  auto loss = ops::sum_all<double>(&tape, n);
  tape.backward(loss);
  const double nrm = std::sqrt(1 + 4 + 9 + 16 + 25 + 36);
  for (int i = 0; i < 6; ++i)
    CHECK(x.grad()[i] == Catch::Approx((i + 1) / nrm));
}

TEST_CASE("gradients of core ops match central differences") {
  Rng rng(7);
  auto check = [](GradCheckResult r) {
    INFO(r.worst << " rel err " << r.max_rel_err);
    CHECK(r.ok(1e-6));
  };

  SECTION("matmul, add, bias") {
    auto a = randn(rng, {3, 4});
    auto b = randn(rng, {4, 2});
    auto bias = randn(rng, {2});
    check(capsloc::grad_check<double>(
        {{"a", a}, {"b", b}, {"bias", bias}}, [&](Tape<double>* t) {
          auto y = ops::add_rowvec(t, ops::matmul(t, a, b), bias);
          return ops::sum_all(t, ops::sigmoid(t, y));
        }));
  }

  SECTION("relu and scalar scaling") {
    auto x = randn(rng, {4, 5});
    check(capsloc::grad_check<double>({{"x", x}}, [&](Tape<double>* t) {
      return ops::sum_all(t, ops::relu(t, ops::mul_scalar(t, x, 1.7)));
    }));
  }

  SECTION("elementwise product, both inputs") {
    auto x = randn(rng, {4, 3});
    auto y = randn(rng, {4, 3});
    check(capsloc::grad_check<double>({{"x", x}, {"y", y}},
                                      [&](Tape<double>* t) {
      return ops::sum_all(t, ops::sigmoid(t, ops::mul(t, x, y)));
    }));
  }

  SECTION("softmax every axis") {
    auto x = randn(rng, {2, 3, 4});
    for (int axis : {0, 1, 2}) {
      auto w = randn(rng, {2, 3, 4});
      check(capsloc::grad_check<double>({{"x", x}}, [&](Tape<double>* t) {
        return ops::sum_all(t, ops::mul(t, ops::softmax(t, x, axis), w));
      }));
    }
  }

  SECTION("sum, norm, concat, slice") {
    auto x = randn(rng, {3, 4});
    auto y = randn(rng, {3, 2});
    check(capsloc::grad_check<double>({{"x", x}, {"y", y}},
                                      [&](Tape<double>* t) {
      auto c = ops::concat(t, {x, y}, 1);
      auto s = ops::slice(t, c, 1, 1, 4);
      auto n = ops::norm_l2(t, s, 1);
      auto m = ops::sum(t, ops::sigmoid(t, c), 0);
      return ops::add(t, ops::sum_all(t, n), ops::sum_all(t, m));
    }));
  }

  SECTION("add_channel_bias") {
    auto x = randn(rng, {2, 3, 2, 2});
    auto b = randn(rng, {3});
    check(capsloc::grad_check<double>({{"x", x}, {"b", b}},
                                      [&](Tape<double>* t) {
      return ops::sum_all(t, ops::sigmoid(t, ops::add_channel_bias(t, x, b)));
    }));
  }
}
