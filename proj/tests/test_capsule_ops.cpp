#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "capsloc/core/capsule.hpp"
#include "capsloc/core/gradcheck.hpp"
#include "capsloc/core/nn.hpp"
#include "capsloc/core/ops.hpp"
#include "capsloc/core/random.hpp"

using capsloc::DegenerateError;
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

TEST_CASE("primary_caps_gather reorders to (type,row,col) x atoms") {
  const int types = 2, atoms = 3, g = 2;
  Tensor<double> x({1, types * atoms, g, g});
  for (std::size_t i = 0; i < x.size(); ++i) x.raw()[i] = static_cast<double>(i);
  auto u = ops::primary_caps_gather<double>(nullptr, x, types, atoms);
  REQUIRE(u.shape() == capsloc::Shape{1, types * g * g, atoms});
  for (int t = 0; t < types; ++t)
    for (int r = 0; r < g; ++r)
      for (int c = 0; c < g; ++c)
        for (int a = 0; a < atoms; ++a)
          CHECK(u.at({0, (t * g + r) * g + c, a}) ==
                x.at({0, t * atoms + a, r, c}));
}

TEST_CASE("capsule_transform applies a shared matrix per type and class") {
  const int types = 2, per_type = 3, a_in = 2, j = 2, a_out = 3;
  Rng rng(31);
  auto u = randn(rng, {2, types * per_type, a_in});
  auto w = randn(rng, {types, a_in, j, a_out});
  auto u_hat = ops::capsule_transform<double>(nullptr, u, w, types);
  REQUIRE(u_hat.shape() == capsloc::Shape{2, types * per_type, j, a_out});
  for (int n = 0; n < 2; ++n)
    for (int i = 0; i < types * per_type; ++i) {
      const int t = i / per_type;
      for (int cj = 0; cj < j; ++cj)
        for (int a = 0; a < a_out; ++a) {
          double want = 0;
          for (int b = 0; b < a_in; ++b)
            want += u.at({n, i, b}) * w.at({t, b, cj, a});
          CHECK(u_hat.at({n, i, cj, a}) == Catch::Approx(want).margin(1e-12));
        }
    }
}

TEST_CASE("capsule_weighted_sum is the coupling-weighted vector sum") {
  Rng rng(37);
  auto c = randn(rng, {2, 4, 3});
  auto u_hat = randn(rng, {2, 4, 3, 5});
  auto s = ops::capsule_weighted_sum<double>(nullptr, c, u_hat);
  REQUIRE(s.shape() == capsloc::Shape{2, 3, 5});
  for (int n = 0; n < 2; ++n)
    for (int j = 0; j < 3; ++j)
      for (int a = 0; a < 5; ++a) {
        double want = 0;
        for (int i = 0; i < 4; ++i)
          want += c.at({n, i, j}) * u_hat.at({n, i, j, a});
        CHECK(s.at({n, j, a}) == Catch::Approx(want).margin(1e-12));
      }
}

TEST_CASE("coordinate_average is a convex combination of the grid") {
  // Uniform couplings land exactly on the grid centroid.
  const int caps = 4, j = 2;
  Tensor<double> coords({caps, 2}, {0.2, 0.2, 0.2, 0.8, 0.8, 0.2, 0.8, 0.8});
  Tensor<double> c = Tensor<double>::full({1, caps, j}, 0.25);
  auto o = ops::coordinate_average<double>(nullptr, c, coords);
  for (int cj = 0; cj < j; ++cj) {
    CHECK(o.at({0, cj, 0}) == Catch::Approx(0.5));
    CHECK(o.at({0, cj, 1}) == Catch::Approx(0.5));
  }

  // All mass on one capsule reproduces that capsule's coordinates, and the
  // normalization makes the result invariant to scaling the couplings.
  Tensor<double> c1({1, caps, 1}, {0.0, 0.0, 1.0, 0.0});
  // exact zero mass elsewhere is fine as long as the column total is positive
  auto o1 = ops::coordinate_average<double>(nullptr, c1, coords);
  CHECK(o1.at({0, 0, 0}) == Catch::Approx(0.8));
  CHECK(o1.at({0, 0, 1}) == Catch::Approx(0.2));

  Tensor<double> c2({1, caps, 1}, {0.1, 0.2, 0.3, 0.4});
  Tensor<double> c2s({1, caps, 1}, {0.01, 0.02, 0.03, 0.04});
  auto oa = ops::coordinate_average<double>(nullptr, c2, coords);
  auto ob = ops::coordinate_average<double>(nullptr, c2s, coords);
  CHECK(oa.at({0, 0, 0}) == Catch::Approx(ob.at({0, 0, 0})));
  CHECK(oa.at({0, 0, 1}) == Catch::Approx(ob.at({0, 0, 1})));

  // Output always stays inside the hull of the coordinates.
  Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor<double> cr({1, caps, 3});
    for (auto& v : cr.data()) v = rng.uniform(0.001, 1.0);
    auto orr = ops::coordinate_average<double>(nullptr, cr, coords);
    for (int cj = 0; cj < 3; ++cj)
      for (int d = 0; d < 2; ++d) {
        CHECK(orr.at({0, cj, d}) >= 0.2);
        CHECK(orr.at({0, cj, d}) <= 0.8);
      }
  }

  Tensor<double> dead({1, caps, 1}, {0.0, 0.0, 0.0, 0.0});
  REQUIRE_THROWS_AS(ops::coordinate_average<double>(nullptr, dead, coords),
                    DegenerateError);
}

TEST_CASE("agreement equals the 18-atom dot product done explicitly") {
  Rng rng(43);
  const int n = 2, caps = 5, j = 3, a = 4, d = 2;
  auto u_hat = randn(rng, {n, caps, j, a});
  auto v = randn(rng, {n, j, a});
  auto coords = randn(rng, {caps, d});
  auto o = randn(rng, {n, j, d});
  auto delta = ops::agreement<double>(nullptr, u_hat, v, coords, o);
  REQUIRE(delta.shape() == capsloc::Shape{n, caps, j});
  for (int i = 0; i < n; ++i)
    for (int ci = 0; ci < caps; ++ci)
      for (int cj = 0; cj < j; ++cj) {
        // concatenate [coords_i | u_hat] and [o_j | v_j], then one dot product
        double want = 0;
        for (int k = 0; k < d; ++k)
          want += coords.at({ci, k}) * o.at({i, cj, k});
        for (int k = 0; k < a; ++k)
          want += u_hat.at({i, ci, cj, k}) * v.at({i, cj, k});
        CHECK(delta.at({i, ci, cj}) == Catch::Approx(want).margin(1e-12));
      }
}

TEST_CASE("capsule op gradients match central differences") {
  Rng rng(47);
  auto check = [](capsloc::GradCheckResult r, double tol = 1e-6) {
    INFO(r.worst << " rel err " << r.max_rel_err);
    CHECK(r.ok(tol));
  };

  SECTION("gather and transform") {
    auto x = randn(rng, {2, 6, 2, 2});
    auto w = randn(rng, {2, 3, 2, 4});
    check(capsloc::grad_check<double>({{"x", x}, {"w", w}},
                                      [&](Tape<double>* t) {
      auto u = ops::primary_caps_gather(t, x, 2, 3);
      auto u_hat = ops::capsule_transform(t, u, w, 2);
      return ops::sum_all(t, ops::sigmoid(t, u_hat));
    }));
  }

  SECTION("weighted sum") {
    auto c = randn(rng, {2, 4, 3});
    auto u_hat = randn(rng, {2, 4, 3, 5});
    check(capsloc::grad_check<double>({{"c", c}, {"u_hat", u_hat}},
                                      [&](Tape<double>* t) {
      return ops::sum_all(t, ops::sigmoid(t, ops::capsule_weighted_sum(t, c, u_hat)));
    }));
  }

  SECTION("coordinate average through softmax couplings") {
    auto b = randn(rng, {2, 5, 3});
    Tensor<double> coords({5, 2});
    for (auto& v : coords.data()) v = rng.uniform(0.1, 0.9);
    auto w = randn(rng, {2, 3, 2});
    check(capsloc::grad_check<double>({{"b", b}}, [&](Tape<double>* t) {
      auto c = ops::softmax(t, b, 2);
      auto o = ops::coordinate_average(t, c, coords);
      return ops::sum_all(t, ops::mul(t, o, w));
    }));
  }

  SECTION("agreement") {
    auto u_hat = randn(rng, {2, 4, 3, 5});
    auto v = randn(rng, {2, 3, 5});
    auto o = randn(rng, {2, 3, 2});
    Tensor<double> coords({4, 2});
    for (auto& vv : coords.data()) vv = rng.uniform(0.1, 0.9);
    auto w = randn(rng, {2, 4, 3});
    check(capsloc::grad_check<double>(
        {{"u_hat", u_hat}, {"v", v}, {"o", o}}, [&](Tape<double>* t) {
          auto delta = ops::agreement(t, u_hat, v, coords, o);
          return ops::sum_all(t, ops::mul(t, delta, w));
        }));
  }
}
