#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "capsloc/core/gradcheck.hpp"
#include "capsloc/core/nn.hpp"
#include "capsloc/core/ops.hpp"
#include "capsloc/core/random.hpp"

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

TEST_CASE("squash of (3,4) lands on the worked value") {
  // |s| = 5, scale = 5/26, v = (15/26, 20/26), |v| = 25/26.
  Tensor<double> s({1, 2}, {3, 4});
  auto v = ops::squash<double>(nullptr, s, 1);
  CHECK(v.at({0, 0}) == Catch::Approx(15.0 / 26.0));
  CHECK(v.at({0, 1}) == Catch::Approx(20.0 / 26.0));
  auto n = ops::norm_l2<double>(nullptr, v, 1);
  CHECK(n.at({0}) == Catch::Approx(25.0 / 26.0));
}

TEST_CASE("squash keeps direction, bounds norm below one, kills zero") {
  Rng rng(23);
  auto x = randn(rng, {5, 8});
  auto v = ops::squash<double>(nullptr, x, 1);
  for (int i = 0; i < 5; ++i) {
    double nx = 0, nv = 0, dot = 0;
    for (int j = 0; j < 8; ++j) {
      nx += x.at({i, j}) * x.at({i, j});
      nv += v.at({i, j}) * v.at({i, j});
      dot += x.at({i, j}) * v.at({i, j});
    }
    nx = std::sqrt(nx);
    nv = std::sqrt(nv);
    CHECK(nv < 1.0);
    CHECK(nv == Catch::Approx(nx * nx / (1.0 + nx * nx)));
    CHECK(dot > 0.0);
  }

  Tensor<double> z({1, 4});
  auto vz = ops::squash<double>(nullptr, z, 1);
  for (int j = 0; j < 4; ++j) CHECK(vz.at({0, j}) == 0.0);

  // long vectors saturate toward unit norm
  Tensor<double> big({1, 2}, {300.0, 400.0});
  auto vb = ops::squash<double>(nullptr, big, 1);
  CHECK(ops::norm_l2<double>(nullptr, vb, 1).at({0}) == Catch::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("margin loss reproduces a hand-computed example") {
  // One sample, two classes. Norms (0.5, 0.5), class 0 present:
  //   present: (0.9-0.5)^2 = 0.16
  //   absent:  0.5*(0.5-0.1)^2 = 0.08
  Tensor<double> norms({1, 2}, {0.5, 0.5});
  Tensor<double> targets({1, 2}, {1.0, 0.0});
  auto l = ops::margin_loss<double>(nullptr, norms, targets, 0.9, 0.1, 0.5);
  CHECK(l.item() == Catch::Approx(0.24));

  // All ten absent classes at 0.5 plus one present at 0.5:
  //   0.16 + 10 * 0.08 = 0.96
  Tensor<double> n11({1, 11});
  Tensor<double> t11({1, 11});
  for (int j = 0; j < 11; ++j) n11.at({0, j}) = 0.5;
  t11.at({0, 0}) = 1.0;
  CHECK(ops::margin_loss<double>(nullptr, n11, t11, 0.9, 0.1, 0.5).item() ==
        Catch::Approx(0.96));

  // Perfectly confident predictions cost nothing.
  Tensor<double> good({1, 2}, {0.95, 0.05});
  CHECK(ops::margin_loss<double>(nullptr, good, targets, 0.9, 0.1, 0.5).item() ==
        0.0);

  // Batch averaging: duplicating the sample leaves the loss unchanged.
  Tensor<double> norms2({2, 2}, {0.5, 0.5, 0.5, 0.5});
  Tensor<double> targets2({2, 2}, {1, 0, 1, 0});
  CHECK(ops::margin_loss<double>(nullptr, norms2, targets2, 0.9, 0.1, 0.5).item() ==
        Catch::Approx(0.24));

  // Multi-hot rows: both present classes contribute positive terms.
  Tensor<double> tm({1, 2}, {1.0, 1.0});
  CHECK(ops::margin_loss<double>(nullptr, norms, tm, 0.9, 0.1, 0.5).item() ==
        Catch::Approx(0.32));
}

TEST_CASE("sse_mean averages over the batch only") {
  Tensor<double> p({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor<double> t({2, 3}, {0, 2, 3, 4, 5, 4});
  // (1 + 4) / 2
  CHECK(ops::sse_mean<double>(nullptr, p, t).item() == Catch::Approx(2.5));
}

TEST_CASE("softmax_xent on a uniform row is log K") {
  Tensor<double> logits({1, 4});
  CHECK(ops::softmax_xent<double>(nullptr, logits, {2}).item() ==
        Catch::Approx(std::log(4.0)));
}

TEST_CASE("mask_rows zeroes non-selected capsules") {
  Tensor<double> x({1, 3, 2}, {1, 2, 3, 4, 5, 6});
  Tensor<double> m({1, 3}, {0, 1, 0});
  auto y = ops::mask_rows<double>(nullptr, x, m);
  CHECK(y.at({0, 0, 0}) == 0.0);
  CHECK(y.at({0, 1, 0}) == 3.0);
  CHECK(y.at({0, 1, 1}) == 4.0);
  CHECK(y.at({0, 2, 1}) == 0.0);
}

TEST_CASE("nn op gradients match central differences") {
  Rng rng(29);
  auto check = [](capsloc::GradCheckResult r, double tol = 1e-6) {
    INFO(r.worst << " rel err " << r.max_rel_err);
    CHECK(r.ok(tol));
  };

  SECTION("squash") {
    auto x = randn(rng, {3, 4, 5});
    auto w = randn(rng, {3, 4, 5});
    for (int axis : {1, 2})
      check(capsloc::grad_check<double>({{"x", x}}, [&](Tape<double>* t) {
        return ops::sum_all(t, ops::mul(t, ops::squash(t, x, axis), w));
      }));
  }

  SECTION("margin loss") {
    Tensor<double> norms({3, 4});
    for (auto& v : norms.data()) v = rng.uniform(0.05, 0.95);
    Tensor<double> targets({3, 4});
    for (auto& v : targets.data()) v = rng.uniform() < 0.3 ? 1.0 : 0.0;
    check(capsloc::grad_check<double>({{"norms", norms}},
                                      [&](Tape<double>* t) {
      return ops::margin_loss(t, norms, targets, 0.9, 0.1, 0.5);
    }));
  }

  SECTION("sse") {
    auto p = randn(rng, {2, 6});
    auto tgt = randn(rng, {2, 6});
    check(capsloc::grad_check<double>({{"p", p}}, [&](Tape<double>* t) {
      return ops::sse_mean(t, p, tgt);
    }));
  }

  SECTION("softmax cross entropy") {
    auto logits = randn(rng, {4, 5});
    std::vector<int> labels{0, 3, 2, 4};
    check(capsloc::grad_check<double>({{"logits", logits}},
                                      [&](Tape<double>* t) {
      return ops::softmax_xent(t, logits, labels);
    }));
  }

  SECTION("masked rows") {
    auto x = randn(rng, {2, 3, 4});
    Tensor<double> m({2, 3}, {1, 0, 0, 0, 1, 0});
    check(capsloc::grad_check<double>({{"x", x}}, [&](Tape<double>* t) {
      return ops::sum_all(t, ops::sigmoid(t, ops::mask_rows(t, x, m)));
    }));
  }
}
