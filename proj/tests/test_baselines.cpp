#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <vector>

#include "capsloc/baselines/convnet.hpp"
#include "capsloc/baselines/gradcam.hpp"
#include "capsloc/baselines/heuristic.hpp"
#include "capsloc/core/gradcheck.hpp"

using capsloc::CapsNetConfig;
using capsloc::ConfigError;
using capsloc::ConvBenchmark;
using capsloc::ConvBenchmarkConfig;
using capsloc::DegenerateError;
using capsloc::Rng;
using capsloc::Tape;
using capsloc::Tensor;
using capsloc::json;
namespace ops = capsloc::ops;

namespace {

ConvBenchmarkConfig tiny_benchmark(const std::string& variant) {
  ConvBenchmarkConfig c;
  c.variant = variant;
  c.reconstruction = variant == "embedding";
  c.trunk.image_size = 16;
  c.trunk.conv1 = {3, 5, 2};
  c.trunk.conv2 = {4, 3, 1};
  c.trunk.primary_types = 2;
  c.trunk.primary_kernel = 3;
  c.trunk.primary_stride = 1;
  c.trunk.primary_atoms = 4;
  c.trunk.num_classes = 3;
  c.trunk.pose_atoms = 4;
  c.trunk.decoder_seed = 4;
  c.trunk.decoder_seed_channels = 2;
  c.trunk.decoder_channels = {3, 1};
  c.trunk.decoder_kernels = {3, 8};
  c.trunk.decoder_strides = {2, 1};
  return c;
}

template <class T>
Tensor<T> random_images(Rng& rng, int n, int size) {
  Tensor<T> x({n, 1, size, size});
  for (auto& v : x.data()) v = static_cast<T>(rng.uniform(0.0, 1.0));
  return x;
}

}  // namespace

TEST_CASE("gradmap weighting matches a hand-computed case") {
  // two channels on a 2x2 map: weights are the spatial gradient means
  Tensor<double> act({2, 2, 2}, {1, 2, 3, 4, 0, 1, 0, 2});
  Tensor<double> grad({2, 2, 2}, {4, 0, 0, 0, -8, 0, 0, 0});
  // w0 = 1, w1 = -2: map = A0 - 2 A1 = [[1,0],[3,0]]
  auto map = capsloc::build_gradmap(act, grad);
  CHECK(map.at({0, 0}) == Catch::Approx(1.0));
  CHECK(map.at({0, 1}) == Catch::Approx(0.0));
  CHECK(map.at({1, 0}) == Catch::Approx(3.0));
  CHECK(map.at({1, 1}) == Catch::Approx(0.0));

  // flipping the gradient sign flips the sum, which then clips to zero
  for (auto& v : grad.data()) v = -v;
  auto clipped = capsloc::build_gradmap(act, grad);
  for (double v : clipped.data()) CHECK(v >= 0.0);
  CHECK(clipped.at({0, 0}) == Catch::Approx(0.0));
  CHECK(clipped.at({1, 1}) == Catch::Approx(0.0));
}

TEST_CASE("gradmap center returns exact cell centers and grid means") {
  CapsNetConfig dflt;  // 6x6 grid, centers {20,24,...,40}/64
  auto grid = capsloc::compute_coordinate_grid(dflt);
  REQUIRE(grid.g == 6);

  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 6; ++c) {
      Tensor<double> map({6, 6});
      map.at({r, c}) = 0.7;
      auto [x, y] = capsloc::gradmap_center(map, grid);
      CHECK(x == Catch::Approx((20.0 + 4 * r) / 64.0).margin(1e-12));
      CHECK(y == Catch::Approx((20.0 + 4 * c) / 64.0).margin(1e-12));
    }

  // uniform mass returns the grid mean; on this grid that is 30/64
  Tensor<double> uniform = Tensor<double>::full({6, 6}, 0.25);
  auto [ux, uy] = capsloc::gradmap_center(uniform, grid);
  CHECK(ux == Catch::Approx(30.0 / 64.0).margin(1e-12));
  CHECK(uy == Catch::Approx(30.0 / 64.0).margin(1e-12));

  // a symmetric grid (single conv k32 s32 -> centers {16,48}) averages to 1/2
  CapsNetConfig sym;
  sym.conv1 = {4, 32, 32};
  sym.conv2 = {4, 1, 1};
  sym.primary_kernel = 1;
  sym.primary_stride = 1;
  auto sgrid = capsloc::compute_coordinate_grid(sym);
  REQUIRE(sgrid.g == 2);
  Tensor<double> sflat = Tensor<double>::full({2, 2}, 1.0);
  auto [sx, sy] = capsloc::gradmap_center(sflat, sgrid);
  CHECK(sx == Catch::Approx(0.5).margin(1e-12));
  CHECK(sy == Catch::Approx(0.5).margin(1e-12));

  Tensor<double> zero({6, 6});
  CHECK_THROWS_AS(capsloc::gradmap_center(zero, grid), DegenerateError);
}

TEST_CASE("benchmark variants produce the contracted heads") {
  Rng rng(301);
  ConvBenchmark<float> emb(tiny_benchmark("embedding"), rng);
  ConvBenchmark<float> lgt(tiny_benchmark("logits"), rng);
  auto x = random_images<float>(rng, 2, 16);
  std::vector<int> labels{1, 2};

  auto eo = emb.forward(nullptr, x, &labels, true);
  CHECK(eo.trunk.shape() == capsloc::Shape{2, 8, 2, 2});
  CHECK(eo.scores.shape() == capsloc::Shape{2, 3});
  CHECK(eo.embedding.shape() == capsloc::Shape{2, 3, 4});
  CHECK(eo.recon.shape() == capsloc::Shape{2, 1, 16, 16});
  REQUIRE(eo.total.defined());
  CHECK(eo.total.item() ==
        Catch::Approx(eo.ce.item() + eo.recon_loss.item()).margin(1e-6));
  // scores are the embedding row norms, hence nonnegative
  for (int n = 0; n < 2; ++n)
    for (int k = 0; k < 3; ++k) {
      double n2 = 0;
      for (int a = 0; a < 4; ++a)
        n2 += eo.embedding.at({n, k, a}) * eo.embedding.at({n, k, a});
      CHECK(eo.scores.at({n, k}) >= 0.f);
      CHECK(eo.scores.at({n, k}) == Catch::Approx(std::sqrt(n2)).margin(1e-5));
    }

  auto lo = lgt.forward(nullptr, x, &labels, true);
  CHECK(lo.scores.shape() == capsloc::Shape{2, 3});
  CHECK_FALSE(lo.embedding.defined());
  CHECK_FALSE(lo.recon.defined());
  CHECK(lo.total.item() == Catch::Approx(lo.ce.item()));
}

TEST_CASE("zero weights give uniform class probabilities") {
  Rng rng(307);
  ConvBenchmark<double> net(tiny_benchmark("logits"), rng);
  for (auto& [name, p] : net.named_params())
    for (auto& v : p.data()) v = 0.0;
  auto x = random_images<double>(rng, 3, 16);
  std::vector<int> labels{0, 1, 2};
  auto out = net.forward(nullptr, x, &labels, false);
  for (double v : out.scores.data()) CHECK(v == 0.0);
  CHECK(out.ce.item() == Catch::Approx(std::log(3.0)).margin(1e-12));
}

TEST_CASE("benchmark gradient check on the embedding training loss") {
  Rng rng(311);
  ConvBenchmark<double> net(tiny_benchmark("embedding"), rng);
  for (auto& [name, p] : net.named_params())
    if (p.rank() == 1)
      for (auto& v : p.data()) v = rng.normal() * 0.02;
  Tensor<double> x({2, 1, 16, 16});
  for (auto& v : x.data()) v = rng.uniform(0.0, 1.0);
  std::vector<int> labels{2, 0};
  Rng pick(313);
  auto r = capsloc::grad_check<double>(
      net.named_params(),
      [&](Tape<double>* t) { return net.forward(t, x, &labels, true).total; },
      1e-5, 4, &pick);
  INFO(r.worst << " rel err " << r.max_rel_err << " over " << r.checked);
  CHECK(r.ok(2e-3));
}

TEST_CASE("gradcam coordinates stay in the grid hull and reject junk") {
  Rng rng(317);
  ConvBenchmark<double> net(tiny_benchmark("embedding"), rng);
  const auto& grid = net.grid();
  Tensor<double> img({1, 1, 16, 16});
  for (auto& v : img.data()) v = rng.uniform(0.0, 1.0);
  for (int cls = 0; cls < 3; ++cls) {
    auto [x, y] = capsloc::gradcam_coords(net, img, cls);
    CHECK(x >= grid.centers.front() - 1e-9);
    CHECK(x <= grid.centers.back() + 1e-9);
    CHECK(y >= grid.centers.front() - 1e-9);
    CHECK(y <= grid.centers.back() + 1e-9);
    // repeated extraction is deterministic and does not leak gradient state
    auto [x2, y2] = capsloc::gradcam_coords(net, img, cls);
    CHECK(x == x2);
    CHECK(y == y2);
  }
  for (auto& [name, p] : net.named_params())
    for (double g : p.grad()) CHECK(g == 0.0);

  Tensor<double> zero({1, 1, 16, 16});
  CHECK_THROWS_AS(capsloc::gradcam_coords(net, zero, 0), DegenerateError);
  CHECK_THROWS_AS(capsloc::gradcam_coords(net, img, 5),
                  capsloc::DimensionError);
}

TEST_CASE("benchmark config validates and round trips") {
  ConvBenchmarkConfig c = tiny_benchmark("embedding");
  REQUIRE_NOTHROW(c.validate());
  json j = c;
  auto back = j.get<ConvBenchmarkConfig>();
  CHECK(json(back) == j);

  ConvBenchmarkConfig bad = tiny_benchmark("logits");
  bad.reconstruction = true;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.variant = "mlp";
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(json::parse(R"({"varian": "logits"})")
                      .get<ConvBenchmarkConfig>(),
                  ConfigError);

  // default geometry mirrors the capsule model: same grid, 10x16 head
  ConvBenchmarkConfig dflt;
  REQUIRE_NOTHROW(dflt.validate());
  CHECK(capsloc::compute_coordinate_grid(dflt.trunk).g == 6);
  CHECK(dflt.trunk.num_classes == 10);
  CHECK(dflt.trunk.pose_atoms == 16);
}

TEST_CASE("heuristic predicts the canvas center") {
  auto [x, y] = capsloc::heuristic_coords();
  CHECK(x == 0.5);
  CHECK(y == 0.5);
  // against ground truth (0.3, 0.7) both axes miss by 0.2
  CHECK((std::abs(x - 0.3) + std::abs(y - 0.7)) / 2.0 == Catch::Approx(0.2));
}
