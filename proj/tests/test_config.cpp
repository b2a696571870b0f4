#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "capsloc/config.hpp"

using capsloc::CapsNetConfig;
using capsloc::ConfigError;
using capsloc::json;

TEST_CASE("default config validates and matches the reference architecture") {
  CapsNetConfig c;
  REQUIRE_NOTHROW(c.validate());
  CHECK(c.image_size == 64);
  CHECK(c.conv1.filters == 256);
  CHECK(c.conv1.kernel == 9);
  CHECK(c.conv1.stride == 2);
  CHECK(c.conv2.stride == 1);
  CHECK(c.primary_types == 32);
  CHECK(c.primary_atoms == 8);
  CHECK(c.num_classes == 10);
  CHECK(c.digit_capsules() == 11);
  CHECK(c.pose_atoms == 16);
  CHECK(c.coord_atoms == 2);
  CHECK(c.routing_iterations == 5);
  CHECK(c.bias_logit_real == -5.0);
  CHECK(c.bias_logit_unknown == Catch::Approx(1.0 + std::log(10.0)));
  CHECK(c.recon_weight == 0.005);
  CHECK(c.margin.m_plus == 0.9);
  CHECK(c.margin.m_minus == 0.1);
  CHECK(c.margin.lambda == 0.5);
  CHECK(c.learning_rate == 1e-3);
}

TEST_CASE("even init zeroes both bias logits") {
  CapsNetConfig c;
  c.use_even_init();
  CHECK(c.bias_logit_real == 0.0);
  CHECK(c.bias_logit_unknown == 0.0);
  REQUIRE_NOTHROW(c.validate());
}

TEST_CASE("desk-scale config keeps geometry and protocol, shrinks widths") {
  CapsNetConfig d = CapsNetConfig::desk_scale();
  REQUIRE_NOTHROW(d.validate());
  CapsNetConfig full;
  CHECK(d.image_size == full.image_size);
  CHECK(d.conv1.kernel == full.conv1.kernel);
  CHECK(d.conv1.stride == full.conv1.stride);
  CHECK(d.conv2.kernel == full.conv2.kernel);
  CHECK(d.primary_kernel == full.primary_kernel);
  CHECK(d.primary_stride == full.primary_stride);
  CHECK(d.routing_iterations == full.routing_iterations);
  CHECK(d.bias_logit_real == full.bias_logit_real);
  CHECK(d.recon_weight == full.recon_weight);
  CHECK(d.conv1.filters < full.conv1.filters);
  CHECK(d.primary_types < full.primary_types);
}

TEST_CASE("config survives a JSON round trip") {
  CapsNetConfig c = CapsNetConfig::desk_scale();
  c.routing_iterations = 3;
  c.margin.lambda = 0.25;
  c.decoder_kernels = {3, 3, 4, 8};
  json j = c;
  auto back = j.get<CapsNetConfig>();
  json j2 = back;
  CHECK(j == j2);
  CHECK(back.routing_iterations == 3);
  CHECK(back.margin.lambda == 0.25);
  CHECK(back.conv1.filters == c.conv1.filters);
}

TEST_CASE("partial JSON keeps defaults for missing keys") {
  json j = json::parse(R"({"routing_iterations": 2, "conv1": {"filters": 4}})");
  auto c = j.get<CapsNetConfig>();
  CHECK(c.routing_iterations == 2);
  CHECK(c.conv1.filters == 4);
  CHECK(c.conv1.kernel == 9);
  CHECK(c.conv2.filters == 256);
  CHECK(c.pose_atoms == 16);
}

TEST_CASE("unknown keys are rejected at every level") {
  CHECK_THROWS_AS(json::parse(R"({"routing_iters": 2})").get<CapsNetConfig>(),
                  ConfigError);
  CHECK_THROWS_AS(
      json::parse(R"({"conv1": {"filtres": 4}})").get<CapsNetConfig>(),
      ConfigError);
  CHECK_THROWS_AS(
      json::parse(R"({"margin": {"m_plus": 0.9, "slack": 1}})").get<CapsNetConfig>(),
      ConfigError);
  CHECK_THROWS_AS(json::parse("[1,2]").get<CapsNetConfig>(), ConfigError);
}

TEST_CASE("validate rejects inconsistent settings") {
  auto broken = [](auto mutate) {
    CapsNetConfig c;
    mutate(c);
    return c;
  };
  CHECK_THROWS_AS(broken([](CapsNetConfig& c) { c.image_size = 0; }).validate(),
                  ConfigError);
  CHECK_THROWS_AS(
      broken([](CapsNetConfig& c) { c.conv1.kernel = -1; }).validate(),
      ConfigError);
  CHECK_THROWS_AS(
      broken([](CapsNetConfig& c) { c.coord_atoms = 3; }).validate(),
      ConfigError);
  CHECK_THROWS_AS(
      broken([](CapsNetConfig& c) { c.routing_iterations = 0; }).validate(),
      ConfigError);
  CHECK_THROWS_AS(
      broken([](CapsNetConfig& c) { c.margin.m_minus = 0.95; }).validate(),
      ConfigError);
  CHECK_THROWS_AS(
      broken([](CapsNetConfig& c) { c.decoder_strides = {1, 1, 1}; }).validate(),
      ConfigError);
  // decoder chain must land exactly on the image size
  CHECK_THROWS_AS(
      broken([](CapsNetConfig& c) { c.decoder_kernels = {3, 3, 4, 9}; }).validate(),
      ConfigError);
  CHECK_THROWS_AS(
      broken([](CapsNetConfig& c) { c.decoder_channels = {64, 32, 16, 2}; }).validate(),
      ConfigError);
  CHECK_THROWS_AS(
      broken([](CapsNetConfig& c) { c.learning_rate = -1e-3; }).validate(),
      ConfigError);
}
