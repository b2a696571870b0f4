#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "capsloc/core/error.hpp"

namespace capsloc {

using json = nlohmann::json;

/// Rejects keys that no field consumes, so typos in config files fail loudly
/// instead of silently running defaults.
inline void check_known_keys(const json& j, const std::string& where,
                             const std::vector<std::string>& known) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const auto& k : known) ok = ok || (it.key() == k);
    if (!ok) throw ConfigError(where + ": unknown key \"" + it.key() + "\"");
  }
}

struct ConvLayerSpec {
  int filters = 0;
  int kernel = 0;
  int stride = 1;
};

inline void to_json(json& j, const ConvLayerSpec& s) {
  j = json{{"filters", s.filters}, {"kernel", s.kernel}, {"stride", s.stride}};
}

inline void from_json(const json& j, ConvLayerSpec& s) {
  check_known_keys(j, "conv layer", {"filters", "kernel", "stride"});
  s.filters = j.value("filters", s.filters);
  s.kernel = j.value("kernel", s.kernel);
  s.stride = j.value("stride", s.stride);
}

struct MarginSpec {
  double m_plus = 0.9;
  double m_minus = 0.1;
  double lambda = 0.5;
};

inline void to_json(json& j, const MarginSpec& m) {
  j = json{{"m_plus", m.m_plus}, {"m_minus", m.m_minus}, {"lambda", m.lambda}};
}

inline void from_json(const json& j, MarginSpec& m) {
  check_known_keys(j, "margin", {"m_plus", "m_minus", "lambda"});
  m.m_plus = j.value("m_plus", m.m_plus);
  m.m_minus = j.value("m_minus", m.m_minus);
  m.lambda = j.value("lambda", m.lambda);
}

/// Every architectural and routing hyperparameter. Defaults reproduce the
/// reference 64x64 architecture; desk_scale() shrinks widths for
/// single-core experiments without touching protocol numbers.
struct CapsNetConfig {
  int image_size = 64;
  ConvLayerSpec conv1{256, 9, 2};
  ConvLayerSpec conv2{256, 9, 1};
  int primary_types = 32;
  int primary_kernel = 9;
  int primary_stride = 2;
  int primary_atoms = 8;
  int num_classes = 10;
  int pose_atoms = 16;
  int coord_atoms = 2;
  int routing_iterations = 5;
  double bias_logit_real = -5.0;
  double bias_logit_unknown = 1.0 + std::log(10.0);
  double recon_weight = 0.005;
  MarginSpec margin;
  int decoder_seed = 8;
  int decoder_seed_channels = 16;
  std::vector<int> decoder_channels{64, 32, 16, 1};
  std::vector<int> decoder_kernels{3, 3, 4, 8};
  std::vector<int> decoder_strides{1, 1, 1, 4};
  double learning_rate = 1e-3;

  /// Digit capsules: the real classes plus one "unknown" capsule that soaks
  /// up background couplings. The unknown capsule is the last index.
  int digit_capsules() const { return num_classes + 1; }

  /// Even routing initialization: every logit starts at zero, so couplings
  /// start uniform at 1/(num_classes+1).
  CapsNetConfig& use_even_init() {
    bias_logit_real = 0.0;
    bias_logit_unknown = 0.0;
    return *this;
  }

  /// Reduced-width variant for single-core training runs. Depth, kernel
  /// geometry, routing, losses, and the 64x64 interface stay unchanged.
  static CapsNetConfig desk_scale() {
    CapsNetConfig c;
    c.conv1.filters = 8;
    c.conv2.filters = 12;
    c.primary_types = 8;
    c.decoder_channels = {16, 16, 8, 1};
    return c;
  }

  void validate() const;
};

inline void to_json(json& j, const CapsNetConfig& c) {
  j = json{{"image_size", c.image_size},
           {"conv1", c.conv1},
           {"conv2", c.conv2},
           {"primary_types", c.primary_types},
           {"primary_kernel", c.primary_kernel},
           {"primary_stride", c.primary_stride},
           {"primary_atoms", c.primary_atoms},
           {"num_classes", c.num_classes},
           {"pose_atoms", c.pose_atoms},
           {"coord_atoms", c.coord_atoms},
           {"routing_iterations", c.routing_iterations},
           {"bias_logit_real", c.bias_logit_real},
           {"bias_logit_unknown", c.bias_logit_unknown},
           {"recon_weight", c.recon_weight},
           {"margin", c.margin},
           {"decoder_seed", c.decoder_seed},
           {"decoder_seed_channels", c.decoder_seed_channels},
           {"decoder_channels", c.decoder_channels},
           {"decoder_kernels", c.decoder_kernels},
           {"decoder_strides", c.decoder_strides},
           {"learning_rate", c.learning_rate}};
}

inline void from_json(const json& j, CapsNetConfig& c) {
  check_known_keys(
      j, "model config",
      {"image_size", "conv1", "conv2", "primary_types", "primary_kernel",
       "primary_stride", "primary_atoms", "num_classes", "pose_atoms",
       "coord_atoms", "routing_iterations", "bias_logit_real",
       "bias_logit_unknown", "recon_weight", "margin", "decoder_seed",
       "decoder_seed_channels", "decoder_channels", "decoder_kernels",
       "decoder_strides", "learning_rate"});
  c.image_size = j.value("image_size", c.image_size);
  // nested structs update in place so partial objects keep current values
  if (j.contains("conv1")) from_json(j.at("conv1"), c.conv1);
  if (j.contains("conv2")) from_json(j.at("conv2"), c.conv2);
  c.primary_types = j.value("primary_types", c.primary_types);
  c.primary_kernel = j.value("primary_kernel", c.primary_kernel);
  c.primary_stride = j.value("primary_stride", c.primary_stride);
  c.primary_atoms = j.value("primary_atoms", c.primary_atoms);
  c.num_classes = j.value("num_classes", c.num_classes);
  c.pose_atoms = j.value("pose_atoms", c.pose_atoms);
  c.coord_atoms = j.value("coord_atoms", c.coord_atoms);
  c.routing_iterations = j.value("routing_iterations", c.routing_iterations);
  c.bias_logit_real = j.value("bias_logit_real", c.bias_logit_real);
  c.bias_logit_unknown = j.value("bias_logit_unknown", c.bias_logit_unknown);
  c.recon_weight = j.value("recon_weight", c.recon_weight);
  if (j.contains("margin")) from_json(j.at("margin"), c.margin);
  c.decoder_seed = j.value("decoder_seed", c.decoder_seed);
  c.decoder_seed_channels = j.value("decoder_seed_channels", c.decoder_seed_channels);
  c.decoder_channels = j.value("decoder_channels", c.decoder_channels);
  c.decoder_kernels = j.value("decoder_kernels", c.decoder_kernels);
  c.decoder_strides = j.value("decoder_strides", c.decoder_strides);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
}

inline void CapsNetConfig::validate() const {
  if (image_size <= 0) throw ConfigError("image_size must be positive");
  for (const auto* l : {&conv1, &conv2})
    if (l->filters <= 0 || l->kernel <= 0 || l->stride <= 0)
      throw ConfigError("conv layers need positive filters/kernel/stride");
  if (primary_types <= 0 || primary_kernel <= 0 || primary_stride <= 0 ||
      primary_atoms <= 0)
    throw ConfigError("primary capsule layer needs positive sizes");
  if (num_classes <= 0) throw ConfigError("num_classes must be positive");
  if (pose_atoms <= 0) throw ConfigError("pose_atoms must be positive");
  if (coord_atoms != 2)
    throw ConfigError("coordinate derivation is defined for 2 coordinate atoms");
  if (routing_iterations < 1)
    throw ConfigError("routing_iterations must be at least 1");
  if (recon_weight < 0) throw ConfigError("recon_weight must be nonnegative");
  if (margin.m_plus <= margin.m_minus)
    throw ConfigError("margin requires m_plus > m_minus");
  if (decoder_seed <= 0 || decoder_seed_channels <= 0)
    throw ConfigError("decoder seed must be positive");
  if (decoder_channels.size() != decoder_kernels.size() ||
      decoder_channels.size() != decoder_strides.size() ||
      decoder_channels.empty())
    throw ConfigError("decoder channels/kernels/strides must align");
  if (decoder_channels.back() != 1)
    throw ConfigError("decoder must end in a single image channel");
  int sz = decoder_seed;
  for (std::size_t i = 0; i < decoder_kernels.size(); ++i) {
    if (decoder_kernels[i] <= 0 || decoder_strides[i] <= 0 ||
        decoder_channels[i] <= 0)
      throw ConfigError("decoder layers need positive sizes");
    sz = (sz - 1) * decoder_strides[i] + decoder_kernels[i];
  }
  if (sz != image_size)
    throw ConfigError("decoder produces " + std::to_string(sz) + "x" +
                      std::to_string(sz) + ", expected " +
                      std::to_string(image_size));
  if (learning_rate < 0) throw ConfigError("learning_rate must be nonnegative");
}

}  // namespace capsloc
