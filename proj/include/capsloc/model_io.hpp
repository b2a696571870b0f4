#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "capsloc/baselines/convnet.hpp"
#include "capsloc/baselines/gradcam.hpp"
#include "capsloc/baselines/heuristic.hpp"
#include "capsloc/capsnet.hpp"
#include "capsloc/checkpoint.hpp"
#include "capsloc/config.hpp"
#include "capsloc/core/error.hpp"
#include "capsloc/core/random.hpp"
#include "capsloc/eval/metrics.hpp"
#include "capsloc/optimizer.hpp"

namespace capsloc {

enum class ModelKind {
  kCapsnetBias,
  kCapsnetEven,
  kConvEmbedding,
  kConvLogits,
  kHeuristic,
};

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "capsnet-bias") return ModelKind::kCapsnetBias;
  if (s == "capsnet-even") return ModelKind::kCapsnetEven;
  if (s == "conv-embedding") return ModelKind::kConvEmbedding;
  if (s == "conv-logits") return ModelKind::kConvLogits;
  if (s == "heuristic") return ModelKind::kHeuristic;
  throw ConfigError("unknown model kind \"" + s +
                    "\" (capsnet-bias, capsnet-even, conv-embedding, "
                    "conv-logits, heuristic)");
}

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::kCapsnetBias: return "capsnet-bias";
    case ModelKind::kCapsnetEven: return "capsnet-even";
    case ModelKind::kConvEmbedding: return "conv-embedding";
    case ModelKind::kConvLogits: return "conv-logits";
    case ModelKind::kHeuristic: return "heuristic";
  }
  throw ConfigError("invalid model kind value");
}

/// One model of any kind behind a uniform surface for training, evaluation,
/// and checkpointing. The kind is authoritative over the config: it forces
/// even routing logits and the benchmark variant so a checkpoint can never
/// disagree with its own manifest.
template <class T>
struct ModelBundle {
  ModelKind kind = ModelKind::kHeuristic;
  std::unique_ptr<CapsNet<T>> caps;
  std::unique_ptr<ConvBenchmark<T>> bench;

  bool is_capsnet() const { return caps != nullptr; }
  bool is_benchmark() const { return bench != nullptr; }
  bool trainable() const { return kind != ModelKind::kHeuristic; }

  json config_json() const {
    if (is_capsnet()) return json(caps->config());
    if (is_benchmark()) return json(bench->config());
    return json::object();
  }

  std::vector<std::pair<std::string, Tensor<T>>> named_params() {
    if (is_capsnet()) return caps->named_params();
    if (is_benchmark()) return bench->named_params();
    return {};
  }

  int num_classes() const {
    if (is_capsnet()) return caps->config().num_classes;
    if (is_benchmark()) return bench->config().trunk.num_classes;
    return 10;
  }

  int image_size() const {
    if (is_capsnet()) return caps->config().image_size;
    if (is_benchmark()) return bench->config().trunk.image_size;
    return 64;
  }

  double learning_rate() const {
    if (is_capsnet()) return caps->config().learning_rate;
    if (is_benchmark()) return bench->config().trunk.learning_rate;
    throw ConfigError("heuristic model has no learning rate");
  }
};

/// Build a freshly initialized model. `config` holds a CapsNetConfig for the
/// capsule kinds or a ConvBenchmarkConfig for the benchmark kinds; an empty
/// object gives the defaults.
template <class T>
ModelBundle<T> make_model(ModelKind kind, const json& config, Rng& rng) {
  ModelBundle<T> m;
  m.kind = kind;
  switch (kind) {
    case ModelKind::kCapsnetBias:
    case ModelKind::kCapsnetEven: {
      CapsNetConfig cfg;
      if (!config.is_null()) from_json(config, cfg);
      if (kind == ModelKind::kCapsnetEven) cfg.use_even_init();
      m.caps = std::make_unique<CapsNet<T>>(cfg, rng);
      break;
    }
    case ModelKind::kConvEmbedding:
    case ModelKind::kConvLogits: {
      ConvBenchmarkConfig cfg;
      if (!config.is_null()) from_json(config, cfg);
      cfg.variant =
          kind == ModelKind::kConvEmbedding ? "embedding" : "logits";
      if (!cfg.is_embedding()) cfg.reconstruction = false;
      m.bench = std::make_unique<ConvBenchmark<T>>(cfg, rng);
      break;
    }
    case ModelKind::kHeuristic:
      break;
  }
  return m;
}

/// Snapshot parameters (plus optimizer moments when given) into a checkpoint.
template <class T>
Checkpoint make_checkpoint(ModelBundle<T>& m, Adam<T>* opt, long long epoch,
                           const std::string& rng_state, json extra) {
  if (!m.trainable())
    throw ConfigError("the heuristic model has no state to checkpoint");
  Checkpoint ck;
  ck.model_kind = to_string(m.kind);
  ck.config = m.config_json();
  ck.epoch = epoch;
  ck.rng_state = rng_state;
  ck.extra = std::move(extra);
  auto push = [&ck](const std::string& name, const Tensor<T>& t) {
    Tensor<float> f(t.shape());
    for (std::size_t i = 0; i < t.size(); ++i)
      f.raw()[i] = static_cast<float>(t.raw()[i]);
    ck.tensors.emplace_back(name, std::move(f));
  };
  for (auto& [name, p] : m.named_params()) push(name, p);
  if (opt) {
    for (auto& [name, t] : opt->state_tensors()) push(name, t);
    ck.extra["optimizer"] = json{{"step_count", opt->step_count()}};
  }
  return ck;
}

template <class T>
void copy_checkpoint_tensor(const Checkpoint& ck, const std::string& name,
                            Tensor<T>& dst) {
  const Tensor<float>& src = ck.require(name);
  if (src.shape() != dst.shape())
    throw DataFormatError("checkpoint tensor " + name + " has shape " +
                          shape_str(src.shape()) + ", model expects " +
                          shape_str(dst.shape()));
  for (std::size_t i = 0; i < dst.size(); ++i)
    dst.raw()[i] = static_cast<T>(src.raw()[i]);
}

/// Rebuild the model a checkpoint describes and load its parameters.
template <class T>
ModelBundle<T> model_from_checkpoint(const Checkpoint& ck) {
  ModelKind kind = parse_model_kind(ck.model_kind);
  if (kind == ModelKind::kHeuristic)
    throw DataFormatError("checkpoint claims the stateless heuristic model");
  Rng scratch(0);
  ModelBundle<T> m = make_model<T>(kind, ck.config, scratch);
  for (auto& [name, p] : m.named_params()) copy_checkpoint_tensor(ck, name, p);
  return m;
}

/// Restore moment buffers and step count saved by make_checkpoint.
template <class T>
void restore_optimizer(Adam<T>& opt, const Checkpoint& ck) {
  for (auto& [name, t] : opt.state_tensors())
    copy_checkpoint_tensor(ck, name, t);
  if (!ck.extra.contains("optimizer"))
    throw DataFormatError("checkpoint carries no optimizer state");
  opt.set_step_count(
      ck.extra.at("optimizer").at("step_count").template get<long long>());
}

/// Coordinates for the requested classes of one [1,1,H,W] image. Classes a
/// model cannot localize (all-zero gradient map) are left out of the result;
/// callers count them as degenerate.
template <class T>
std::vector<CoordPrediction> localize_image(ModelBundle<T>& m,
                                            const Tensor<T>& image,
                                            const std::vector<int>& classes) {
  std::vector<CoordPrediction> out;
  if (m.is_capsnet()) {
    auto fwd = m.caps->forward(nullptr, image, nullptr, false);
    for (int k : classes) {
      if (k < 0 || k >= m.num_classes())
        throw DimensionError("class id out of range");
      out.push_back({k, double(fwd.o.at({0, k, 0})),
                     double(fwd.o.at({0, k, 1}))});
    }
    return out;
  }
  if (m.is_benchmark()) {
    for (int k : classes) {
      try {
        auto [x, y] = gradcam_coords(*m.bench, image, k);
        out.push_back({k, x, y});
      } catch (const DegenerateError&) {
      }
    }
    return out;
  }
  for (int k : classes) {
    auto [x, y] = heuristic_coords();
    out.push_back({k, x, y});
  }
  return out;
}

}  // namespace capsloc
