#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "capsloc/eval/evaluate.hpp"
#include "capsloc/train.hpp"

namespace capsloc {

/// One test-set measurement during a sweep run.
struct AblationPoint {
  double bias_logit = 0;
  long long epoch = 0;
  double loss = 0;
  double accuracy = 0;
  double mae = 0;
};

struct AblationResult {
  std::vector<AblationPoint> points;

  /// First epoch whose accuracy reaches `threshold`, or -1 if none does.
  long long epochs_to_accuracy(double bias_logit, double threshold) const {
    for (const auto& p : points)
      if (p.bias_logit == bias_logit && p.accuracy >= threshold)
        return p.epoch;
    return -1;
  }

  const AblationPoint& final_point(double bias_logit) const {
    const AblationPoint* last = nullptr;
    for (const auto& p : points)
      if (p.bias_logit == bias_logit) last = &p;
    if (!last) throw ConfigError("no sweep points for that bias logit");
    return *last;
  }
};

/// Trains one capsule model per initial real-class routing logit under an
/// identical seed and budget, measuring accuracy and localization error on
/// the test set after every epoch.
template <class T>
AblationResult ablation_sweep(const json& base_config,
                              const std::vector<double>& bias_logits,
                              const SupervisedSet& train_set,
                              const SupervisedSet& test_set,
                              const TrainOptions& budget,
                              unsigned long long seed, int eval_batch = 100) {
  if (bias_logits.empty()) throw ConfigError("empty sweep value list");
  AblationResult out;
  for (double b : bias_logits) {
    CapsNetConfig cfg;
    if (!base_config.is_null()) from_json(base_config, cfg);
    cfg.bias_logit_real = b;
    EpochHook<T> hook = [&](long long epoch, double loss,
                            ModelBundle<T>& model) {
      EvalResult r = evaluate_model(model, test_set, eval_batch);
      out.points.push_back({b, epoch, loss, r.accuracy, r.mae});
    };
    train_model<T>(ModelKind::kCapsnetBias, json(cfg), train_set, budget,
                   seed, hook);
  }
  return out;
}

inline void write_ablation_csv(const std::filesystem::path& path,
                               const AblationResult& r) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataFormatError("cannot open " + path.string());
  out << "b_real,epoch,loss,accuracy,mae\n";
  char buf[160];
  for (const auto& p : r.points) {
    std::snprintf(buf, sizeof buf, "%.9g,%lld,%.9g,%.9g,%.9g\n",
                  p.bias_logit, p.epoch, p.loss, p.accuracy, p.mae);
    out << buf;
  }
  if (!out) throw DataFormatError("short write to " + path.string());
}

}  // namespace capsloc
