#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "capsloc/core/digest.hpp"
#include "capsloc/data/sampling.hpp"
#include "capsloc/eval/metrics.hpp"
#include "capsloc/model_io.hpp"
#include "capsloc/train.hpp"

namespace capsloc {

/// Localization and classification quality of one model on one set.
/// `accuracy` is NaN for the heuristic, which does not classify.
struct EvalResult {
  double mae = 0;
  double accuracy = 0;
  long long degenerate = 0;
  long long samples = 0;
  long long coord_terms = 0;
};

inline void to_json(json& j, const EvalResult& r) {
  j = json{{"mae", r.mae},
           {"accuracy", std::isfinite(r.accuracy) ? json(r.accuracy) : json()},
           {"degenerate", r.degenerate},
           {"samples", r.samples},
           {"coord_terms", r.coord_terms}};
}

namespace detail {

inline std::vector<CoordPrediction> truth_of(const SupervisedSet& set, int i) {
  std::vector<CoordPrediction> t(set.digits);
  for (int d = 0; d < set.digits; ++d) {
    const std::size_t base = (std::size_t(i) * set.digits + d) * 2;
    t[d] = {int(set.labels[std::size_t(i) * set.digits + d]),
            double(set.centers[base]), double(set.centers[base + 1])};
  }
  return t;
}

inline std::vector<int> labels_of(const SupervisedSet& set, int i) {
  std::vector<int> out(set.digits);
  for (int d = 0; d < set.digits; ++d)
    out[d] = set.labels[std::size_t(i) * set.digits + d];
  return out;
}

}  // namespace detail

/// Weak-supervision evaluation protocol: coordinates are read for each
/// ground-truth class; classification is the top-k class set against the
/// label set. Capsule models run in batches; gradient-map extraction is
/// per image and per class.
template <class T>
EvalResult evaluate_model(ModelBundle<T>& m, const SupervisedSet& data,
                          int batch_size = 100) {
  if (data.count < 1) throw DataFormatError("empty evaluation set");
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  MaeAccumulator mae;
  AccuracyAccumulator acc;
  std::vector<int> ids(data.count);
  for (int i = 0; i < data.count; ++i) ids[i] = i;

  if (m.is_capsnet()) {
    for (std::size_t lo = 0; lo < ids.size(); lo += std::size_t(batch_size)) {
      const std::size_t hi =
          std::min(ids.size(), lo + std::size_t(batch_size));
      auto images = detail::batch_images<T>(data, ids, lo, hi);
      auto fwd = m.caps->forward(nullptr, images, nullptr, false);
      for (std::size_t b = lo; b < hi; ++b) {
        const int n = int(b - lo), i = ids[b];
        std::vector<double> scores(m.num_classes());
        for (int k = 0; k < m.num_classes(); ++k)
          scores[k] = fwd.norms.at({n, k});
        acc.add_sample(scores, detail::labels_of(data, i));
        std::vector<CoordPrediction> preds;
        for (const auto& t : detail::truth_of(data, i))
          preds.push_back({t.class_id, double(fwd.o.at({n, t.class_id, 0})),
                           double(fwd.o.at({n, t.class_id, 1}))});
        mae.add_sample(preds, detail::truth_of(data, i));
      }
    }
  } else if (m.is_benchmark()) {
    for (int i = 0; i < data.count; ++i) {
      auto image = detail::batch_images<T>(data, ids, std::size_t(i),
                                           std::size_t(i) + 1);
      auto fwd = m.bench->forward(nullptr, image, nullptr, false);
      std::vector<double> scores(m.num_classes());
      for (int k = 0; k < m.num_classes(); ++k)
        scores[k] = fwd.scores.at({0, k});
      acc.add_sample(scores, detail::labels_of(data, i));
      mae.add_sample(localize_image(m, image, detail::labels_of(data, i)),
                     detail::truth_of(data, i));
    }
  } else {
    for (int i = 0; i < data.count; ++i) {
      std::vector<CoordPrediction> preds;
      for (int k : detail::labels_of(data, i)) {
        auto [x, y] = heuristic_coords();
        preds.push_back({k, x, y});
      }
      mae.add_sample(preds, detail::truth_of(data, i));
    }
  }

  EvalResult r;
  r.mae = mae.mae();
  r.accuracy = m.kind == ModelKind::kHeuristic
                   ? std::numeric_limits<double>::quiet_NaN()
                   : acc.accuracy();
  r.degenerate = mae.degenerate;
  r.samples = data.count;
  r.coord_terms = mae.terms;
  return r;
}

/// Per-model, per-dataset localization summary plus the run metadata needed
/// to regenerate it.
struct LocalizationReport {
  std::string model_kind;
  std::string config_hash;
  long long epochs = 0;
  unsigned long long seed = 0;
  int dataset_digits = 0;
  long long dataset_count = 0;
  EvalResult result;

  json to_json() const {
    return json{{"model_kind", model_kind},
                {"config_hash", config_hash},
                {"epochs", epochs},
                {"seed", seed},
                {"dataset", json{{"digits", dataset_digits},
                                 {"count", dataset_count}}},
                {"result", result}};
  }
};

inline std::string config_hash(const json& config) {
  return sha256_hex(config.dump());
}

/// report.json index plus a one-row metrics.csv, regenerable bit-identically.
inline void write_report_dir(const std::filesystem::path& dir,
                             const LocalizationReport& rep) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "report.json", std::ios::binary);
    if (!out) throw DataFormatError("cannot open " + dir.string());
    out << rep.to_json().dump(2) << "\n";
  }
  std::ofstream csv(dir / "metrics.csv", std::ios::binary);
  if (!csv) throw DataFormatError("cannot open " + dir.string());
  csv << "model,digits,samples,accuracy,mae,degenerate\n";
  char buf[224];
  std::snprintf(buf, sizeof buf, "%s,%d,%lld,%.9g,%.9g,%lld\n",
                rep.model_kind.c_str(), rep.dataset_digits,
                rep.result.samples, rep.result.accuracy, rep.result.mae,
                rep.result.degenerate);
  csv << buf;
  if (!csv) throw DataFormatError("short write to " + dir.string());
}

}  // namespace capsloc
