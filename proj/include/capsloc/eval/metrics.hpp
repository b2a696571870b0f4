#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "capsloc/core/error.hpp"

namespace capsloc {

/// One localized digit: predicted or ground-truth coordinates for a class.
struct CoordPrediction {
  int class_id = 0;
  double x = 0;  // vertical position in [0,1]
  double y = 0;  // horizontal position in [0,1]
};

/// Accumulates mean absolute coordinate error over (sample, digit, axis)
/// terms. Digits are matched by class label; a ground-truth digit with no
/// prediction of its class is excluded from the mean but counted.
struct MaeAccumulator {
  double abs_sum = 0;
  long long terms = 0;
  long long degenerate = 0;

  void add_sample(const std::vector<CoordPrediction>& predictions,
                  const std::vector<CoordPrediction>& truth) {
    for (const auto& t : truth) {
      const CoordPrediction* match = nullptr;
      for (const auto& p : predictions)
        if (p.class_id == t.class_id) {
          match = &p;
          break;
        }
      if (!match) {
        ++degenerate;
        continue;
      }
      abs_sum += std::abs(match->x - t.x) + std::abs(match->y - t.y);
      terms += 2;
    }
  }

  double mae() const {
    if (terms == 0) throw NumericError("no matched coordinates to average");
    return abs_sum / static_cast<double>(terms);
  }
};

inline double coordinate_mae(const std::vector<CoordPrediction>& predictions,
                             const std::vector<CoordPrediction>& truth) {
  MaeAccumulator acc;
  acc.add_sample(predictions, truth);
  return acc.mae();
}

/// Exact-set classification accuracy: the top-k scored classes must equal
/// the ground-truth label set of each sample.
struct AccuracyAccumulator {
  long long correct = 0;
  long long total = 0;

  void add_sample(const std::vector<double>& class_scores,
                  std::vector<int> truth_labels) {
    std::vector<int> order(class_scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = int(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (class_scores[a] != class_scores[b])
        return class_scores[a] > class_scores[b];
      return a < b;
    });
    if (truth_labels.size() > order.size())
      throw DimensionError("more labels than classes");
    order.resize(truth_labels.size());
    std::sort(order.begin(), order.end());
    std::sort(truth_labels.begin(), truth_labels.end());
    ++total;
    if (order == truth_labels) ++correct;
  }

  double accuracy() const {
    if (total == 0) throw NumericError("no samples scored");
    return double(correct) / double(total);
  }
};

}  // namespace capsloc
