#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "capsloc/core/random.hpp"
#include "capsloc/core/tape.hpp"
#include "capsloc/core/tensor.hpp"

namespace capsloc {

struct GradCheckResult {
  double max_rel_err = 0.0;
  double mean_rel_err = 0.0;
  std::size_t checked = 0;
  std::string worst;

  bool ok(double tol) const { return checked > 0 && max_rel_err < tol; }
};

/// Compares tape gradients against central differences of `f`, which must
/// rebuild the graph from the given parameters and return a scalar loss.
/// rel = |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
///
/// When a parameter has more elements than `max_per_param`, a random subset
/// of its coordinates is checked.
template <class T>
GradCheckResult grad_check(
    std::vector<std::pair<std::string, Tensor<T>>> params,
    const std::function<Tensor<T>(Tape<T>*)>& f, T eps = T(1e-5),
    std::size_t max_per_param = 0, Rng* rng = nullptr) {
  for (auto& [name, p] : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  Tape<T> tape;
  Tensor<T> loss = f(&tape);
  tape.backward(loss);

  GradCheckResult res;
  double sum_rel = 0.0;
  for (auto& [name, p] : params) {
    std::vector<std::size_t> idx;
    if (max_per_param > 0 && p.size() > max_per_param && rng) {
      for (std::size_t i = 0; i < max_per_param; ++i)
        idx.push_back(static_cast<std::size_t>(
            rng->uniform_int(0, static_cast<long long>(p.size()) - 1)));
    } else {
      idx.resize(p.size());
      for (std::size_t i = 0; i < p.size(); ++i) idx[i] = i;
    }
    for (std::size_t i : idx) {
      const T saved = p.raw()[i];
      const T h = eps * std::max(T(1), std::abs(saved));
      p.raw()[i] = saved + h;
      const double lp = static_cast<double>(f(nullptr).item());
      p.raw()[i] = saved - h;
      const double lm = static_cast<double>(f(nullptr).item());
      p.raw()[i] = saved;
      const double numeric = (lp - lm) / (2.0 * static_cast<double>(h));
      const double analytic = static_cast<double>(p.grad()[i]);
      const double rel = std::abs(analytic - numeric) /
                         std::max(1e-8, std::abs(analytic) + std::abs(numeric));
      sum_rel += rel;
      ++res.checked;
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  if (res.checked) res.mean_rel_err = sum_rel / static_cast<double>(res.checked);
  return res;
}

}  // namespace capsloc
