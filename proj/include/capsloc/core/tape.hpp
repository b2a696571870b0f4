#pragma once

#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "capsloc/core/error.hpp"
#include "capsloc/core/tensor.hpp"

namespace capsloc {

/// Record of executed differentiable operations, replayed in reverse to run
/// the chain rule. Confined to one training worker; ops append entries in
/// execution order.
///
/// Each entry's closure reads the gradient of the op's output and adds the
/// local vector-Jacobian product into the gradients of the op's inputs.
/// Gradients accumulate, so one backward() per recorded graph: call clear()
/// (or use a fresh tape) before recording the next step.
template <class T>
class Tape {
 public:
  void record(const char* op, std::function<void()> backward_fn) {
    entries_.push_back({op, std::move(backward_fn)});
  }

  /// Seeds d(loss)/d(loss) = 1 and replays all entries in reverse order.
  void backward(Tensor<T>& loss) {
    if (loss.size() != 1)
      throw DimensionError("backward expects a scalar loss, got shape " +
                           shape_str(loss.shape()));
    if (replayed_)
      throw NumericError("tape already replayed; clear() before reusing");
    replayed_ = true;
    loss.grad()[0] += T(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->fn();
  }

  void clear() {
    entries_.clear();
    replayed_ = false;
  }

  std::size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    const char* op;
    std::function<void()> fn;
  };
  std::vector<Entry> entries_;
  bool replayed_ = false;
};

/// True when the op must be recorded: a tape is present and some input
/// carries gradient.
template <class T, class... Ts>
inline bool taped(Tape<T>* tape, const Ts&... inputs) {
  return tape != nullptr && (... || inputs.requires_grad());
}

}  // namespace capsloc
