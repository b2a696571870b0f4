#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "capsloc/core/error.hpp"

namespace capsloc {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) {
    if (d < 0) throw DimensionError("negative dimension in shape");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

/// Dense row-major tensor. Copies are shallow: handles share both the values
/// and the autograd state (gradient buffer plus requires-grad flag), which is
/// what lets an op mutate the gradient of the same parameter the caller holds.
///
/// The gradient buffer is allocated lazily (zero-filled) on first touch and
/// accumulates across backward calls; whoever owns the parameters zeroes it
/// between optimization steps.
template <class T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<T>>(shape_numel(shape_), T(0))),
        ag_(std::make_shared<Autograd>()) {}

  Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)) {
    if (values.size() != shape_numel(shape_))
      throw DimensionError("data length " + std::to_string(values.size()) +
                           " does not match shape " + shape_str(shape_));
    data_ = std::make_shared<std::vector<T>>(std::move(values));
    ag_ = std::make_shared<Autograd>();
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, T value) {
    Tensor t(std::move(shape));
    std::fill(t.data_->begin(), t.data_->end(), value);
    return t;
  }

  static Tensor scalar(T value) { return Tensor({1}, {value}); }

  bool defined() const { return static_cast<bool>(data_); }
  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::size_t size() const { return data_ ? data_->size() : 0; }

  int dim(int axis) const {
    if (axis < 0) axis += rank();
    if (axis < 0 || axis >= rank())
      throw DimensionError("axis " + std::to_string(axis) +
                           " out of range for shape " + shape_str(shape_));
    return shape_[static_cast<std::size_t>(axis)];
  }

  std::span<T> data() { return {data_->data(), data_->size()}; }
  std::span<const T> data() const { return {data_->data(), data_->size()}; }
  T* raw() { return data_->data(); }
  const T* raw() const { return data_->data(); }

  bool requires_grad() const { return ag_ && ag_->wants_grad; }

  Tensor& set_requires_grad(bool b = true) {
    ag_->wants_grad = b;
    if (b) ensure_grad();
    return *this;
  }

  bool has_grad() const { return ag_ && !ag_->grad.empty(); }

  /// Gradient buffer, allocated zero-filled on first access.
  std::span<T> grad() {
    ensure_grad();
    return {ag_->grad.data(), ag_->grad.size()};
  }

  std::span<const T> grad() const {
    if (!has_grad()) throw DimensionError("gradient not allocated");
    return {ag_->grad.data(), ag_->grad.size()};
  }

  void zero_grad() {
    if (has_grad()) std::fill(ag_->grad.begin(), ag_->grad.end(), T(0));
  }

  /// Value of a single-element tensor.
  T item() const {
    if (size() != 1)
      throw DimensionError("item() on tensor of shape " + shape_str(shape_));
    return (*data_)[0];
  }

  T& at(std::initializer_list<int> idx) { return (*data_)[flat_index(idx)]; }
  T at(std::initializer_list<int> idx) const { return (*data_)[flat_index(idx)]; }

  /// Stride (in elements) of one step along `axis`.
  std::size_t stride(int axis) const {
    if (axis < 0) axis += rank();
    std::size_t s = 1;
    for (int a = rank() - 1; a > axis; --a)
      s *= static_cast<std::size_t>(shape_[static_cast<std::size_t>(a)]);
    return s;
  }

  /// Deep copy of values; autograd state is not carried over.
  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = std::make_shared<std::vector<T>>(*data_);
    t.ag_ = std::make_shared<Autograd>();
    return t;
  }

  /// Same storage and autograd state, new shape with equal element count.
  Tensor reshaped(Shape shape) const {
    if (shape_numel(shape) != size())
      throw DimensionError("cannot reshape " + shape_str(shape_) + " to " +
                           shape_str(shape));
    Tensor t = *this;
    t.shape_ = std::move(shape);
    return t;
  }

  /// Same storage, but with its own fresh autograd state.
  Tensor detached() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = data_;
    t.ag_ = std::make_shared<Autograd>();
    return t;
  }

  bool all_finite() const {
    for (T v : *data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  void assert_finite(const char* what) const {
    if (!all_finite()) throw NumericError(std::string(what) + ": non-finite value");
  }

  /// True when both handles point at the same storage.
  bool shares_storage(const Tensor& other) const { return data_ == other.data_; }

 private:
  struct Autograd {
    std::vector<T> grad;
    bool wants_grad = false;
  };

  void ensure_grad() {
    if (ag_->grad.empty()) ag_->grad.assign(size(), T(0));
  }

  std::size_t flat_index(std::initializer_list<int> idx) const {
    if (static_cast<int>(idx.size()) != rank())
      throw DimensionError("index rank mismatch for shape " + shape_str(shape_));
    std::size_t flat = 0;
    int a = 0;
    for (int i : idx) {
      int d = shape_[static_cast<std::size_t>(a)];
      if (i < 0 || i >= d)
        throw DimensionError("index out of range for shape " + shape_str(shape_));
      flat = flat * static_cast<std::size_t>(d) + static_cast<std::size_t>(i);
      ++a;
    }
    return flat;
  }

  Shape shape_;
  std::shared_ptr<std::vector<T>> data_;
  std::shared_ptr<Autograd> ag_;
};

}  // namespace capsloc
