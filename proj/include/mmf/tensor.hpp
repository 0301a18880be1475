#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mmf/errors.hpp"

namespace mmf {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

template <typename T>
struct TensorStorage {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a gradient flows in
  bool requires_grad = false;

  std::span<T> grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

}  // namespace detail

/// Dense row-major tensor.
///
/// A BasicTensor is a shared handle: copies alias the same storage, which is
/// what lets the tape write gradients back into parameters. Use clone() for
/// an independent copy. Zero-sized dimensions are allowed so that empty
/// operands of concat are representable.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() : BasicTensor(Shape{0}) {}
  explicit BasicTensor(Shape shape);
  BasicTensor(Shape shape, std::vector<T> values);

  static BasicTensor filled(Shape shape, T value);
  static BasicTensor scalar(T value) { return BasicTensor(Shape{1}, {value}); }
  static BasicTensor vector(std::vector<T> values) {
    const std::size_t n = values.size();
    return BasicTensor(Shape{n}, std::move(values));
  }

  const Shape& shape() const { return storage_->shape; }
  std::size_t rank() const { return storage_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return storage_->shape.at(axis); }
  std::size_t numel() const { return storage_->data.size(); }

  std::span<T> data() { return storage_->data; }
  std::span<const T> data() const { return storage_->data; }
  T* ptr() { return storage_->data.data(); }
  const T* ptr() const { return storage_->data.data(); }

  T& operator[](std::size_t i) { return storage_->data[i]; }
  const T& operator[](std::size_t i) const { return storage_->data[i]; }
  T item() const;

  bool requires_grad() const { return storage_->requires_grad; }
  BasicTensor& set_requires_grad(bool on) {
    storage_->requires_grad = on;
    return *this;
  }
  bool has_grad() const { return !storage_->grad.empty(); }
  std::span<const T> grad() const { return storage_->grad; }
  std::span<T> grad_mut() { return storage_->grad_buffer(); }
  void zero_grad() { storage_->grad.clear(); }

  /// Deep copy of shape and data; the copy is a fresh leaf without gradient.
  BasicTensor clone() const;

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<U>((*this)[i]);
    BasicTensor<U> t(shape(), std::move(out));
    t.set_requires_grad(requires_grad());
    return t;
  }

  bool same_storage(const BasicTensor& other) const { return storage_ == other.storage_; }
  const std::shared_ptr<detail::TensorStorage<T>>& storage() const { return storage_; }

 private:
  std::shared_ptr<detail::TensorStorage<T>> storage_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

/// Ordered record of differentiable operations.
///
/// Entries are appended as ops run, so inputs always precede the ops that
/// consume them. backward() walks the entries once in reverse.
class Tape {
 public:
  struct Entry {
    std::function<void()> backward;
    std::function<void()> reset;  // clears the op output's gradient
  };

  void record(Entry entry) { entries_.push_back(std::move(entry)); }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  void clear() { entries_.clear(); }

  void reset_intermediate_grads();
  void run_backward();

 private:
  std::vector<Entry> entries_;
};

/// Returns the tape ops on this thread record into, or nullptr.
Tape* active_tape();

/// Makes a tape active on the current thread for its lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Suspends recording on the current thread (inference, finite differences).
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

/// Populates leaf gradients with d(loss)/d(leaf). Leaf gradients accumulate
/// across calls; intermediate gradients are reset each time.
template <typename T>
void backward(const BasicTensor<T>& loss, Tape& tape);

}  // namespace mmf
