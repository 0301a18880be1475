#include "mmf/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace mmf {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape)
    : storage_(std::make_shared<detail::TensorStorage<T>>()) {
  storage_->data.assign(shape_numel(shape), T(0));
  storage_->shape = std::move(shape);
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> values)
    : storage_(std::make_shared<detail::TensorStorage<T>>()) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  storage_->shape = std::move(shape);
  storage_->data = std::move(values);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::filled(Shape shape, T value) {
  BasicTensor t(std::move(shape));
  std::fill(t.data().begin(), t.data().end(), value);
  return t;
}

template <typename T>
T BasicTensor<T>::item() const {
  if (numel() != 1) throw UsageError("item() on tensor of shape " + shape_str(shape()));
  return (*this)[0];
}

template <typename T>
BasicTensor<T> BasicTensor<T>::clone() const {
  return BasicTensor(shape(), storage_->data);
}

template class BasicTensor<float>;
template class BasicTensor<double>;

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

void Tape::reset_intermediate_grads() {
  for (auto& e : entries_) e.reset();
}

void Tape::run_backward() {
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->backward();
}

template <typename T>
void backward(const BasicTensor<T>& loss, Tape& tape) {
  if (loss.numel() != 1) {
    throw UsageError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  tape.reset_intermediate_grads();
  auto g = loss.storage()->grad_buffer();
  g[0] += T(1);
  tape.run_backward();
}

template void backward<float>(const Tensor&, Tape&);
template void backward<double>(const Tensor64&, Tape&);

}  // namespace mmf
