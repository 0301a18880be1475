#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mmf/errors.hpp"
#include "mmf/rng.hpp"
#include "mmf/tensor.hpp"

namespace mmf {

/// Optimizer group a parameter belongs to; each group has its own rate.
enum class ParamGroup { kEncoder, kFusion };

template <typename T>
struct Parameter {
  std::string name;
  BasicTensor<T> tensor;
  ParamGroup group = ParamGroup::kEncoder;
};

/// Ordered, named collection of trainable tensors.
template <typename T>
class ParameterSet {
 public:
  BasicTensor<T>& add(std::string name, BasicTensor<T> tensor, ParamGroup group) {
    for (const auto& p : params_) {
      if (p.name == name) throw ConfigError("duplicate parameter " + name);
    }
    tensor.set_requires_grad(true);
    params_.push_back({std::move(name), std::move(tensor), group});
    return params_.back().tensor;
  }

  BasicTensor<T>& get(std::string_view name) {
    for (auto& p : params_)
      if (p.name == name) return p.tensor;
    throw ConfigError("unknown parameter " + std::string(name));
  }
  const BasicTensor<T>& get(std::string_view name) const {
    for (const auto& p : params_)
      if (p.name == name) return p.tensor;
    throw ConfigError("unknown parameter " + std::string(name));
  }

  std::vector<Parameter<T>>& items() { return params_; }
  const std::vector<Parameter<T>>& items() const { return params_; }
  std::size_t size() const { return params_.size(); }

  std::size_t numel() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  /// Copies values (not handles) from a set with identical names and shapes.
  template <typename U>
  void assign_from(const ParameterSet<U>& other) {
    if (other.size() != params_.size()) throw DimensionError("parameter count mismatch");
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const auto& src = other.items()[i];
      auto& dst = params_[i];
      if (src.name != dst.name || src.tensor.shape() != dst.tensor.shape()) {
        throw DimensionError("parameter " + dst.name + " " + shape_str(dst.tensor.shape()) + " vs " + src.name +
                             " " + shape_str(src.tensor.shape()));
      }
      for (std::size_t k = 0; k < dst.tensor.numel(); ++k) dst.tensor[k] = static_cast<T>(src.tensor[k]);
    }
  }

 private:
  std::vector<Parameter<T>> params_;
};

/// Xavier-uniform initializer: U(-b, b) with b = sqrt(6 / (fan_in + fan_out)).
template <typename T>
BasicTensor<T> xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& engine) {
  BasicTensor<T> t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : t.data()) v = static_cast<T>(uniform(engine, -bound, bound));
  return t;
}

}  // namespace mmf
