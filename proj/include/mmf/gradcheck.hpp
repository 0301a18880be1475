#pragma once

#include <functional>
#include <vector>

#include "mmf/tensor.hpp"

namespace mmf {

struct GradcheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  std::size_t elements_checked = 0;
};

/// Compares reverse-mode gradients of a scalar function against central
/// differences (f(x+h) - f(x-h)) / 2h evaluated in 64-bit precision.
///
/// The error per element is |analytic - numeric| / max(1e-8, |analytic| + |numeric|);
/// the maximum over all elements of all inputs is returned. `f` must be a pure
/// function of the current values of `inputs` (dropout masks keyed, not drawn).
GradcheckResult gradcheck(const std::function<Tensor64()>& f, std::vector<Tensor64> inputs, double step);

/// Single-input convenience form.
double gradcheck(const std::function<Tensor64(const Tensor64&)>& f, const Tensor64& x, double step);

}  // namespace mmf
