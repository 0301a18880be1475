#include "mmf/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace mmf {

GradcheckResult gradcheck(const std::function<Tensor64()>& f, std::vector<Tensor64> inputs, double step) {
  std::vector<bool> previous_flags;
  for (auto& x : inputs) {
    previous_flags.push_back(x.requires_grad());
    x.set_requires_grad(true);
    x.zero_grad();
  }

  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    const Tensor64 loss = f();
    backward(loss, tape);
  }
  for (auto& x : inputs) {
    if (x.has_grad()) {
      analytic.emplace_back(x.grad().begin(), x.grad().end());
    } else {
      analytic.emplace_back(x.numel(), 0.0);
    }
    x.zero_grad();
  }

  GradcheckResult result;
  NoGradScope no_grad;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    auto& x = inputs[t];
    for (std::size_t i = 0; i < x.numel(); ++i) {
      const double saved = x[i];
      x[i] = saved + step;
      const double up = f().item();
      x[i] = saved - step;
      const double down = f().item();
      x[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[t][i];
      const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      if (err > result.max_relative_error || result.elements_checked == 0) {
        result.max_relative_error = std::max(result.max_relative_error, err);
        result.worst_tensor = t;
        result.worst_index = i;
      }
      ++result.elements_checked;
    }
  }
  for (std::size_t t = 0; t < inputs.size(); ++t) inputs[t].set_requires_grad(previous_flags[t]);
  return result;
}

double gradcheck(const std::function<Tensor64(const Tensor64&)>& f, const Tensor64& x, double step) {
  return gradcheck([&] { return f(x); }, std::vector<Tensor64>{x}, step).max_relative_error;
}

}  // namespace mmf
