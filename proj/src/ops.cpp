#include "mmf/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mmf/rng.hpp"

namespace mmf {
namespace {

template <typename T>
using StoragePtr = std::shared_ptr<detail::TensorStorage<T>>;

template <typename T>
bool tracks(std::initializer_list<const BasicTensor<T>*> inputs) {
  if (active_tape() == nullptr) return false;
  for (const auto* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

template <typename T, typename Fn>
void record(BasicTensor<T>& out, Fn&& fn) {
  out.set_requires_grad(true);
  StoragePtr<T> o = out.storage();
  active_tape()->record({std::forward<Fn>(fn), [o] { o->grad.clear(); }});
}

template <typename T>
void check_finite([[maybe_unused]] const BasicTensor<T>& t, [[maybe_unused]] const char* op) {
#ifndef NDEBUG
  for (auto v : t.data()) {
    if (std::isnan(v)) throw NumericError(std::string("NaN produced by ") + op);
  }
#endif
}

// C[m x n] += A[m x k] * B[k x n], 64-bit accumulation.
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> acc(n);
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) acc[j] += av * static_cast<double>(brow[j]);
    }
    T* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += static_cast<T>(acc[j]);
  }
}

// C[m x n] += A^T * B with A stored [k x m], B [k x n].
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> acc(n);
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[p * m + i];
      if (av == 0.0) continue;
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) acc[j] += av * static_cast<double>(brow[j]);
    }
    T* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += static_cast<T>(acc[j]);
  }
}

// C[m x n] += A[m x k] * B^T with B stored [n x k].
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  std::vector<T> bt(k * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  gemm_nn(a, bt.data(), c, m, k, n);
}

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                         " differ");
  }
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t length = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.length = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// Linear algebra

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + shape_str(a.shape()) + " by " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  BasicTensor<T> out(Shape{m, n});
  gemm_nn(a.ptr(), b.ptr(), out.ptr(), m, k, n);
  check_finite(out, "matmul");
  if (tracks<T>({&a, &b})) {
    record(out, [as = a.storage(), bs = b.storage(), os = out.storage(), m, k, n] {
      if (os->grad.empty()) return;
      const T* dc = os->grad.data();
      if (as->requires_grad) gemm_nt(dc, bs->data.data(), as->grad_buffer().data(), m, n, k);
      if (bs->requires_grad) gemm_tn(as->data.data(), dc, bs->grad_buffer().data(), k, m, n);
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& a) {
  if (a.rank() != 2) throw DimensionError("transpose: expected rank 2, got " + shape_str(a.shape()));
  const std::size_t r = a.dim(0), c = a.dim(1);
  BasicTensor<T> out(Shape{c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a[i * c + j];
  if (tracks<T>({&a})) {
    record(out, [as = a.storage(), os = out.storage(), r, c] {
      if (os->grad.empty()) return;
      auto g = as->grad_buffer();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += os->grad[j * r + i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  BasicTensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] + b[i];
  check_finite(out, "add");
  if (tracks<T>({&a, &b})) {
    record(out, [as = a.storage(), bs = b.storage(), os = out.storage()] {
      if (os->grad.empty()) return;
      for (auto* s : {as.get(), bs.get()}) {
        if (!s->requires_grad) continue;
        auto g = s->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += os->grad[i];
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  BasicTensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] * b[i];
  check_finite(out, "mul");
  if (tracks<T>({&a, &b})) {
    record(out, [as = a.storage(), bs = b.storage(), os = out.storage()] {
      if (os->grad.empty()) return;
      const auto& dy = os->grad;
      if (as->requires_grad) {
        auto g = as->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[i] * bs->data[i];
      }
      if (bs->requires_grad) {
        auto g = bs->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[i] * as->data[i];
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor) {
  BasicTensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] * factor;
  check_finite(out, "scale");
  if (tracks<T>({&a})) {
    record(out, [as = a.storage(), os = out.storage(), factor] {
      if (os->grad.empty()) return;
      auto g = as->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += os->grad[i] * factor;
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> add_bias(const BasicTensor<T>& x, const BasicTensor<T>& bias) {
  if (x.rank() == 0 || bias.rank() != 1 || x.shape().back() != bias.numel()) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not match last axis of " +
                         shape_str(x.shape()));
  }
  const std::size_t n = bias.numel();
  const std::size_t rows = n == 0 ? 0 : x.numel() / n;
  BasicTensor<T> out(x.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = x[r * n + j] + bias[j];
  check_finite(out, "add_bias");
  if (tracks<T>({&x, &bias})) {
    record(out, [xs = x.storage(), bs = bias.storage(), os = out.storage(), rows, n] {
      if (os->grad.empty()) return;
      const auto& dy = os->grad;
      if (xs->requires_grad) {
        auto g = xs->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[i];
      }
      if (bs->requires_grad) {
        auto g = bs->grad_buffer();
        for (std::size_t j = 0; j < n; ++j) {
          double acc = 0.0;
          for (std::size_t r = 0; r < rows; ++r) acc += dy[r * n + j];
          g[j] += static_cast<T>(acc);
        }
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  BasicTensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
  if (tracks<T>({&x})) {
    record(out, [xs = x.storage(), os = out.storage()] {
      if (os->grad.empty()) return;
      auto g = xs->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (xs->data[i] > T(0)) g[i] += os->grad[i];
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& x) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  BasicTensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const double v = x[i];
    out[i] = static_cast<T>(0.5 * v * (1.0 + std::erf(v * inv_sqrt2)));
  }
  check_finite(out, "gelu");
  if (tracks<T>({&x})) {
    record(out, [xs = x.storage(), os = out.storage()] {
      if (os->grad.empty()) return;
      const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
      auto g = xs->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double v = xs->data[i];
        const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
        g[i] += static_cast<T>(os->grad[i] * (cdf + v * pdf));
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalization

namespace {

// Shared row-normalization kernel. `affine_index(row, col)` selects the
// gamma/beta entry for an element; nullptr gamma means no affine.
template <typename T, typename IndexFn>
BasicTensor<T> normalize_rows(const BasicTensor<T>& x, const BasicTensor<T>* gamma,
                              const BasicTensor<T>* beta, std::size_t rows, std::size_t cols,
                              double epsilon, IndexFn affine_index, const char* name) {
  BasicTensor<T> out(x.shape());
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = x.ptr() + r * cols;
    double mu = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mu += row[j];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(cols);
    const double inv = 1.0 / std::sqrt(var + epsilon);
    inv_std[r] = inv;
    for (std::size_t j = 0; j < cols; ++j) {
      const double h = (row[j] - mu) * inv;
      xhat[r * cols + j] = h;
      if (gamma) {
        const std::size_t a = affine_index(j);
        out[r * cols + j] = static_cast<T>(h * (*gamma)[a] + (*beta)[a]);
      } else {
        out[r * cols + j] = static_cast<T>(h);
      }
    }
  }
  check_finite(out, name);

  const bool want = gamma ? tracks<T>({&x, gamma, beta}) : tracks<T>({&x});
  if (want) {
    StoragePtr<T> gs = gamma ? gamma->storage() : nullptr;
    StoragePtr<T> bs = beta ? beta->storage() : nullptr;
    record(out, [xs = x.storage(), gs, bs, os = out.storage(), xhat = std::move(xhat),
                 inv_std = std::move(inv_std), rows, cols, affine_index] {
      if (os->grad.empty()) return;
      const auto& dy = os->grad;
      if (gs && gs->requires_grad) {
        auto g = gs->grad_buffer();
        for (std::size_t i = 0; i < dy.size(); ++i) g[affine_index(i % cols)] += static_cast<T>(dy[i] * xhat[i]);
      }
      if (bs && bs->requires_grad) {
        auto g = bs->grad_buffer();
        for (std::size_t i = 0; i < dy.size(); ++i) g[affine_index(i % cols)] += dy[i];
      }
      if (!xs->requires_grad) return;
      auto g = xs->grad_buffer();
      std::vector<double> dxhat(cols);
      for (std::size_t r = 0; r < rows; ++r) {
        double mean_d = 0.0, mean_dx = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
          const std::size_t i = r * cols + j;
          const double d = gs ? dy[i] * static_cast<double>(gs->data[affine_index(j)]) : dy[i];
          dxhat[j] = d;
          mean_d += d;
          mean_dx += d * xhat[i];
        }
        mean_d /= static_cast<double>(cols);
        mean_dx /= static_cast<double>(cols);
        for (std::size_t j = 0; j < cols; ++j) {
          const std::size_t i = r * cols + j;
          g[i] += static_cast<T>(inv_std[r] * (dxhat[j] - mean_d - xhat[i] * mean_dx));
        }
      }
    });
  }
  return out;
}

}  // namespace

template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, double epsilon) {
  if (x.rank() == 0 || x.shape().back() == 0) throw DimensionError("layer_norm: empty last axis");
  const std::size_t cols = x.shape().back();
  return normalize_rows<T>(x, nullptr, nullptr, x.numel() / cols, cols, epsilon,
                           [](std::size_t j) { return j; }, "layer_norm");
}

template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                          double epsilon) {
  if (x.rank() == 0 || x.shape().back() == 0) throw DimensionError("layer_norm: empty last axis");
  const std::size_t cols = x.shape().back();
  if (gamma.numel() != cols || beta.numel() != cols) {
    throw DimensionError("layer_norm: gamma/beta " + shape_str(gamma.shape()) + " for input " +
                         shape_str(x.shape()));
  }
  return normalize_rows<T>(x, &gamma, &beta, x.numel() / cols, cols, epsilon,
                           [](std::size_t j) { return j; }, "layer_norm");
}

template <typename T>
BasicTensor<T> channel_layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                                  const BasicTensor<T>& beta, double epsilon) {
  if (x.rank() != 3) throw DimensionError("channel_layer_norm: expected [C x H x W], got " + shape_str(x.shape()));
  const std::size_t channels = x.dim(0);
  const std::size_t plane = x.dim(1) * x.dim(2);
  if (gamma.numel() != channels || beta.numel() != channels || plane == 0) {
    throw DimensionError("channel_layer_norm: gamma/beta " + shape_str(gamma.shape()) + " for input " +
                         shape_str(x.shape()));
  }
  return normalize_rows<T>(x, &gamma, &beta, 1, x.numel(), epsilon,
                           [plane](std::size_t j) { return j / plane; }, "channel_layer_norm");
}

template <typename T>
BasicTensor<T> dropout(const BasicTensor<T>& x, double rate, bool training, const DropoutKey& key) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  const std::uint64_t base = hash_key({key.seed, key.site, key.step, key.sample});
  std::vector<T> mask(x.numel());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = unit_interval(mix64(base ^ mix64(i))) >= rate ? keep_scale : T(0);
  }
  BasicTensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = x[i] * mask[i];
  if (tracks<T>({&x})) {
    record(out, [xs = x.storage(), os = out.storage(), mask = std::move(mask)] {
      if (os->grad.empty()) return;
      auto g = xs->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += os->grad[i] * mask[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for " + shape_str(x.shape()));
  }
  const AxisSplit s = split_axis(x.shape(), axis);
  BasicTensor<T> out(x.shape());
  std::vector<double> e(s.length);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.length * s.inner + in;
      double mx = -INFINITY;
      for (std::size_t l = 0; l < s.length; ++l) mx = std::max(mx, static_cast<double>(x[base + l * s.inner]));
      double total = 0.0;
      for (std::size_t l = 0; l < s.length; ++l) {
        e[l] = std::exp(static_cast<double>(x[base + l * s.inner]) - mx);
        total += e[l];
      }
      for (std::size_t l = 0; l < s.length; ++l) out[base + l * s.inner] = static_cast<T>(e[l] / total);
    }
  }
  check_finite(out, "softmax");
  if (tracks<T>({&x})) {
    record(out, [xs = x.storage(), os = out.storage(), s] {
      if (os->grad.empty()) return;
      auto g = xs->grad_buffer();
      const auto& y = os->data;
      const auto& dy = os->grad;
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t in = 0; in < s.inner; ++in) {
          const std::size_t base = o * s.length * s.inner + in;
          double dot = 0.0;
          for (std::size_t l = 0; l < s.length; ++l) {
            const std::size_t i = base + l * s.inner;
            dot += static_cast<double>(dy[i]) * y[i];
          }
          for (std::size_t l = 0; l < s.length; ++l) {
            const std::size_t i = base + l * s.inner;
            g[i] += static_cast<T>(y[i] * (dy[i] - dot));
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  double acc = 0.0;
  for (auto v : x.data()) acc += v;
  BasicTensor<T> out = BasicTensor<T>::scalar(static_cast<T>(acc));
  if (tracks<T>({&x})) {
    record(out, [xs = x.storage(), os = out.storage()] {
      if (os->grad.empty()) return;
      auto g = xs->grad_buffer();
      for (auto& v : g) v += os->grad[0];
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x) {
  if (x.numel() == 0) throw DimensionError("mean of empty tensor");
  const T inv = static_cast<T>(1.0 / static_cast<double>(x.numel()));
  double acc = 0.0;
  for (auto v : x.data()) acc += v;
  BasicTensor<T> out = BasicTensor<T>::scalar(static_cast<T>(acc / static_cast<double>(x.numel())));
  if (tracks<T>({&x})) {
    record(out, [xs = x.storage(), os = out.storage(), inv] {
      if (os->grad.empty()) return;
      auto g = xs->grad_buffer();
      for (auto& v : g) v += os->grad[0] * inv;
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& logits, std::span<const int> labels) {
  std::size_t rows = 0, classes = 0;
  if (logits.rank() == 1) {
    rows = 1;
    classes = logits.dim(0);
  } else if (logits.rank() == 2) {
    rows = logits.dim(0);
    classes = logits.dim(1);
  } else {
    throw DimensionError("cross_entropy: logits must be [C] or [N x C], got " + shape_str(logits.shape()));
  }
  if (labels.size() != rows || rows == 0) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                         shape_str(logits.shape()));
  }
  std::vector<double> probs(rows * classes);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw DataError("cross_entropy: label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
    }
    const T* z = logits.ptr() + r * classes;
    double mx = -INFINITY;
    for (std::size_t c = 0; c < classes; ++c) mx = std::max(mx, static_cast<double>(z[c]));
    double s = 0.0;
    for (std::size_t c = 0; c < classes; ++c) s += std::exp(z[c] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t c = 0; c < classes; ++c) probs[r * classes + c] = std::exp(z[c] - lse);
    total += lse - z[y];
  }
  BasicTensor<T> out = BasicTensor<T>::scalar(static_cast<T>(total / static_cast<double>(rows)));
  check_finite(out, "cross_entropy");
  if (tracks<T>({&logits})) {
    std::vector<int> ys(labels.begin(), labels.end());
    record(out, [ls = logits.storage(), os = out.storage(), probs = std::move(probs), ys = std::move(ys), rows,
                 classes] {
      if (os->grad.empty()) return;
      const double upstream = static_cast<double>(os->grad[0]) / static_cast<double>(rows);
      auto g = ls->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < classes; ++c) {
          const double onehot = static_cast<int>(c) == ys[r] ? 1.0 : 0.0;
          g[r * classes + c] += static_cast<T>((probs[r * classes + c] - onehot) * upstream);
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shape manipulation

template <typename T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& parts, std::size_t axis) {
  std::vector<const BasicTensor<T>*> used;
  for (const auto& p : parts)
    if (p.numel() > 0) used.push_back(&p);
  if (used.empty()) return parts.empty() ? BasicTensor<T>() : parts.front();

  Shape shape = used.front()->shape();
  if (axis >= shape.size()) {
    throw DimensionError("concat: axis " + std::to_string(axis) + " out of range for " + shape_str(shape));
  }
  shape[axis] = 0;
  for (const auto* p : used) {
    Shape probe = p->shape();
    if (probe.size() != shape.size()) {
      throw DimensionError("concat: incompatible shapes " + shape_str(used.front()->shape()) + " and " +
                           shape_str(p->shape()));
    }
    shape[axis] += probe[axis];
    probe[axis] = used.front()->shape()[axis];
    if (probe != used.front()->shape()) {
      throw DimensionError("concat: incompatible shapes " + shape_str(used.front()->shape()) + " and " +
                           shape_str(p->shape()));
    }
  }
  const AxisSplit whole = split_axis(shape, axis);
  BasicTensor<T> out(shape);
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto* p : used) {
    offsets.push_back(offset);
    const std::size_t chunk = p->dim(axis) * whole.inner;
    for (std::size_t o = 0; o < whole.outer; ++o) {
      std::copy_n(p->ptr() + o * chunk, chunk, out.ptr() + o * whole.length * whole.inner + offset);
    }
    offset += chunk;
  }

  bool any = false;
  if (active_tape()) {
    for (const auto* p : used) any = any || p->requires_grad();
  }
  if (any) {
    std::vector<StoragePtr<T>> stores;
    for (const auto* p : used) stores.push_back(p->storage());
    record(out, [stores = std::move(stores), offsets = std::move(offsets), os = out.storage(), whole, axis] {
      if (os->grad.empty()) return;
      for (std::size_t k = 0; k < stores.size(); ++k) {
        auto& s = stores[k];
        if (!s->requires_grad) continue;
        const std::size_t chunk = s->shape[axis] * whole.inner;
        auto g = s->grad_buffer();
        for (std::size_t o = 0; o < whole.outer; ++o) {
          const T* src = os->grad.data() + o * whole.length * whole.inner + offsets[k];
          for (std::size_t i = 0; i < chunk; ++i) g[o * chunk + i] += src[i];
        }
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> slice(const BasicTensor<T>& x, std::size_t axis, std::size_t begin, std::size_t length) {
  if (axis >= x.rank() || begin + length > x.dim(axis)) {
    throw DimensionError("slice [" + std::to_string(begin) + ", " + std::to_string(begin + length) + ") on axis " +
                         std::to_string(axis) + " of " + shape_str(x.shape()));
  }
  const AxisSplit s = split_axis(x.shape(), axis);
  Shape shape = x.shape();
  shape[axis] = length;
  BasicTensor<T> out(shape);
  const std::size_t chunk = length * s.inner;
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(x.ptr() + o * s.length * s.inner + begin * s.inner, chunk, out.ptr() + o * chunk);
  }
  if (tracks<T>({&x})) {
    record(out, [xs = x.storage(), os = out.storage(), s, begin, chunk] {
      if (os->grad.empty()) return;
      auto g = xs->grad_buffer();
      for (std::size_t o = 0; o < s.outer; ++o) {
        T* dst = g.data() + o * s.length * s.inner + begin * s.inner;
        for (std::size_t i = 0; i < chunk; ++i) dst[i] += os->grad[o * chunk + i];
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> stack(const std::vector<BasicTensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("stack of zero tensors");
  const Shape& item = parts.front().shape();
  for (const auto& p : parts) require_same_shape(item, p.shape(), "stack");
  Shape shape{parts.size()};
  shape.insert(shape.end(), item.begin(), item.end());
  const std::size_t n = parts.front().numel();
  BasicTensor<T> out(shape);
  for (std::size_t k = 0; k < parts.size(); ++k) std::copy_n(parts[k].ptr(), n, out.ptr() + k * n);
  bool any = false;
  if (active_tape()) {
    for (const auto& p : parts) any = any || p.requires_grad();
  }
  if (any) {
    std::vector<StoragePtr<T>> stores;
    for (const auto& p : parts) stores.push_back(p.storage());
    record(out, [stores = std::move(stores), os = out.storage(), n] {
      if (os->grad.empty()) return;
      for (std::size_t k = 0; k < stores.size(); ++k) {
        if (!stores[k]->requires_grad) continue;
        auto g = stores[k]->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) g[i] += os->grad[k * n + i];
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  BasicTensor<T> out(std::move(shape), std::vector<T>(x.data().begin(), x.data().end()));
  if (tracks<T>({&x})) {
    record(out, [xs = x.storage(), os = out.storage()] {
      if (os->grad.empty()) return;
      auto g = xs->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += os->grad[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Convolution

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernels, std::size_t stride,
                      std::size_t padding) {
  if (input.rank() != 3 || kernels.rank() != 4 || kernels.dim(1) != input.dim(0)) {
    throw DimensionError("conv2d: input " + shape_str(input.shape()) + " incompatible with kernels " +
                         shape_str(kernels.shape()));
  }
  if (stride == 0) throw ConfigError("conv2d: stride must be positive");
  const std::size_t cin = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t cout = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
  if (kh > h + 2 * padding || kw > w + 2 * padding) {
    throw DimensionError("conv2d: kernel " + shape_str(kernels.shape()) + " larger than padded input " +
                         shape_str(input.shape()) + " with padding " + std::to_string(padding));
  }
  const std::size_t ho = (h + 2 * padding - kh) / stride + 1;
  const std::size_t wo = (w + 2 * padding - kw) / stride + 1;
  const std::size_t patch = cin * kh * kw;
  const std::size_t positions = ho * wo;

  std::vector<T> cols(patch * positions, T(0));
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t i = 0; i < kh; ++i) {
      for (std::size_t j = 0; j < kw; ++j) {
        T* dst = cols.data() + ((c * kh + i) * kw + j) * positions;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy * stride + i) - static_cast<std::ptrdiff_t>(padding);
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(h)) continue;
          const T* src = input.ptr() + (c * h + static_cast<std::size_t>(y)) * w;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(ox * stride + j) - static_cast<std::ptrdiff_t>(padding);
            if (x < 0 || x >= static_cast<std::ptrdiff_t>(w)) continue;
            dst[oy * wo + ox] = src[x];
          }
        }
      }
    }
  }

  BasicTensor<T> out(Shape{cout, ho, wo});
  gemm_nn(kernels.ptr(), cols.data(), out.ptr(), cout, patch, positions);
  check_finite(out, "conv2d");

  if (tracks<T>({&input, &kernels})) {
    record(out, [is = input.storage(), ks = kernels.storage(), os = out.storage(), cols = std::move(cols), cin, h, w,
                 cout, kh, kw, ho, wo, stride, padding, patch, positions] {
      if (os->grad.empty()) return;
      const T* dy = os->grad.data();
      if (ks->requires_grad) gemm_nt(dy, cols.data(), ks->grad_buffer().data(), cout, positions, patch);
      if (!is->requires_grad) return;
      std::vector<T> dcols(patch * positions, T(0));
      gemm_tn(ks->data.data(), dy, dcols.data(), patch, cout, positions);
      auto g = is->grad_buffer();
      for (std::size_t c = 0; c < cin; ++c) {
        for (std::size_t i = 0; i < kh; ++i) {
          for (std::size_t j = 0; j < kw; ++j) {
            const T* src = dcols.data() + ((c * kh + i) * kw + j) * positions;
            for (std::size_t oy = 0; oy < ho; ++oy) {
              const std::ptrdiff_t y =
                  static_cast<std::ptrdiff_t>(oy * stride + i) - static_cast<std::ptrdiff_t>(padding);
              if (y < 0 || y >= static_cast<std::ptrdiff_t>(h)) continue;
              T* dst = g.data() + (c * h + static_cast<std::size_t>(y)) * w;
              for (std::size_t ox = 0; ox < wo; ++ox) {
                const std::ptrdiff_t x =
                    static_cast<std::ptrdiff_t>(ox * stride + j) - static_cast<std::ptrdiff_t>(padding);
                if (x < 0 || x >= static_cast<std::ptrdiff_t>(w)) continue;
                dst[x] += src[oy * wo + ox];
              }
            }
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x) {
  if (x.rank() != 3 || x.dim(1) == 0 || x.dim(2) == 0) {
    throw DimensionError("global_avg_pool: expected non-empty [C x H x W], got " + shape_str(x.shape()));
  }
  const std::size_t channels = x.dim(0), plane = x.dim(1) * x.dim(2);
  BasicTensor<T> out(Shape{channels});
  for (std::size_t c = 0; c < channels; ++c) {
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) acc += x[c * plane + i];
    out[c] = static_cast<T>(acc / static_cast<double>(plane));
  }
  if (tracks<T>({&x})) {
    record(out, [xs = x.storage(), os = out.storage(), channels, plane] {
      if (os->grad.empty()) return;
      auto g = xs->grad_buffer();
      const double inv = 1.0 / static_cast<double>(plane);
      for (std::size_t c = 0; c < channels; ++c) {
        const T d = static_cast<T>(os->grad[c] * inv);
        for (std::size_t i = 0; i < plane; ++i) g[c * plane + i] += d;
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> embedding(const BasicTensor<T>& table, std::span<const int> ids) {
  if (table.rank() != 2) throw DimensionError("embedding: table must be [V x d], got " + shape_str(table.shape()));
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw DataError("token id " + std::to_string(id) + " out of range for vocabulary of " + std::to_string(vocab));
    }
  }
  BasicTensor<T> out(Shape{ids.size(), d});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    std::copy_n(table.ptr() + static_cast<std::size_t>(ids[r]) * d, d, out.ptr() + r * d);
  }
  if (tracks<T>({&table})) {
    std::vector<int> idv(ids.begin(), ids.end());
    record(out, [ts = table.storage(), os = out.storage(), idv = std::move(idv), d] {
      if (os->grad.empty()) return;
      auto g = ts->grad_buffer();
      for (std::size_t r = 0; r < idv.size(); ++r) {
        T* dst = g.data() + static_cast<std::size_t>(idv[r]) * d;
        for (std::size_t j = 0; j < d; ++j) dst[j] += os->grad[r * d + j];
      }
    });
  }
  return out;
}

#define MMF_INSTANTIATE_OPS(T)                                                                               \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                              \
  template BasicTensor<T> transpose(const BasicTensor<T>&);                                                  \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                                 \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                                 \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                                                   \
  template BasicTensor<T> add_bias(const BasicTensor<T>&, const BasicTensor<T>&);                            \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                                       \
  template BasicTensor<T> gelu(const BasicTensor<T>&);                                                       \
  template BasicTensor<T> layer_norm(const BasicTensor<T>&, double);                                         \
  template BasicTensor<T> layer_norm(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,    \
                                     double);                                                                \
  template BasicTensor<T> channel_layer_norm(const BasicTensor<T>&, const BasicTensor<T>&,                   \
                                             const BasicTensor<T>&, double);                                 \
  template BasicTensor<T> dropout(const BasicTensor<T>&, double, bool, const DropoutKey&);                   \
  template BasicTensor<T> softmax(const BasicTensor<T>&, std::size_t);                                       \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                                        \
  template BasicTensor<T> mean(const BasicTensor<T>&);                                                       \
  template BasicTensor<T> cross_entropy(const BasicTensor<T>&, std::span<const int>);                        \
  template BasicTensor<T> concat(const std::vector<BasicTensor<T>>&, std::size_t);                           \
  template BasicTensor<T> slice(const BasicTensor<T>&, std::size_t, std::size_t, std::size_t);               \
  template BasicTensor<T> stack(const std::vector<BasicTensor<T>>&);                                         \
  template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                                             \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, std::size_t, std::size_t);    \
  template BasicTensor<T> global_avg_pool(const BasicTensor<T>&);                                            \
  template BasicTensor<T> embedding(const BasicTensor<T>&, std::span<const int>);

MMF_INSTANTIATE_OPS(float)
MMF_INSTANTIATE_OPS(double)

}  // namespace mmf
