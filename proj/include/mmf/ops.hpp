#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mmf/tensor.hpp"

namespace mmf {

/// Key for a dropout mask. Masks are a pure function of
/// (seed, site, step, sample) and the element index, so re-running a forward
/// pass with the same key reproduces the mask exactly.
struct DropoutKey {
  std::uint64_t seed = 0;
  std::uint64_t site = 0;
  std::uint64_t step = 0;
  std::uint64_t sample = 0;
};

// Linear algebra
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& a);

// Elementwise
template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor);
/// x[..., n] + bias[n], broadcast over every leading axis.
template <typename T>
BasicTensor<T> add_bias(const BasicTensor<T>& x, const BasicTensor<T>& bias);
template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x);
/// Exact (erf) GELU.
template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& x);

// Normalization
/// Normalizes over the last axis; no affine parameters.
template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, double epsilon);
/// Normalizes over the last axis, then applies gamma/beta of that axis' size.
template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                          const BasicTensor<T>& beta, double epsilon);
/// Layer-style norm of a [C x H x W] feature map: statistics over the whole
/// map, per-channel gamma/beta. Independent of batch composition.
template <typename T>
BasicTensor<T> channel_layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                                  const BasicTensor<T>& beta, double epsilon);

/// Inverted dropout. Identity when !training or rate == 0.
template <typename T>
BasicTensor<T> dropout(const BasicTensor<T>& x, double rate, bool training, const DropoutKey& key);

// Reductions and probability
template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& x, std::size_t axis);
template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x);
/// Mean cross-entropy of logits [N x C] (or [C]) against integer labels,
/// computed through log-sum-exp.
template <typename T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& logits, std::span<const int> labels);

// Shape manipulation
template <typename T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& parts, std::size_t axis);
template <typename T>
BasicTensor<T> concat(const BasicTensor<T>& a, const BasicTensor<T>& b, std::size_t axis) {
  return concat(std::vector<BasicTensor<T>>{a, b}, axis);
}
template <typename T>
BasicTensor<T> slice(const BasicTensor<T>& x, std::size_t axis, std::size_t begin, std::size_t length);
/// Stacks equally shaped tensors along a new leading axis.
template <typename T>
BasicTensor<T> stack(const std::vector<BasicTensor<T>>& parts);
template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape);

// Convolutional
/// Cross-correlation of input [C_in x H x W] with kernels [C_out x C_in x kh x kw].
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernels, std::size_t stride,
                      std::size_t padding);
/// [C x H x W] -> [C]
template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x);

/// Rows of table [V x d] selected by ids -> [L x d].
template <typename T>
BasicTensor<T> embedding(const BasicTensor<T>& table, std::span<const int> ids);

}  // namespace mmf
