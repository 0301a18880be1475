#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mmf/ops.hpp"
#include "mmf/parameters.hpp"
#include "mmf/text_pipeline.hpp"

namespace mmf {

struct TextEncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t n_layers = 2;
  std::size_t d_ff = 256;
  std::size_t max_len = 64;
  double dropout_rate = 0.1;
  double layer_norm_epsilon = 1e-5;

  std::size_t d_k() const { return d_model / n_heads; }
  void validate() const;
};

/// Identifies one forward pass for dropout masks: training seed, optimizer
/// step and the sample's position in the batch.
struct DropoutContext {
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::uint64_t sample = 0;

  DropoutKey key(std::uint64_t site) const { return {seed, site, step, sample}; }
};

/// Sinusoidal table [max_len x d_model]:
/// even columns sin(pos / 10000^(2i/d)), odd columns cos of the same angle.
template <typename T>
BasicTensor<T> positional_encoding(std::size_t max_len, std::size_t d_model);

/// Additive attention bias per key: 0 for real tokens, -1e9 for padding.
template <typename T>
BasicTensor<T> mask_bias(std::span<const int> attention_mask);

/// Row-stochastic weights softmax(Q K^T / sqrt(d_k) + bias) [L x L].
template <typename T>
BasicTensor<T> attention_weights(const BasicTensor<T>& q, const BasicTensor<T>& k, std::span<const int> mask);

/// Scaled dot-product attention over one head: weights(Q, K) V -> [L x d_k].
template <typename T>
BasicTensor<T> attention(const BasicTensor<T>& q, const BasicTensor<T>& k, const BasicTensor<T>& v,
                         std::span<const int> mask);

/// Pre-norm transformer encoder; the sequence representation is the final
/// hidden state at the [CLS] position.
template <typename T>
class TextEncoder {
 public:
  TextEncoder(TextEncoderConfig config, std::uint64_t seed);
  TextEncoder(TextEncoderConfig config, ParameterSet<T> params);

  /// [d_model] feature for one sequence.
  BasicTensor<T> encode(const TokenSequence& seq, bool training, const DropoutContext& ctx) const;

  const TextEncoderConfig& config() const { return config_; }
  ParameterSet<T>& parameters() { return params_; }
  const ParameterSet<T>& parameters() const { return params_; }

  template <typename U>
  TextEncoder<U> cast() const {
    ParameterSet<U> p;
    for (const auto& item : params_.items()) p.add(item.name, item.tensor.template cast<U>(), item.group);
    return TextEncoder<U>(config_, std::move(p));
  }

 private:
  void check_shapes() const;

  TextEncoderConfig config_;
  ParameterSet<T> params_;
  BasicTensor<T> pe_;
};

}  // namespace mmf
