#pragma once

#include <cstdint>
#include <vector>

#include "mmf/ops.hpp"
#include "mmf/parameters.hpp"
#include "mmf/text_encoder.hpp"

namespace mmf {

struct FusionConfig {
  std::size_t d_text = 64;
  std::size_t d_visual = 64;
  /// Widths of the dense ReLU layers before the output affine. Empty means a
  /// single softmax(W_f x + b_f) layer.
  std::vector<std::size_t> hidden{256};
  double dropout_rate = 0.1;
  std::size_t n_classes = 9;

  void validate() const;
};

template <typename T>
struct Prediction {
  BasicTensor<T> probabilities;  // [C]
  int predicted_class = 0;
  BasicTensor<T> logits;  // [C]
};

/// Early fusion: [f_text; f_visual], text first.
template <typename T>
BasicTensor<T> fuse(const BasicTensor<T>& f_text, const BasicTensor<T>& f_visual, const FusionConfig& config);

/// Softmax of logits [C]; argmax ties resolve to the lowest class index.
template <typename T>
Prediction<T> predict_from_logits(const BasicTensor<T>& logits);

/// -log p[label] through log-sum-exp on the prediction's logits.
template <typename T>
BasicTensor<T> cross_entropy(const Prediction<T>& pred, int label);

/// Dense classifier over a joint (or unimodal) feature vector.
template <typename T>
class FusionHead {
 public:
  FusionHead(FusionConfig config, std::size_t input_dim, std::uint64_t seed);
  FusionHead(FusionConfig config, std::size_t input_dim, ParameterSet<T> params);

  /// features [B x input_dim] (or [input_dim]) -> logits [B x C] (or [C]).
  BasicTensor<T> logits(const BasicTensor<T>& features, bool training, const DropoutContext& ctx) const;
  Prediction<T> classify(const BasicTensor<T>& f_joint, bool training, const DropoutContext& ctx) const;

  const FusionConfig& config() const { return config_; }
  std::size_t input_dim() const { return input_dim_; }
  ParameterSet<T>& parameters() { return params_; }
  const ParameterSet<T>& parameters() const { return params_; }

  template <typename U>
  FusionHead<U> cast() const {
    ParameterSet<U> p;
    for (const auto& item : params_.items()) p.add(item.name, item.tensor.template cast<U>(), item.group);
    return FusionHead<U>(config_, input_dim_, std::move(p));
  }

 private:
  std::vector<std::size_t> layer_widths() const;

  FusionConfig config_;
  std::size_t input_dim_;
  ParameterSet<T> params_;
};

}  // namespace mmf
