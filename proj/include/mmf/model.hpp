#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mmf/fusion_head.hpp"
#include "mmf/text_encoder.hpp"
#include "mmf/vision_encoder.hpp"

namespace mmf {

enum class Modality { kText, kImage, kMultimodal };

std::string to_string(Modality m);
/// Accepts "text", "image", "multimodal"; anything else is a UsageError.
Modality parse_modality(std::string_view s);

inline bool uses_text(Modality m) { return m != Modality::kImage; }
inline bool uses_image(Modality m) { return m != Modality::kText; }

struct ModelConfig {
  Modality modality = Modality::kMultimodal;
  TextEncoderConfig text;
  VisionEncoderConfig vision;
  FusionConfig fusion;

  /// Width of the vector the head sees: d_text, d_visual or their sum.
  std::size_t head_input_dim() const;
  /// Checks the active encoders against the fusion dims.
  void validate() const;
};

/// Text encoder, CNN and head for one modality selection. Unimodal models
/// omit the unused encoder and feed the single feature straight to the head.
template <typename T>
class MultimodalModel {
 public:
  MultimodalModel(ModelConfig config, std::uint64_t seed);
  MultimodalModel(ModelConfig config, std::optional<TextEncoder<T>> text, std::optional<VisionEncoder<T>> vision,
                  FusionHead<T> head);

  /// Head input for one sample. `tokens` / `image` may be null when the
  /// modality does not use them; `image` is the standardized [3 x R x R].
  BasicTensor<T> features(const TokenSequence* tokens, const BasicTensor<T>* image, bool training,
                          const DropoutContext& ctx) const;

  /// Inference without recording gradients.
  Prediction<T> predict(const TokenSequence* tokens, const BasicTensor<T>* image) const;

  const ModelConfig& config() const { return config_; }
  const FusionHead<T>& head() const { return head_; }
  const std::optional<TextEncoder<T>>& text_encoder() const { return text_; }
  const std::optional<VisionEncoder<T>>& vision_encoder() const { return vision_; }

  /// Every trainable tensor, text encoder first, then CNN, then head.
  std::vector<Parameter<T>*> parameters();
  std::vector<const Parameter<T>*> parameters() const;

  /// Copies parameter values from another model with identical layout.
  void load_values(const MultimodalModel& other);

  template <typename U>
  MultimodalModel<U> cast() const {
    std::optional<TextEncoder<U>> t;
    std::optional<VisionEncoder<U>> v;
    if (text_) t.emplace(text_->template cast<U>());
    if (vision_) v.emplace(vision_->template cast<U>());
    return MultimodalModel<U>(config_, std::move(t), std::move(v), head_.template cast<U>());
  }

 private:
  ModelConfig config_;
  std::optional<TextEncoder<T>> text_;
  std::optional<VisionEncoder<T>> vision_;
  FusionHead<T> head_;
};

/// Writes checkpoint.bin (tensor records) and checkpoint.json (names, shapes,
/// model config) into `dir`.
void save_checkpoint(const std::filesystem::path& dir, const MultimodalModel<float>& model);

/// Accepts the checkpoint directory, or the path of checkpoint.bin / .json
/// inside it.
MultimodalModel<float> load_checkpoint(const std::filesystem::path& path);

/// Resolves `path` to the directory holding checkpoint.bin.
std::filesystem::path checkpoint_dir(const std::filesystem::path& path);

}  // namespace mmf
