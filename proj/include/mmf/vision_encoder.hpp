#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmf/ops.hpp"
#include "mmf/parameters.hpp"

namespace mmf {

struct VisionEncoderConfig {
  std::string backbone = "resnet-mini";
  std::vector<std::size_t> widths{16, 32, 64};
  std::size_t blocks_per_stage = 1;
  std::size_t resolution = 32;
  double norm_epsilon = 1e-5;

  std::size_t d_visual() const { return widths.empty() ? 0 : widths.back(); }
  void validate() const;
};

/// Miniature residual CNN: 3x3 stem, stages of basic residual blocks with a
/// stride-2 transition (1x1 projection on the skip) between stages, then
/// global average pooling. No classification head.
template <typename T>
class VisionEncoder {
 public:
  VisionEncoder(VisionEncoderConfig config, std::uint64_t seed);
  VisionEncoder(VisionEncoderConfig config, ParameterSet<T> params);

  /// x: standardized image [3 x R x R] -> [d_visual].
  BasicTensor<T> encode(const BasicTensor<T>& x, bool training) const;

  const VisionEncoderConfig& config() const { return config_; }
  ParameterSet<T>& parameters() { return params_; }
  const ParameterSet<T>& parameters() const { return params_; }

  template <typename U>
  VisionEncoder<U> cast() const {
    ParameterSet<U> p;
    for (const auto& item : params_.items()) p.add(item.name, item.tensor.template cast<U>(), item.group);
    return VisionEncoder<U>(config_, std::move(p));
  }

 private:
  struct ParamShape {
    std::string name;
    Shape shape;
  };
  std::vector<ParamShape> layout() const;

  VisionEncoderConfig config_;
  ParameterSet<T> params_;
};

}  // namespace mmf
