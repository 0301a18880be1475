#include "mmf/fusion_head.hpp"

#include <string>

namespace mmf {

void FusionConfig::validate() const {
  if (n_classes < 2) throw ConfigError("fusion: n_classes must be at least 2");
  if (d_text == 0 || d_visual == 0) throw ConfigError("fusion: feature dims must be positive");
  for (auto h : hidden) {
    if (h == 0) throw ConfigError("fusion: hidden widths must be positive");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("fusion: dropout_rate outside [0, 1)");
}

template <typename T>
BasicTensor<T> fuse(const BasicTensor<T>& f_text, const BasicTensor<T>& f_visual, const FusionConfig& config) {
  if (f_text.rank() != 1 || f_text.numel() != config.d_text || f_visual.rank() != 1 ||
      f_visual.numel() != config.d_visual) {
    throw ConfigError("fuse: got text " + shape_str(f_text.shape()) + " and visual " + shape_str(f_visual.shape()) +
                      ", configured d_text=" + std::to_string(config.d_text) +
                      " d_visual=" + std::to_string(config.d_visual));
  }
  return concat(f_text, f_visual, 0);
}

template <typename T>
Prediction<T> predict_from_logits(const BasicTensor<T>& logits) {
  if (logits.rank() != 1 || logits.numel() == 0) {
    throw DimensionError("prediction needs logits [C], got " + shape_str(logits.shape()));
  }
  Prediction<T> pred;
  pred.logits = logits;
  pred.probabilities = softmax(logits, 0);
  int best = 0;
  for (std::size_t c = 1; c < logits.numel(); ++c) {
    if (pred.probabilities[c] > pred.probabilities[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
  }
  pred.predicted_class = best;
  return pred;
}

template <typename T>
BasicTensor<T> cross_entropy(const Prediction<T>& pred, int label) {
  const int labels[] = {label};
  return cross_entropy(pred.logits, std::span<const int>(labels));
}

namespace {
constexpr std::uint64_t kSiteFusion = 3000;

std::string layer_param(std::size_t index, std::size_t count, const char* leaf) {
  if (index + 1 == count) return std::string("fusion.output.") + leaf;
  return "fusion.hidden" + std::to_string(index) + "." + leaf;
}
}  // namespace

template <typename T>
std::vector<std::size_t> FusionHead<T>::layer_widths() const {
  std::vector<std::size_t> widths{input_dim_};
  widths.insert(widths.end(), config_.hidden.begin(), config_.hidden.end());
  widths.push_back(config_.n_classes);
  return widths;
}

template <typename T>
FusionHead<T>::FusionHead(FusionConfig config, std::size_t input_dim, std::uint64_t seed)
    : config_(std::move(config)), input_dim_(input_dim) {
  config_.validate();
  if (input_dim_ == 0) throw ConfigError("fusion: input dim must be positive");
  auto engine = keyed_engine({seed, 0xf05e});
  const auto widths = layer_widths();
  const std::size_t layers = widths.size() - 1;
  for (std::size_t i = 0; i < layers; ++i) {
    params_.add(layer_param(i, layers, "weight"),
                xavier_uniform<T>({widths[i], widths[i + 1]}, widths[i], widths[i + 1], engine), ParamGroup::kFusion);
    params_.add(layer_param(i, layers, "bias"), BasicTensor<T>({widths[i + 1]}), ParamGroup::kFusion);
  }
}

template <typename T>
FusionHead<T>::FusionHead(FusionConfig config, std::size_t input_dim, ParameterSet<T> params)
    : config_(std::move(config)), input_dim_(input_dim), params_(std::move(params)) {
  config_.validate();
  const auto widths = layer_widths();
  const std::size_t layers = widths.size() - 1;
  for (std::size_t i = 0; i < layers; ++i) {
    const auto& w = params_.get(layer_param(i, layers, "weight"));
    const auto& b = params_.get(layer_param(i, layers, "bias"));
    if (w.shape() != Shape{widths[i], widths[i + 1]} || b.shape() != Shape{widths[i + 1]}) {
      throw DimensionError("fusion layer " + std::to_string(i) + " weight " + shape_str(w.shape()) +
                           " does not match configured [" + std::to_string(widths[i]) + "x" +
                           std::to_string(widths[i + 1]) + "]");
    }
  }
}

template <typename T>
BasicTensor<T> FusionHead<T>::logits(const BasicTensor<T>& features, bool training, const DropoutContext& ctx) const {
  const bool single = features.rank() == 1;
  auto h = single ? reshape(features, Shape{1, features.numel()}) : features;
  if (h.rank() != 2 || h.dim(1) != input_dim_) {
    throw DimensionError("fusion head expects features of width " + std::to_string(input_dim_) + ", got " +
                         shape_str(features.shape()));
  }
  const std::size_t layers = config_.hidden.size() + 1;
  for (std::size_t i = 0; i < layers; ++i) {
    h = dropout(h, config_.dropout_rate, training, ctx.key(kSiteFusion + i));
    h = add_bias(matmul(h, params_.get(layer_param(i, layers, "weight"))),
                 params_.get(layer_param(i, layers, "bias")));
    if (i + 1 < layers) h = relu(h);
  }
  return single ? reshape(h, Shape{config_.n_classes}) : h;
}

template <typename T>
Prediction<T> FusionHead<T>::classify(const BasicTensor<T>& f_joint, bool training, const DropoutContext& ctx) const {
  if (f_joint.rank() != 1) throw DimensionError("classify expects one feature vector, got " + shape_str(f_joint.shape()));
  return predict_from_logits(logits(f_joint, training, ctx));
}

template BasicTensor<float> fuse(const BasicTensor<float>&, const BasicTensor<float>&, const FusionConfig&);
template BasicTensor<double> fuse(const BasicTensor<double>&, const BasicTensor<double>&, const FusionConfig&);
template Prediction<float> predict_from_logits(const BasicTensor<float>&);
template Prediction<double> predict_from_logits(const BasicTensor<double>&);
template BasicTensor<float> cross_entropy(const Prediction<float>&, int);
template BasicTensor<double> cross_entropy(const Prediction<double>&, int);
template class FusionHead<float>;
template class FusionHead<double>;

}  // namespace mmf
