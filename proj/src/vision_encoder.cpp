#include "mmf/vision_encoder.hpp"

namespace mmf {

void VisionEncoderConfig::validate() const {
  if (backbone != "resnet-mini") throw ConfigError("vision encoder: unsupported backbone '" + backbone + "'");
  if (widths.empty()) throw ConfigError("vision encoder: widths must not be empty");
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (widths[i] == 0) throw ConfigError("vision encoder: widths must be positive");
    if (i > 0 && widths[i] < widths[i - 1]) throw ConfigError("vision encoder: widths must be nondecreasing");
  }
  if (blocks_per_stage == 0) throw ConfigError("vision encoder: blocks_per_stage must be positive");
  const std::size_t factor = std::size_t{1} << widths.size();
  if (resolution == 0 || resolution % factor != 0) {
    throw ConfigError("vision encoder: resolution " + std::to_string(resolution) + " not divisible by " +
                      std::to_string(factor));
  }
}

namespace {

std::string block_name(std::size_t stage, std::size_t block, const char* leaf) {
  return "vision.stage" + std::to_string(stage) + ".block" + std::to_string(block) + "." + leaf;
}

// The first block of every later stage downsamples, so its skip needs a projection.
bool has_projection(std::size_t stage, std::size_t block) { return block == 0 && stage > 0; }

}  // namespace

template <typename T>
std::vector<typename VisionEncoder<T>::ParamShape> VisionEncoder<T>::layout() const {
  const auto& w = config_.widths;
  std::vector<ParamShape> out;
  out.push_back({"vision.stem.conv", {w[0], 3, 3, 3}});
  out.push_back({"vision.stem.norm.gamma", {w[0]}});
  out.push_back({"vision.stem.norm.beta", {w[0]}});
  for (std::size_t s = 0; s < w.size(); ++s) {
    for (std::size_t b = 0; b < config_.blocks_per_stage; ++b) {
      const std::size_t in = (b == 0 && s > 0) ? w[s - 1] : w[s];
      out.push_back({block_name(s, b, "conv1"), {w[s], in, 3, 3}});
      out.push_back({block_name(s, b, "norm1.gamma"), {w[s]}});
      out.push_back({block_name(s, b, "norm1.beta"), {w[s]}});
      out.push_back({block_name(s, b, "conv2"), {w[s], w[s], 3, 3}});
      out.push_back({block_name(s, b, "norm2.gamma"), {w[s]}});
      out.push_back({block_name(s, b, "norm2.beta"), {w[s]}});
      if (has_projection(s, b)) out.push_back({block_name(s, b, "proj"), {w[s], in, 1, 1}});
    }
  }
  return out;
}

template <typename T>
VisionEncoder<T>::VisionEncoder(VisionEncoderConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  auto engine = keyed_engine({seed, 0x715});
  for (const auto& [name, shape] : layout()) {
    if (shape.size() == 4) {
      const std::size_t k = shape[2] * shape[3];
      params_.add(name, xavier_uniform<T>(shape, shape[1] * k, shape[0] * k, engine), ParamGroup::kEncoder);
    } else if (name.ends_with("gamma")) {
      params_.add(name, BasicTensor<T>::filled(shape, T(1)), ParamGroup::kEncoder);
    } else {
      params_.add(name, BasicTensor<T>(shape), ParamGroup::kEncoder);
    }
  }
}

template <typename T>
VisionEncoder<T>::VisionEncoder(VisionEncoderConfig config, ParameterSet<T> params)
    : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
  for (const auto& [name, shape] : layout()) {
    const auto& t = params_.get(name);
    if (t.shape() != shape) {
      throw DimensionError("parameter " + name + " has shape " + shape_str(t.shape()) + " but config implies " +
                           shape_str(shape));
    }
  }
}

template <typename T>
BasicTensor<T> VisionEncoder<T>::encode(const BasicTensor<T>& x, bool /*training*/) const {
  const std::size_t r = config_.resolution;
  if (x.rank() != 3 || x.dim(0) != 3 || x.dim(1) != r || x.dim(2) != r) {
    throw DataError("vision encoder: expected image [3x" + std::to_string(r) + "x" + std::to_string(r) + "], got " +
                    shape_str(x.shape()));
  }
  const double eps = config_.norm_epsilon;
  auto p = [&](const std::string& name) -> const BasicTensor<T>& { return params_.get(name); };

  auto h = conv2d(x, p("vision.stem.conv"), 1, 1);
  h = relu(channel_layer_norm(h, p("vision.stem.norm.gamma"), p("vision.stem.norm.beta"), eps));
  const auto& w = config_.widths;
  for (std::size_t s = 0; s < w.size(); ++s) {
    for (std::size_t b = 0; b < config_.blocks_per_stage; ++b) {
      const std::size_t stride = (b == 0 && s > 0) ? 2 : 1;
      auto y = conv2d(h, p(block_name(s, b, "conv1")), stride, 1);
      y = relu(channel_layer_norm(y, p(block_name(s, b, "norm1.gamma")), p(block_name(s, b, "norm1.beta")), eps));
      y = conv2d(y, p(block_name(s, b, "conv2")), 1, 1);
      y = channel_layer_norm(y, p(block_name(s, b, "norm2.gamma")), p(block_name(s, b, "norm2.beta")), eps);
      auto skip = has_projection(s, b) ? conv2d(h, p(block_name(s, b, "proj")), stride, 0) : h;
      h = relu(add(y, skip));
    }
  }
  return global_avg_pool(h);
}

template class VisionEncoder<float>;
template class VisionEncoder<double>;

}  // namespace mmf
